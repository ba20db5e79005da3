#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "doctrans/attention.hpp"
#include "doctrans/corpus.hpp"
#include "doctrans/decode_session.hpp"
#include "doctrans/dls.hpp"
#include "doctrans/errors.hpp"
#include "doctrans/metrics.hpp"

namespace doctrans {

struct LaaToggles {
    bool encoder_self = true;
    bool decoder_self = true;
    bool decoder_cross = true;
};

struct ModelConfig {
    int layers = 2;
    int heads = 4;
    int d_model = 64;
    int d_ff = 256;
    int vocab = 64;
    int max_positions = 128;  // hard positional capacity; may exceed trained lengths
    double dropout = 0.1;
    ScaleMode scale_mode = ScaleMode::baseline;
    LaaToggles laa;  // which sublayers apply the length-aware scale

    int d_k() const { return d_model / heads; }
    void validate() const;
};

struct LayerNormParams {
    Eigen::RowVectorXd gain, bias;
};

struct AttentionParams {
    Eigen::MatrixXd wq, wk, wv, wo;  // all d_model x d_model
};

struct FeedForwardParams {
    Eigen::MatrixXd w1, w2;          // d_model x d_ff, d_ff x d_model
    Eigen::RowVectorXd b1, b2;
};

struct EncoderLayerParams {
    AttentionParams self_attn;
    LayerNormParams ln_attn;
    FeedForwardParams ffn;
    LayerNormParams ln_ffn;
};

struct DecoderLayerParams {
    AttentionParams self_attn;
    LayerNormParams ln_self;
    AttentionParams cross_attn;
    LayerNormParams ln_cross;
    FeedForwardParams ffn;
    LayerNormParams ln_ffn;
};

struct Parameters {
    Eigen::MatrixXd tok_embed;  // vocab x d_model (shared by encoder and decoder)
    Eigen::MatrixXd pos_embed;  // max_positions x d_model
    std::vector<EncoderLayerParams> encoder;
    std::vector<DecoderLayerParams> decoder;
    Eigen::MatrixXd out_proj;   // d_model x vocab, no bias

    // Visits every tensor in a stable order; f(name, tensor) where tensor is
    // (const) MatrixXd& or RowVectorXd&.
    template <class F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <class F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    static Parameters zeros_like(const ModelConfig& config);
    static Parameters random_init(const ModelConfig& config, std::uint64_t seed);

private:
    template <class Self, class F>
    static void visit_impl(Self& self, F&& f) {
        f("tok_embed", self.tok_embed);
        f("pos_embed", self.pos_embed);
        for (std::size_t i = 0; i < self.encoder.size(); ++i) {
            const std::string p = "enc." + std::to_string(i) + ".";
            auto& l = self.encoder[i];
            f(p + "self.wq", l.self_attn.wq);
            f(p + "self.wk", l.self_attn.wk);
            f(p + "self.wv", l.self_attn.wv);
            f(p + "self.wo", l.self_attn.wo);
            f(p + "ln_attn.gain", l.ln_attn.gain);
            f(p + "ln_attn.bias", l.ln_attn.bias);
            f(p + "ffn.w1", l.ffn.w1);
            f(p + "ffn.b1", l.ffn.b1);
            f(p + "ffn.w2", l.ffn.w2);
            f(p + "ffn.b2", l.ffn.b2);
            f(p + "ln_ffn.gain", l.ln_ffn.gain);
            f(p + "ln_ffn.bias", l.ln_ffn.bias);
        }
        for (std::size_t i = 0; i < self.decoder.size(); ++i) {
            const std::string p = "dec." + std::to_string(i) + ".";
            auto& l = self.decoder[i];
            f(p + "self.wq", l.self_attn.wq);
            f(p + "self.wk", l.self_attn.wk);
            f(p + "self.wv", l.self_attn.wv);
            f(p + "self.wo", l.self_attn.wo);
            f(p + "ln_self.gain", l.ln_self.gain);
            f(p + "ln_self.bias", l.ln_self.bias);
            f(p + "cross.wq", l.cross_attn.wq);
            f(p + "cross.wk", l.cross_attn.wk);
            f(p + "cross.wv", l.cross_attn.wv);
            f(p + "cross.wo", l.cross_attn.wo);
            f(p + "ln_cross.gain", l.ln_cross.gain);
            f(p + "ln_cross.bias", l.ln_cross.bias);
            f(p + "ffn.w1", l.ffn.w1);
            f(p + "ffn.b1", l.ffn.b1);
            f(p + "ffn.w2", l.ffn.w2);
            f(p + "ffn.b2", l.ffn.b2);
            f(p + "ln_ffn.gain", l.ln_ffn.gain);
            f(p + "ln_ffn.bias", l.ln_ffn.bias);
        }
        f("out_proj", self.out_proj);
    }
};

// Flat, named view over every parameter tensor, in visit order.
struct ParamView {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    double* data = nullptr;
    Eigen::Index size() const { return rows * cols; }
};

struct ConstParamView {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    const double* data = nullptr;
    Eigen::Index size() const { return rows * cols; }
};

std::vector<ParamView> param_views(Parameters& params);
std::vector<ConstParamView> param_views(const Parameters& params);

struct EpochLog {
    int epoch = 0;        // 1-based
    double loss = 0.0;    // mean smoothed NLL per non-pad target token
    double temperature = 0.0;  // 0 when length resampling is off
    double iota = 0.0;
};

struct ModelCheckpoint {
    ModelConfig config;
    Parameters params;
    double iota = 0.0;      // final-epoch average segment length
    int train_max_len = 0;  // training-time segment budget cap
    std::vector<EpochLog> training_log;
};

// Teacher-forcing batch: row b of each id matrix is one sequence, PAD-filled
// to the right; masks mark real tokens; position k of tgt_out is the label
// predicted from tgt_in[0..k].
struct Batch {
    using IdMatrix = Eigen::Matrix<TokenId, Eigen::Dynamic, Eigen::Dynamic>;

    IdMatrix src, tgt_in, tgt_out;
    BoolArray src_mask, tgt_mask;
    BoolArray causal;  // (max tgt len)^2 lower-triangular

    static Batch make(std::span<const std::pair<std::vector<TokenId>, std::vector<TokenId>>>
                          encoded_pairs);

    int size() const { return static_cast<int>(src.rows()); }
    long src_len(int b) const;
    long tgt_len(int b) const;
};

// Per-sequence log-probability rows, shape (padded tgt len x vocab); PAD rows
// are uniform. Dropout is off; rows are exact log-distributions.
std::vector<Eigen::MatrixXd> forward(const ModelCheckpoint& checkpoint, const Batch& batch);

// Label-smoothed NLL averaged over non-pad target positions.
double loss(const std::vector<Eigen::MatrixXd>& log_probs, const Batch& batch,
            double smoothing = 0.1);

// Mean smoothed NLL over the batch's non-pad target positions; `grads` is
// overwritten with the parameter gradients of that mean (dropout off).
double batch_loss_and_grads(const ModelCheckpoint& checkpoint, const Batch& batch,
                            double smoothing, Parameters& grads);

struct TrainConfig {
    int epochs = 12;
    double gamma = 5.0;  // epoch offset of the length-temperature schedule
    int max_len = 128;   // per-segment encoded-token budget cap
    bool dls = true;     // per-epoch length resampling vs one fixed packing
    std::uint64_t seed = 0;
    double lr = 5e-4;
    int warmup_steps = 40;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-9;
    double label_smoothing = 0.1;
    long batch_token_budget = 512;  // target tokens accumulated per optimizer step
};

struct TrainHooks {
    // Called once per epoch with the segment plan before training on it.
    std::function<void(const EpochData&)> on_epoch_data;
    std::function<void(const EpochLog&)> on_epoch_done;
};

ModelCheckpoint train(const std::vector<Document>& corpus, const ModelConfig& model_config,
                      const TrainConfig& train_config, const TrainHooks& hooks = {});

// Max relative error between analytic and central-finite-difference gradients
// over >= sample_count randomly chosen parameters (plus one per tensor).
double grad_check(const ModelConfig& config, std::uint64_t seed, int sample_count = 200);

// Sum of per-token log-probabilities of the encoded target under teacher
// forcing (positions 1..end, i.e. everything after BOS).
double sequence_logprob(const ModelCheckpoint& checkpoint, std::span<const TokenId> src,
                        std::span<const TokenId> tgt);

// Scores a contrastive candidate by total target log-probability given the
// whole source document.
CandidateScorer contrastive_scorer(const ModelCheckpoint& checkpoint);

// Same, but both sides are truncated to the sentence holding the ambiguous
// token — the sentence-level baseline that cannot see the cue context.
CandidateScorer context_blind_scorer(const ModelCheckpoint& checkpoint);

// Incremental decoding context; the checkpoint must outlive the session.
std::unique_ptr<DecodeSession> make_decode_session(const ModelCheckpoint& checkpoint,
                                                   std::span<const TokenId> encoded_source);

// Binary container: magic, version, JSON header (config, iota, training log,
// tensor directory), then raw little-endian doubles. Layout in README.
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

}  // namespace doctrans
