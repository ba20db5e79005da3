#include "doctrans/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "doctrans/rng.hpp"

namespace doctrans {

namespace {

constexpr double kLnEps = 1e-5;
constexpr char kCheckpointMagic[8] = {'D', 'T', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void ModelConfig::validate() const {
    require(layers >= 1, "model needs at least one layer per stack");
    require(heads >= 1, "model needs at least one attention head");
    require(d_model >= 1 && d_ff >= 1, "model widths must be positive");
    require(d_model % heads == 0, "d_model must be divisible by heads");
    require(vocab > kNumReserved, "vocab must exceed the reserved ids");
    require(max_positions >= 2, "positional capacity must be at least 2");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
}

namespace {

LayerNormParams make_ln(int d) {
    LayerNormParams ln;
    ln.gain = Eigen::RowVectorXd::Zero(d);
    ln.bias = Eigen::RowVectorXd::Zero(d);
    return ln;
}

AttentionParams make_attn(int d) {
    AttentionParams a;
    a.wq = Eigen::MatrixXd::Zero(d, d);
    a.wk = Eigen::MatrixXd::Zero(d, d);
    a.wv = Eigen::MatrixXd::Zero(d, d);
    a.wo = Eigen::MatrixXd::Zero(d, d);
    return a;
}

FeedForwardParams make_ffn(int d, int d_ff) {
    FeedForwardParams f;
    f.w1 = Eigen::MatrixXd::Zero(d, d_ff);
    f.b1 = Eigen::RowVectorXd::Zero(d_ff);
    f.w2 = Eigen::MatrixXd::Zero(d_ff, d);
    f.b2 = Eigen::RowVectorXd::Zero(d);
    return f;
}

}  // namespace

Parameters Parameters::zeros_like(const ModelConfig& config) {
    config.validate();
    Parameters p;
    p.tok_embed = Eigen::MatrixXd::Zero(config.vocab, config.d_model);
    p.pos_embed = Eigen::MatrixXd::Zero(config.max_positions, config.d_model);
    p.encoder.resize(static_cast<std::size_t>(config.layers));
    for (auto& l : p.encoder) {
        l.self_attn = make_attn(config.d_model);
        l.ln_attn = make_ln(config.d_model);
        l.ffn = make_ffn(config.d_model, config.d_ff);
        l.ln_ffn = make_ln(config.d_model);
    }
    p.decoder.resize(static_cast<std::size_t>(config.layers));
    for (auto& l : p.decoder) {
        l.self_attn = make_attn(config.d_model);
        l.ln_self = make_ln(config.d_model);
        l.cross_attn = make_attn(config.d_model);
        l.ln_cross = make_ln(config.d_model);
        l.ffn = make_ffn(config.d_model, config.d_ff);
        l.ln_ffn = make_ln(config.d_model);
    }
    p.out_proj = Eigen::MatrixXd::Zero(config.d_model, config.vocab);
    return p;
}

namespace {

void xavier_fill(Eigen::MatrixXd& w, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            w(i, j) = (2.0 * rng.next_real() - 1.0) * limit;
        }
    }
}

void gaussian_fill(Eigen::MatrixXd& w, Rng& rng, double std_dev) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.next_gaussian() * std_dev;
    }
}

}  // namespace

Parameters Parameters::random_init(const ModelConfig& config, std::uint64_t seed) {
    Parameters p = zeros_like(config);
    Rng rng(seed);
    p.visit([&rng](const std::string& name, auto& tensor) {
        using T = std::decay_t<decltype(tensor)>;
        if constexpr (std::is_same_v<T, Eigen::MatrixXd>) {
            if (name.ends_with("embed")) {
                gaussian_fill(tensor, rng, 0.02);
            } else {
                xavier_fill(tensor, rng);
            }
        } else if (name.ends_with(".gain")) {
            tensor.setOnes();  // layer norms start as the identity transform
        }
        // bias rows stay 0
    });
    return p;
}

std::vector<ParamView> param_views(Parameters& params) {
    std::vector<ParamView> views;
    params.visit([&views](const std::string& name, auto& tensor) {
        views.push_back({name, tensor.rows(), tensor.cols(), tensor.data()});
    });
    return views;
}

std::vector<ConstParamView> param_views(const Parameters& params) {
    std::vector<ConstParamView> views;
    params.visit([&views](const std::string& name, const auto& tensor) {
        views.push_back({name, tensor.rows(), tensor.cols(), tensor.data()});
    });
    return views;
}

// ---------------------------------------------------------------------------
// sequence-level forward/backward machinery
// ---------------------------------------------------------------------------

namespace {

// Per-epoch dropout stream; inactive when rng is null or rate is 0.
struct DropoutStream {
    Rng* rng = nullptr;
    double rate = 0.0;

    bool active() const { return rng != nullptr && rate > 0.0; }

    Eigen::ArrayXXd mask(Eigen::Index rows, Eigen::Index cols) {
        Eigen::ArrayXXd m(rows, cols);
        const double keep = 1.0 - rate;
        for (Eigen::Index j = 0; j < cols; ++j) {
            for (Eigen::Index i = 0; i < rows; ++i) {
                m(i, j) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
            }
        }
        return m;
    }
};

struct LnCache {
    Eigen::MatrixXd xhat;
    Eigen::VectorXd inv_std;
};

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const LayerNormParams& ln, LnCache& cache) {
    const Eigen::Index d = x.cols();
    cache.xhat.resize(x.rows(), d);
    cache.inv_std.resize(x.rows());
    Eigen::MatrixXd y(x.rows(), d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).mean();
        const double var = (x.row(i).array() - mu).square().mean();
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        cache.inv_std[i] = inv;
        cache.xhat.row(i) = (x.row(i).array() - mu) * inv;
        y.row(i) = cache.xhat.row(i).cwiseProduct(ln.gain) + ln.bias;
    }
    return y;
}

Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& d_y, const LayerNormParams& ln,
                                    const LnCache& cache, Eigen::RowVectorXd& d_gain,
                                    Eigen::RowVectorXd& d_bias) {
    const Eigen::Index d = d_y.cols();
    d_gain += (d_y.array() * cache.xhat.array()).colwise().sum().matrix();
    d_bias += d_y.colwise().sum();
    Eigen::MatrixXd d_x(d_y.rows(), d);
    for (Eigen::Index i = 0; i < d_y.rows(); ++i) {
        const Eigen::RowVectorXd d_xhat = d_y.row(i).cwiseProduct(ln.gain);
        const double s1 = d_xhat.sum();
        const double s2 = d_xhat.cwiseProduct(cache.xhat.row(i)).sum();
        d_x.row(i) = (cache.inv_std[i] / static_cast<double>(d)) *
                     (static_cast<double>(d) * d_xhat.array() - s1 -
                      cache.xhat.row(i).array() * s2)
                         .matrix();
    }
    return d_x;
}

struct FfnCache {
    Eigen::MatrixXd x_in, z, h;  // z pre-activation, h = relu(z)
};

Eigen::MatrixXd ffn_forward(const Eigen::MatrixXd& x, const FeedForwardParams& f,
                            FfnCache& cache) {
    cache.x_in = x;
    cache.z = (x * f.w1).rowwise() + f.b1;
    cache.h = cache.z.cwiseMax(0.0);
    return (cache.h * f.w2).rowwise() + f.b2;
}

Eigen::MatrixXd ffn_backward(const Eigen::MatrixXd& d_y, const FeedForwardParams& f,
                             const FfnCache& cache, FeedForwardParams& grads) {
    grads.w2 += cache.h.transpose() * d_y;
    grads.b2 += d_y.colwise().sum();
    Eigen::MatrixXd d_h = d_y * f.w2.transpose();
    Eigen::MatrixXd d_z =
        (cache.z.array() > 0.0).select(d_h, Eigen::MatrixXd::Zero(d_h.rows(), d_h.cols()));
    grads.w1 += cache.x_in.transpose() * d_z;
    grads.b1 += d_z.colwise().sum();
    return d_z * f.w1.transpose();
}

struct EncLayerCache {
    Eigen::MatrixXd x_in;
    MultiHeadCache<double> attn;
    Eigen::ArrayXXd attn_drop;
    LnCache ln_attn;
    Eigen::MatrixXd y1;
    FfnCache ffn;
    Eigen::ArrayXXd ffn_drop;
    LnCache ln_ffn;
};

struct DecLayerCache {
    Eigen::MatrixXd x_in;
    MultiHeadCache<double> self_attn;
    Eigen::ArrayXXd self_drop;
    LnCache ln_self;
    Eigen::MatrixXd x1;
    MultiHeadCache<double> cross_attn;
    Eigen::ArrayXXd cross_drop;
    LnCache ln_cross;
    Eigen::MatrixXd x2;
    FfnCache ffn;
    Eigen::ArrayXXd ffn_drop;
    LnCache ln_ffn;
};

struct EncCache {
    std::vector<TokenId> ids;
    Eigen::ArrayXXd emb_drop;
    std::vector<EncLayerCache> layers;
    Eigen::MatrixXd memory;
};

struct DecCache {
    std::vector<TokenId> ids;
    Eigen::ArrayXXd emb_drop;
    BoolArray causal;
    std::vector<DecLayerCache> layers;
    Eigen::MatrixXd hidden;
};

// Shared per-forward context: parameters, config, and the epoch's reference
// length for the length-aware scale.
struct SeqContext {
    const Parameters& params;
    const ModelConfig& config;
    double iota = 0.0;
    DropoutStream dropout;

    AttnConfig attn_config(bool laa_enabled, bool per_query) const {
        AttnConfig c;
        c.d_k = config.d_k();
        c.scale_mode =
            (config.scale_mode == ScaleMode::laa && laa_enabled) ? ScaleMode::laa
                                                                 : ScaleMode::baseline;
        c.iota = iota;
        c.per_query_length = per_query;
        return c;
    }
};

Eigen::MatrixXd embed(const SeqContext& ctx, std::span<const TokenId> ids) {
    const ModelConfig& mc = ctx.config;
    require(!ids.empty(), "cannot embed an empty sequence");
    if (static_cast<long>(ids.size()) > mc.max_positions) {
        throw ContractViolation("sequence length " + std::to_string(ids.size()) +
                                " exceeds positional capacity " +
                                std::to_string(mc.max_positions));
    }
    const double scale = std::sqrt(static_cast<double>(mc.d_model));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ids.size()), mc.d_model);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const TokenId id = ids[i];
        require(id >= 0 && id < mc.vocab, "token id outside vocabulary");
        x.row(static_cast<Eigen::Index>(i)) =
            ctx.params.tok_embed.row(id) * scale + ctx.params.pos_embed.row(static_cast<Eigen::Index>(i));
    }
    return x;
}

void embed_backward(const SeqContext& ctx, std::span<const TokenId> ids,
                    const Eigen::MatrixXd& d_x, Parameters& grads) {
    const double scale = std::sqrt(static_cast<double>(ctx.config.d_model));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        grads.tok_embed.row(ids[i]) += d_x.row(row) * scale;
        grads.pos_embed.row(row) += d_x.row(row);
    }
}

Eigen::MatrixXd apply_dropout(SeqContext& ctx, Eigen::MatrixXd x, Eigen::ArrayXXd& mask_out) {
    if (!ctx.dropout.active()) return x;
    mask_out = ctx.dropout.mask(x.rows(), x.cols());
    x.array() *= mask_out;
    return x;
}

Eigen::MatrixXd dropout_backward(const Eigen::ArrayXXd& mask, Eigen::MatrixXd d_y) {
    if (mask.size() == 0) return d_y;
    d_y.array() *= mask;
    return d_y;
}

EncCache encoder_forward(SeqContext& ctx, std::span<const TokenId> src_ids) {
    EncCache cache;
    cache.ids.assign(src_ids.begin(), src_ids.end());
    Eigen::MatrixXd x = apply_dropout(ctx, embed(ctx, src_ids), cache.emb_drop);
    const AttnConfig self_cfg = ctx.attn_config(ctx.config.laa.encoder_self, false);
    cache.layers.resize(ctx.params.encoder.size());
    for (std::size_t li = 0; li < ctx.params.encoder.size(); ++li) {
        const EncoderLayerParams& lp = ctx.params.encoder[li];
        EncLayerCache& lc = cache.layers[li];
        lc.x_in = x;
        lc.attn = multi_head_attention<double>(x, x, lp.self_attn.wq, lp.self_attn.wk,
                                               lp.self_attn.wv, lp.self_attn.wo,
                                               ctx.config.heads, nullptr, self_cfg);
        Eigen::MatrixXd a = apply_dropout(ctx, lc.attn.output, lc.attn_drop);
        lc.y1 = layer_norm(lc.x_in + a, lp.ln_attn, lc.ln_attn);
        Eigen::MatrixXd f = ffn_forward(lc.y1, lp.ffn, lc.ffn);
        f = apply_dropout(ctx, std::move(f), lc.ffn_drop);
        x = layer_norm(lc.y1 + f, lp.ln_ffn, lc.ln_ffn);
    }
    cache.memory = x;
    return cache;
}

// Accumulates parameter gradients and returns d(embedded input) already folded
// into the embedding tables.
void encoder_backward(const SeqContext& ctx, const EncCache& cache, Eigen::MatrixXd d_memory,
                      Parameters& grads) {
    for (std::size_t ri = ctx.params.encoder.size(); ri-- > 0;) {
        const EncoderLayerParams& lp = ctx.params.encoder[ri];
        const EncLayerCache& lc = cache.layers[ri];
        EncoderLayerParams& lg = grads.encoder[ri];

        Eigen::MatrixXd d_res2 =
            layer_norm_backward(d_memory, lp.ln_ffn, lc.ln_ffn, lg.ln_ffn.gain, lg.ln_ffn.bias);
        Eigen::MatrixXd d_f = dropout_backward(lc.ffn_drop, d_res2);
        Eigen::MatrixXd d_y1 = d_res2 + ffn_backward(d_f, lp.ffn, lc.ffn, lg.ffn);

        Eigen::MatrixXd d_res1 =
            layer_norm_backward(d_y1, lp.ln_attn, lc.ln_attn, lg.ln_attn.gain, lg.ln_attn.bias);
        Eigen::MatrixXd d_a = dropout_backward(lc.attn_drop, d_res1);
        MultiHeadGrads<double> mg = multi_head_attention_backward<double>(
            d_a, lc.x_in, lc.x_in, lp.self_attn.wq, lp.self_attn.wk, lp.self_attn.wv,
            lp.self_attn.wo, lc.attn);
        lg.self_attn.wq += mg.d_wq;
        lg.self_attn.wk += mg.d_wk;
        lg.self_attn.wv += mg.d_wv;
        lg.self_attn.wo += mg.d_wo;
        d_memory = d_res1 + mg.d_x_q + mg.d_x_kv;
    }
    Eigen::MatrixXd d_embedded = dropout_backward(cache.emb_drop, std::move(d_memory));
    embed_backward(ctx, cache.ids, d_embedded, grads);
}

BoolArray causal_mask(Eigen::Index n) {
    BoolArray m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = j <= i;
    }
    return m;
}

DecCache decoder_forward(SeqContext& ctx, std::span<const TokenId> tgt_in,
                         const Eigen::MatrixXd& memory) {
    DecCache cache;
    cache.ids.assign(tgt_in.begin(), tgt_in.end());
    cache.causal = causal_mask(static_cast<Eigen::Index>(tgt_in.size()));
    Eigen::MatrixXd x = apply_dropout(ctx, embed(ctx, tgt_in), cache.emb_drop);
    const AttnConfig self_cfg = ctx.attn_config(ctx.config.laa.decoder_self, true);
    const AttnConfig cross_cfg = ctx.attn_config(ctx.config.laa.decoder_cross, false);
    cache.layers.resize(ctx.params.decoder.size());
    for (std::size_t li = 0; li < ctx.params.decoder.size(); ++li) {
        const DecoderLayerParams& lp = ctx.params.decoder[li];
        DecLayerCache& lc = cache.layers[li];
        lc.x_in = x;
        lc.self_attn = multi_head_attention<double>(x, x, lp.self_attn.wq, lp.self_attn.wk,
                                                    lp.self_attn.wv, lp.self_attn.wo,
                                                    ctx.config.heads, &cache.causal, self_cfg);
        Eigen::MatrixXd sa = apply_dropout(ctx, lc.self_attn.output, lc.self_drop);
        lc.x1 = layer_norm(lc.x_in + sa, lp.ln_self, lc.ln_self);

        lc.cross_attn = multi_head_attention<double>(lc.x1, memory, lp.cross_attn.wq,
                                                     lp.cross_attn.wk, lp.cross_attn.wv,
                                                     lp.cross_attn.wo, ctx.config.heads, nullptr,
                                                     cross_cfg);
        Eigen::MatrixXd ca = apply_dropout(ctx, lc.cross_attn.output, lc.cross_drop);
        lc.x2 = layer_norm(lc.x1 + ca, lp.ln_cross, lc.ln_cross);

        Eigen::MatrixXd f = ffn_forward(lc.x2, lp.ffn, lc.ffn);
        f = apply_dropout(ctx, std::move(f), lc.ffn_drop);
        x = layer_norm(lc.x2 + f, lp.ln_ffn, lc.ln_ffn);
    }
    cache.hidden = x;
    return cache;
}

// Returns d_memory; folds token/position gradients into the embedding tables.
Eigen::MatrixXd decoder_backward(const SeqContext& ctx, const DecCache& cache,
                                 const Eigen::MatrixXd& memory, Eigen::MatrixXd d_hidden,
                                 Parameters& grads) {
    Eigen::MatrixXd d_memory = Eigen::MatrixXd::Zero(memory.rows(), memory.cols());
    for (std::size_t ri = ctx.params.decoder.size(); ri-- > 0;) {
        const DecoderLayerParams& lp = ctx.params.decoder[ri];
        const DecLayerCache& lc = cache.layers[ri];
        DecoderLayerParams& lg = grads.decoder[ri];

        Eigen::MatrixXd d_res3 =
            layer_norm_backward(d_hidden, lp.ln_ffn, lc.ln_ffn, lg.ln_ffn.gain, lg.ln_ffn.bias);
        Eigen::MatrixXd d_f = dropout_backward(lc.ffn_drop, d_res3);
        Eigen::MatrixXd d_x2 = d_res3 + ffn_backward(d_f, lp.ffn, lc.ffn, lg.ffn);

        Eigen::MatrixXd d_res2 = layer_norm_backward(d_x2, lp.ln_cross, lc.ln_cross,
                                                     lg.ln_cross.gain, lg.ln_cross.bias);
        Eigen::MatrixXd d_ca = dropout_backward(lc.cross_drop, d_res2);
        MultiHeadGrads<double> cg = multi_head_attention_backward<double>(
            d_ca, lc.x1, memory, lp.cross_attn.wq, lp.cross_attn.wk, lp.cross_attn.wv,
            lp.cross_attn.wo, lc.cross_attn);
        lg.cross_attn.wq += cg.d_wq;
        lg.cross_attn.wk += cg.d_wk;
        lg.cross_attn.wv += cg.d_wv;
        lg.cross_attn.wo += cg.d_wo;
        d_memory += cg.d_x_kv;
        Eigen::MatrixXd d_x1 = d_res2 + cg.d_x_q;

        Eigen::MatrixXd d_res1 = layer_norm_backward(d_x1, lp.ln_self, lc.ln_self,
                                                     lg.ln_self.gain, lg.ln_self.bias);
        Eigen::MatrixXd d_sa = dropout_backward(lc.self_drop, d_res1);
        MultiHeadGrads<double> sg = multi_head_attention_backward<double>(
            d_sa, lc.x_in, lc.x_in, lp.self_attn.wq, lp.self_attn.wk, lp.self_attn.wv,
            lp.self_attn.wo, lc.self_attn);
        lg.self_attn.wq += sg.d_wq;
        lg.self_attn.wk += sg.d_wk;
        lg.self_attn.wv += sg.d_wv;
        lg.self_attn.wo += sg.d_wo;
        d_hidden = d_res1 + sg.d_x_q + sg.d_x_kv;
    }
    Eigen::MatrixXd d_embedded = dropout_backward(cache.emb_drop, std::move(d_hidden));
    embed_backward(ctx, cache.ids, d_embedded, grads);
    return d_memory;
}

Eigen::MatrixXd sequence_log_probs(SeqContext& ctx, std::span<const TokenId> src,
                                   std::span<const TokenId> tgt_in) {
    EncCache enc = encoder_forward(ctx, src);
    DecCache dec = decoder_forward(ctx, tgt_in, enc.memory);
    Eigen::MatrixXd logits = dec.hidden * ctx.params.out_proj;
    return log_softmax_rows(logits);
}

// Smoothed negative log-likelihood of one position's label distribution.
double smoothed_nll(const Eigen::MatrixXd& log_probs, Eigen::Index row, TokenId label,
                    double smoothing, int vocab) {
    const double uniform = smoothing / static_cast<double>(vocab);
    return -((1.0 - smoothing) * log_probs(row, label) + uniform * log_probs.row(row).sum());
}

// Forward + backward over one (src, tgt) sequence. Returns the SUM of smoothed
// NLL over target positions; gradients of that sum accumulate into `grads`.
double sequence_loss_and_grads(SeqContext& ctx, std::span<const TokenId> src,
                               std::span<const TokenId> tgt_in, std::span<const TokenId> tgt_out,
                               double smoothing, Parameters& grads) {
    require(tgt_in.size() == tgt_out.size(), "shifted target sides must align");
    EncCache enc = encoder_forward(ctx, src);
    DecCache dec = decoder_forward(ctx, tgt_in, enc.memory);
    Eigen::MatrixXd logits = dec.hidden * ctx.params.out_proj;
    Eigen::MatrixXd log_probs = log_softmax_rows(logits);

    const int vocab = ctx.config.vocab;
    const double uniform = smoothing / static_cast<double>(vocab);
    double nll_sum = 0.0;
    // d(sum nll)/d(logits) = softmax - q, with q the smoothed one-hot target.
    Eigen::MatrixXd d_logits = log_probs.array().exp();
    for (Eigen::Index k = 0; k < d_logits.rows(); ++k) {
        const TokenId label = tgt_out[static_cast<std::size_t>(k)];
        require(label >= 0 && label < vocab, "target label outside vocabulary");
        nll_sum += smoothed_nll(log_probs, k, label, smoothing, vocab);
        d_logits.row(k).array() -= uniform;
        d_logits(k, label) -= 1.0 - smoothing;
    }

    grads.out_proj += dec.hidden.transpose() * d_logits;
    Eigen::MatrixXd d_hidden = d_logits * ctx.params.out_proj.transpose();
    Eigen::MatrixXd d_memory = decoder_backward(ctx, dec, enc.memory, std::move(d_hidden), grads);
    encoder_backward(ctx, enc, std::move(d_memory), grads);
    return nll_sum;
}

void scale_params(Parameters& params, double factor) {
    params.visit([factor](const std::string&, auto& tensor) { tensor *= factor; });
}

void zero_params(Parameters& params) {
    params.visit([](const std::string&, auto& tensor) { tensor.setZero(); });
}

bool params_finite(const Parameters& params) {
    bool ok = true;
    params.visit([&ok](const std::string&, const auto& tensor) {
        if (!tensor.allFinite()) ok = false;
    });
    return ok;
}

}  // namespace

// ---------------------------------------------------------------------------
// public batched forward / loss
// ---------------------------------------------------------------------------

Batch Batch::make(
    std::span<const std::pair<std::vector<TokenId>, std::vector<TokenId>>> encoded_pairs) {
    require(!encoded_pairs.empty(), "batch needs at least one sequence");
    Eigen::Index max_src = 0, max_tgt = 0;
    for (const auto& [src, tgt] : encoded_pairs) {
        require(!src.empty(), "encoded source must be non-empty");
        require(tgt.size() >= 2, "encoded target needs BOS and at least one more token");
        max_src = std::max(max_src, static_cast<Eigen::Index>(src.size()));
        max_tgt = std::max(max_tgt, static_cast<Eigen::Index>(tgt.size()) - 1);
    }
    const auto b = static_cast<Eigen::Index>(encoded_pairs.size());
    Batch batch;
    batch.src.setConstant(b, max_src, kPadId);
    batch.tgt_in.setConstant(b, max_tgt, kPadId);
    batch.tgt_out.setConstant(b, max_tgt, kPadId);
    batch.src_mask.setConstant(b, max_src, false);
    batch.tgt_mask.setConstant(b, max_tgt, false);
    for (Eigen::Index i = 0; i < b; ++i) {
        const auto& [src, tgt] = encoded_pairs[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < src.size(); ++j) {
            batch.src(i, static_cast<Eigen::Index>(j)) = src[j];
            batch.src_mask(i, static_cast<Eigen::Index>(j)) = true;
        }
        for (std::size_t j = 0; j + 1 < tgt.size(); ++j) {
            batch.tgt_in(i, static_cast<Eigen::Index>(j)) = tgt[j];
            batch.tgt_out(i, static_cast<Eigen::Index>(j)) = tgt[j + 1];
            batch.tgt_mask(i, static_cast<Eigen::Index>(j)) = true;
        }
    }
    batch.causal = causal_mask(max_tgt);
    return batch;
}

long Batch::src_len(int b) const {
    return src_mask.row(b).count();
}

long Batch::tgt_len(int b) const {
    return tgt_mask.row(b).count();
}

std::vector<Eigen::MatrixXd> forward(const ModelCheckpoint& checkpoint, const Batch& batch) {
    checkpoint.config.validate();
    require(batch.size() >= 1, "batch must be non-empty");
    const int vocab = checkpoint.config.vocab;
    const double uniform_logp = -std::log(static_cast<double>(vocab));
    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<std::size_t>(batch.size()));
    for (int b = 0; b < batch.size(); ++b) {
        const long n_src = batch.src_len(b);
        const long n_tgt = batch.tgt_len(b);
        require(n_src >= 1 && n_tgt >= 1, "batch rows need at least one real token");
        std::vector<TokenId> src(static_cast<std::size_t>(n_src));
        std::vector<TokenId> tgt_in(static_cast<std::size_t>(n_tgt));
        for (long j = 0; j < n_src; ++j) src[static_cast<std::size_t>(j)] = batch.src(b, j);
        for (long j = 0; j < n_tgt; ++j) tgt_in[static_cast<std::size_t>(j)] = batch.tgt_in(b, j);
        SeqContext ctx{checkpoint.params, checkpoint.config, checkpoint.iota, {}};
        Eigen::MatrixXd rows = sequence_log_probs(ctx, src, tgt_in);
        Eigen::MatrixXd padded =
            Eigen::MatrixXd::Constant(batch.tgt_in.cols(), vocab, uniform_logp);
        padded.topRows(rows.rows()) = rows;
        out.push_back(std::move(padded));
    }
    return out;
}

double loss(const std::vector<Eigen::MatrixXd>& log_probs, const Batch& batch, double smoothing) {
    require(smoothing >= 0.0 && smoothing < 1.0, "label smoothing must lie in [0, 1)");
    require(static_cast<int>(log_probs.size()) == batch.size(),
            "one log-probability matrix per batch row required");
    double nll = 0.0;
    long positions = 0;
    for (int b = 0; b < batch.size(); ++b) {
        const Eigen::MatrixXd& rows = log_probs[static_cast<std::size_t>(b)];
        const int vocab = static_cast<int>(rows.cols());
        for (Eigen::Index k = 0; k < batch.tgt_out.cols(); ++k) {
            if (!batch.tgt_mask(b, k)) continue;
            nll += smoothed_nll(rows, k, batch.tgt_out(b, k), smoothing, vocab);
            ++positions;
        }
    }
    require(positions > 0, "loss needs at least one non-pad target position");
    return nll / static_cast<double>(positions);
}

double batch_loss_and_grads(const ModelCheckpoint& checkpoint, const Batch& batch,
                            double smoothing, Parameters& grads) {
    require(smoothing >= 0.0 && smoothing < 1.0, "label smoothing must lie in [0, 1)");
    grads = Parameters::zeros_like(checkpoint.config);
    long positions = 0;
    for (int b = 0; b < batch.size(); ++b) positions += batch.tgt_len(b);
    require(positions > 0, "batch has no target positions");

    double nll = 0.0;
    for (int b = 0; b < batch.size(); ++b) {
        const long n_src = batch.src_len(b);
        const long n_tgt = batch.tgt_len(b);
        std::vector<TokenId> src(static_cast<std::size_t>(n_src));
        std::vector<TokenId> tgt_in(static_cast<std::size_t>(n_tgt));
        std::vector<TokenId> tgt_out(static_cast<std::size_t>(n_tgt));
        for (long j = 0; j < n_src; ++j) src[static_cast<std::size_t>(j)] = batch.src(b, j);
        for (long j = 0; j < n_tgt; ++j) {
            tgt_in[static_cast<std::size_t>(j)] = batch.tgt_in(b, j);
            tgt_out[static_cast<std::size_t>(j)] = batch.tgt_out(b, j);
        }
        SeqContext ctx{checkpoint.params, checkpoint.config, checkpoint.iota, {}};
        nll += sequence_loss_and_grads(ctx, src, tgt_in, tgt_out, smoothing, grads);
    }
    scale_params(grads, 1.0 / static_cast<double>(positions));
    return nll / static_cast<double>(positions);
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

double lr_at(const TrainConfig& tc, long step) {
    const double t = static_cast<double>(step);
    const double w = static_cast<double>(tc.warmup_steps);
    return tc.lr * std::min(t / w, std::sqrt(w / t));
}

struct AdamState {
    Parameters m, v;
    long step = 0;
};

void adam_step(Parameters& params, Parameters& grads, AdamState& state, const TrainConfig& tc) {
    ++state.step;
    const double lr = lr_at(tc, state.step);
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(state.step));
    auto pv = param_views(params);
    auto gv = param_views(grads);
    auto mv = param_views(state.m);
    auto vv = param_views(state.v);
    for (std::size_t i = 0; i < pv.size(); ++i) {
        Eigen::Map<Eigen::ArrayXd> p(pv[i].data, pv[i].size());
        Eigen::Map<Eigen::ArrayXd> g(gv[i].data, gv[i].size());
        Eigen::Map<Eigen::ArrayXd> m(mv[i].data, mv[i].size());
        Eigen::Map<Eigen::ArrayXd> v(vv[i].data, vv[i].size());
        m = tc.beta1 * m + (1.0 - tc.beta1) * g;
        v = tc.beta2 * v + (1.0 - tc.beta2) * g.square();
        p -= lr * (m / bc1) / ((v / bc2).sqrt() + tc.adam_eps);
    }
}

}  // namespace

ModelCheckpoint train(const std::vector<Document>& corpus, const ModelConfig& model_config,
                      const TrainConfig& train_config, const TrainHooks& hooks) {
    model_config.validate();
    require(!corpus.empty(), "training corpus must be non-empty");
    require(train_config.epochs >= 1, "training needs at least one epoch");
    require(train_config.max_len >= 3, "segment budget too small to hold one sentence");
    require(train_config.max_len <= model_config.max_positions,
            "segment budget exceeds positional capacity");
    require(train_config.batch_token_budget >= 1, "batch token budget must be positive");

    std::unordered_map<std::string, const Document*> by_id;
    for (const Document& doc : corpus) {
        require(!doc.sentences.empty(), "documents must have at least one sentence");
        by_id[doc.id] = &doc;
        for (const SentencePair& sp : doc.sentences) {
            const long worst =
                static_cast<long>(std::max(sp.source.size(), sp.target.size())) + 2;
            require(worst <= model_config.max_positions,
                    "sentence in document " + doc.id + " exceeds positional capacity");
        }
    }

    ModelCheckpoint ckpt;
    ckpt.config = model_config;
    ckpt.params = Parameters::random_init(model_config, derive_seed(train_config.seed, "init"));
    ckpt.train_max_len = train_config.max_len;

    Parameters grads = Parameters::zeros_like(model_config);
    AdamState adam{Parameters::zeros_like(model_config), Parameters::zeros_like(model_config), 0};

    EpochData fixed;
    if (!train_config.dls) fixed = build_fixed_packing(corpus, train_config.max_len);

    for (int ep = 1; ep <= train_config.epochs; ++ep) {
        EpochData data;
        double temperature = 0.0;
        if (train_config.dls) {
            data = build_epoch(corpus, ep, train_config.gamma, train_config.max_len,
                               train_config.seed ^ static_cast<std::uint64_t>(ep));
            temperature = dls_temperature(ep, train_config.gamma);
        } else {
            data = fixed;
            data.epoch = ep;
        }
        if (hooks.on_epoch_data) hooks.on_epoch_data(data);

        std::vector<std::size_t> order(data.segments.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng order_rng(derive_seed(train_config.seed, "order", static_cast<std::uint64_t>(ep)));
        order_rng.shuffle(order);
        Rng drop_rng(derive_seed(train_config.seed, "dropout", static_cast<std::uint64_t>(ep)));

        double epoch_nll = 0.0;
        long epoch_positions = 0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            zero_params(grads);
            double batch_nll = 0.0;
            long batch_positions = 0;
            while (cursor < order.size() &&
                   (batch_positions == 0 || batch_positions < train_config.batch_token_budget)) {
                const Segment& seg = data.segments[order[cursor]];
                ++cursor;
                const auto doc_it = by_id.find(seg.doc_id);
                require(doc_it != by_id.end(), "segment references unknown document " + seg.doc_id);
                const auto sentences = segment_sentences(*doc_it->second, seg);
                const auto [src_ids, tgt_ids] = encode_segment(sentences);
                const std::span<const TokenId> tgt_in(tgt_ids.data(), tgt_ids.size() - 1);
                const std::span<const TokenId> tgt_out(tgt_ids.data() + 1, tgt_ids.size() - 1);
                SeqContext ctx{ckpt.params, model_config, data.iota,
                               {&drop_rng, model_config.dropout}};
                batch_nll += sequence_loss_and_grads(ctx, src_ids, tgt_in, tgt_out,
                                                     train_config.label_smoothing, grads);
                batch_positions += static_cast<long>(tgt_out.size());
            }
            scale_params(grads, 1.0 / static_cast<double>(batch_positions));
            adam_step(ckpt.params, grads, adam, train_config);
            epoch_nll += batch_nll;
            epoch_positions += batch_positions;
        }

        const double epoch_loss = epoch_nll / static_cast<double>(epoch_positions);
        if (!std::isfinite(epoch_loss) || !params_finite(ckpt.params)) {
            throw TrainingError("training diverged (non-finite loss or parameters)", ep);
        }
        ckpt.iota = data.iota;
        ckpt.training_log.push_back({ep, epoch_loss, temperature, data.iota});
        if (hooks.on_epoch_done) hooks.on_epoch_done(ckpt.training_log.back());
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// gradient check
// ---------------------------------------------------------------------------

double grad_check(const ModelConfig& config, std::uint64_t seed, int sample_count) {
    config.validate();
    require(config.d_model <= 16 && config.max_positions <= 12,
            "gradient check expects a tiny configuration");
    require(sample_count >= 1, "gradient check needs at least one sample");

    Parameters params = Parameters::random_init(config, derive_seed(seed, "gc-init"));
    const double iota = 8.0;  // reference length for the length-aware mode
    const double smoothing = 0.1;
    Rng rng(derive_seed(seed, "gc-data"));

    // Two random sequences, reserved framing included, everything unpadded.
    std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> pairs;
    for (int s = 0; s < 2; ++s) {
        const int src_body = rng.uniform_int(2, config.max_positions - 2);
        const int tgt_body = rng.uniform_int(2, config.max_positions - 3);
        std::vector<TokenId> src{kBosId}, tgt{kBosId};
        for (int i = 0; i < src_body; ++i)
            src.push_back(static_cast<TokenId>(rng.uniform_int(kNumReserved, config.vocab - 1)));
        for (int i = 0; i < tgt_body; ++i)
            tgt.push_back(static_cast<TokenId>(rng.uniform_int(kNumReserved, config.vocab - 1)));
        src.push_back(kEosId);
        tgt.push_back(kEosId);
        pairs.emplace_back(std::move(src), std::move(tgt));
    }

    long total_positions = 0;
    for (const auto& [src, tgt] : pairs) total_positions += static_cast<long>(tgt.size()) - 1;

    const auto total_loss = [&](Parameters& p) {
        double nll = 0.0;
        for (const auto& [src, tgt] : pairs) {
            SeqContext ctx{p, config, iota, {}};
            Eigen::MatrixXd log_probs = sequence_log_probs(
                ctx, src, std::span<const TokenId>(tgt.data(), tgt.size() - 1));
            for (Eigen::Index k = 0; k < log_probs.rows(); ++k) {
                nll += smoothed_nll(log_probs, k, tgt[static_cast<std::size_t>(k) + 1], smoothing,
                                    config.vocab);
            }
        }
        return nll / static_cast<double>(total_positions);
    };

    Parameters grads = Parameters::zeros_like(config);
    for (const auto& [src, tgt] : pairs) {
        SeqContext ctx{params, config, iota, {}};
        const std::span<const TokenId> tgt_in(tgt.data(), tgt.size() - 1);
        const std::span<const TokenId> tgt_out(tgt.data() + 1, tgt.size() - 1);
        sequence_loss_and_grads(ctx, src, tgt_in, tgt_out, smoothing, grads);
    }
    scale_params(grads, 1.0 / static_cast<double>(total_positions));

    auto pv = param_views(params);
    auto gv = param_views(grads);
    Eigen::Index total = 0;
    for (const auto& v : pv) total += v.size();

    // One sample per tensor, then uniform draws up to sample_count.
    std::vector<std::pair<std::size_t, Eigen::Index>> picks;
    Rng pick_rng(derive_seed(seed, "gc-picks"));
    for (std::size_t t = 0; t < pv.size(); ++t) {
        picks.emplace_back(t, static_cast<Eigen::Index>(
                                  pick_rng.bounded(static_cast<std::uint64_t>(pv[t].size()))));
    }
    while (static_cast<int>(picks.size()) < sample_count) {
        auto flat = static_cast<Eigen::Index>(pick_rng.bounded(static_cast<std::uint64_t>(total)));
        for (std::size_t t = 0; t < pv.size(); ++t) {
            if (flat < pv[t].size()) {
                picks.emplace_back(t, flat);
                break;
            }
            flat -= pv[t].size();
        }
    }

    const double h = 1e-5;
    double max_rel = 0.0;
    for (const auto& [tensor, idx] : picks) {
        double& theta = pv[tensor].data[idx];
        const double saved = theta;
        theta = saved + h;
        const double up = total_loss(params);
        theta = saved - h;
        const double down = total_loss(params);
        theta = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = gv[tensor].data[idx];
        // Absolute floor keeps finite-difference roundoff on near-zero
        // gradients from registering as relative error.
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
    }
    return max_rel;
}

// ---------------------------------------------------------------------------
// sequence scoring
// ---------------------------------------------------------------------------

double sequence_logprob(const ModelCheckpoint& checkpoint, std::span<const TokenId> src,
                        std::span<const TokenId> tgt) {
    require(tgt.size() >= 2, "target needs BOS and at least one more token");
    SeqContext ctx{checkpoint.params, checkpoint.config, checkpoint.iota, {}};
    Eigen::MatrixXd log_probs =
        sequence_log_probs(ctx, src, std::span<const TokenId>(tgt.data(), tgt.size() - 1));
    double total = 0.0;
    for (Eigen::Index k = 0; k < log_probs.rows(); ++k) {
        const TokenId label = tgt[static_cast<std::size_t>(k) + 1];
        require(label >= 0 && label < checkpoint.config.vocab, "target token outside vocabulary");
        total += log_probs(k, label);
    }
    return total;
}

CandidateScorer contrastive_scorer(const ModelCheckpoint& checkpoint) {
    return [&checkpoint](const ContrastiveItem& item, int candidate) {
        std::vector<std::vector<TokenId>> src_sentences;
        src_sentences.reserve(item.document.sentences.size());
        for (const SentencePair& sp : item.document.sentences) src_sentences.push_back(sp.source);
        const std::vector<TokenId> src = encode_side(src_sentences);
        const std::vector<TokenId> tgt =
            encode_side(item.candidates[static_cast<std::size_t>(candidate)]);
        return sequence_logprob(checkpoint, src, tgt);
    };
}

CandidateScorer context_blind_scorer(const ModelCheckpoint& checkpoint) {
    return [&checkpoint](const ContrastiveItem& item, int candidate) {
        const auto j = static_cast<std::size_t>(item.ambiguous_sentence);
        const std::vector<std::vector<TokenId>> src_one{item.document.sentences[j].source};
        const std::vector<std::vector<TokenId>> tgt_one{
            item.candidates[static_cast<std::size_t>(candidate)][j]};
        return sequence_logprob(checkpoint, encode_side(src_one), encode_side(tgt_one));
    };
}

// ---------------------------------------------------------------------------
// incremental decoding session
// ---------------------------------------------------------------------------

namespace {

struct LayerDecodeState {
    Eigen::MatrixXd self_k, self_v;  // preallocated (max_target_len x d_model)
};

class TransformerHandle;

class TransformerSession final : public DecodeSession {
public:
    TransformerSession(const ModelCheckpoint& checkpoint, std::span<const TokenId> encoded_source)
        : ckpt_(checkpoint) {
        ckpt_.config.validate();
        if (ckpt_.config.scale_mode == ScaleMode::laa && ckpt_.iota <= 1.0) {
            throw ConfigError("length-aware checkpoint requires iota > 1");
        }
        SeqContext ctx{ckpt_.params, ckpt_.config, ckpt_.iota, {}};
        EncCache enc = encoder_forward(ctx, encoded_source);
        memory_ = std::move(enc.memory);
        src_len_ = static_cast<long>(encoded_source.size());
        cross_k_.reserve(ckpt_.params.decoder.size());
        cross_v_.reserve(ckpt_.params.decoder.size());
        for (const DecoderLayerParams& l : ckpt_.params.decoder) {
            cross_k_.push_back(memory_ * l.cross_attn.wk);
            cross_v_.push_back(memory_ * l.cross_attn.wv);
        }
        const bool cross_laa =
            ckpt_.config.scale_mode == ScaleMode::laa && ckpt_.config.laa.decoder_cross;
        cross_lambda_ = cross_laa ? laa_lambda(src_len_, ckpt_.iota) : 1.0;
        self_laa_ = ckpt_.config.scale_mode == ScaleMode::laa && ckpt_.config.laa.decoder_self;
    }

    std::unique_ptr<DecoderHandle> start() const override;

    int vocab() const override { return ckpt_.config.vocab; }
    long max_target_len() const override { return ckpt_.config.max_positions; }

    const ModelCheckpoint& ckpt_;
    Eigen::MatrixXd memory_;
    std::vector<Eigen::MatrixXd> cross_k_, cross_v_;
    long src_len_ = 0;
    double cross_lambda_ = 1.0;
    bool self_laa_ = false;
};

class TransformerHandle final : public DecoderHandle {
public:
    explicit TransformerHandle(const TransformerSession& session) : session_(session) {
        const auto& cfg = session.ckpt_.config;
        layers_.resize(session.ckpt_.params.decoder.size());
        for (auto& l : layers_) {
            l.self_k.resize(cfg.max_positions, cfg.d_model);
            l.self_v.resize(cfg.max_positions, cfg.d_model);
        }
    }

    Eigen::VectorXd step(TokenId token) override {
        const ModelConfig& cfg = session_.ckpt_.config;
        const Parameters& params = session_.ckpt_.params;
        if (t_ >= cfg.max_positions) {
            throw ContractViolation("decoder length exceeds positional capacity " +
                                    std::to_string(cfg.max_positions));
        }
        require(token >= 0 && token < cfg.vocab, "token id outside vocabulary");

        const double emb_scale = std::sqrt(static_cast<double>(cfg.d_model));
        Eigen::RowVectorXd x = params.tok_embed.row(token) * emb_scale + params.pos_embed.row(t_);

        const int heads = cfg.heads;
        const Eigen::Index dk = cfg.d_k();
        const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
        const long visible = t_ + 1;
        const double self_scale =
            (session_.self_laa_ ? laa_lambda(visible, session_.ckpt_.iota) : 1.0) * inv_sqrt_dk;
        const double cross_scale = session_.cross_lambda_ * inv_sqrt_dk;

        for (std::size_t li = 0; li < layers_.size(); ++li) {
            const DecoderLayerParams& lp = params.decoder[li];
            LayerDecodeState& ls = layers_[li];

            Eigen::RowVectorXd q = x * lp.self_attn.wq;
            ls.self_k.row(t_) = x * lp.self_attn.wk;
            ls.self_v.row(t_) = x * lp.self_attn.wv;
            Eigen::RowVectorXd attn_out(cfg.d_model);
            for (int h = 0; h < heads; ++h) {
                const Eigen::Index off = h * dk;
                Eigen::VectorXd scores =
                    ls.self_k.block(0, off, visible, dk) * q.segment(off, dk).transpose();
                scores *= self_scale;
                Eigen::VectorXd w = (scores.array() - logsumexp(scores)).exp();
                attn_out.segment(off, dk) =
                    w.transpose() * ls.self_v.block(0, off, visible, dk);
            }
            x = row_sublayer(x, attn_out * lp.self_attn.wo, lp.ln_self);

            Eigen::RowVectorXd q2 = x * lp.cross_attn.wq;
            Eigen::RowVectorXd cross_out(cfg.d_model);
            const Eigen::MatrixXd& ck = session_.cross_k_[li];
            const Eigen::MatrixXd& cv = session_.cross_v_[li];
            for (int h = 0; h < heads; ++h) {
                const Eigen::Index off = h * dk;
                Eigen::VectorXd scores = ck.middleCols(off, dk) * q2.segment(off, dk).transpose();
                scores *= cross_scale;
                Eigen::VectorXd w = (scores.array() - logsumexp(scores)).exp();
                cross_out.segment(off, dk) = w.transpose() * cv.middleCols(off, dk);
            }
            x = row_sublayer(x, cross_out * lp.cross_attn.wo, lp.ln_cross);

            Eigen::RowVectorXd z = x * lp.ffn.w1 + lp.ffn.b1;
            Eigen::RowVectorXd f = z.cwiseMax(0.0) * lp.ffn.w2 + lp.ffn.b2;
            x = row_sublayer(x, f, lp.ln_ffn);
        }
        ++t_;

        Eigen::RowVectorXd logits = x * params.out_proj;
        const double lse = logsumexp(logits.transpose());
        return (logits.array() - lse).matrix().transpose();
    }

    std::unique_ptr<DecoderHandle> clone() const override {
        return std::make_unique<TransformerHandle>(*this);
    }

    long length() const override { return t_; }

private:
    static Eigen::RowVectorXd row_sublayer(const Eigen::RowVectorXd& x,
                                           const Eigen::RowVectorXd& sub,
                                           const LayerNormParams& ln) {
        Eigen::RowVectorXd r = x + sub;
        const double mu = r.mean();
        const double var = (r.array() - mu).square().mean();
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        return (((r.array() - mu) * inv).matrix().cwiseProduct(ln.gain)) + ln.bias;
    }

    const TransformerSession& session_;
    std::vector<LayerDecodeState> layers_;
    Eigen::Index t_ = 0;
};

std::unique_ptr<DecoderHandle> TransformerSession::start() const {
    return std::make_unique<TransformerHandle>(*this);
}

}  // namespace

std::unique_ptr<DecodeSession> make_decode_session(const ModelCheckpoint& checkpoint,
                                                   std::span<const TokenId> encoded_source) {
    return std::make_unique<TransformerSession>(checkpoint, encoded_source);
}

// ---------------------------------------------------------------------------
// checkpoint serialization
// ---------------------------------------------------------------------------

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"layers", c.layers},
                          {"heads", c.heads},
                          {"d_model", c.d_model},
                          {"d_ff", c.d_ff},
                          {"vocab", c.vocab},
                          {"max_positions", c.max_positions},
                          {"dropout", c.dropout},
                          {"scale_mode", scale_mode_name(c.scale_mode)},
                          {"laa",
                           {{"encoder_self", c.laa.encoder_self},
                            {"decoder_self", c.laa.decoder_self},
                            {"decoder_cross", c.laa.decoder_cross}}}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.scale_mode = scale_mode_from_name(j.at("scale_mode").get<std::string>());
    const auto& laa = j.at("laa");
    c.laa.encoder_self = laa.at("encoder_self").get<bool>();
    c.laa.decoder_self = laa.at("decoder_self").get<bool>();
    c.laa.decoder_cross = laa.at("decoder_cross").get<bool>();
    return c;
}

void validate_checkpoint(const ModelCheckpoint& ckpt, const char* action) {
    ckpt.config.validate();
    if (ckpt.config.scale_mode == ScaleMode::laa && ckpt.iota <= 1.0) {
        throw ContractViolation(std::string(action) +
                                ": length-aware checkpoint requires iota > 1");
    }
    if (!params_finite(ckpt.params)) {
        throw ContractViolation(std::string(action) + ": checkpoint parameters must be finite");
    }
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
    validate_checkpoint(ckpt, "save_checkpoint");

    nlohmann::json header;
    header["version"] = kCheckpointVersion;
    header["model"] = config_to_json(ckpt.config);
    header["iota"] = ckpt.iota;
    header["train_max_len"] = ckpt.train_max_len;
    nlohmann::json log = nlohmann::json::array();
    for (const EpochLog& e : ckpt.training_log) {
        log.push_back({{"epoch", e.epoch},
                       {"loss", e.loss},
                       {"temperature", e.temperature},
                       {"iota", e.iota}});
    }
    header["training_log"] = std::move(log);
    nlohmann::json tensors = nlohmann::json::array();
    const auto views = param_views(std::as_const(ckpt).params);
    for (const ConstParamView& v : views) {
        tensors.push_back({{"name", v.name}, {"rows", v.rows}, {"cols", v.cols}});
    }
    header["tensors"] = std::move(tensors);
    const std::string header_bytes = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open checkpoint for writing: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t header_len = header_bytes.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
    for (const ConstParamView& v : views) {
        out.write(reinterpret_cast<const char*>(v.data),
                  static_cast<std::streamsize>(v.size() * static_cast<Eigen::Index>(sizeof(double))));
    }
    if (!out) throw ParseError("failed writing checkpoint: " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint: " + path);
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw ParseError("not a checkpoint file: " + path);
    }
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in) throw ParseError("truncated checkpoint header: " + path);
    std::string header_bytes(header_len, '\0');
    in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw ParseError("truncated checkpoint header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_bytes);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad checkpoint header in " + path + ": " + e.what());
    }
    const auto version = header.at("version").get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }

    ModelCheckpoint ckpt;
    ckpt.config = config_from_json(header.at("model"));
    ckpt.iota = header.at("iota").get<double>();
    ckpt.train_max_len = header.at("train_max_len").get<int>();
    for (const auto& e : header.at("training_log")) {
        ckpt.training_log.push_back({e.at("epoch").get<int>(), e.at("loss").get<double>(),
                                     e.at("temperature").get<double>(),
                                     e.at("iota").get<double>()});
    }
    ckpt.params = Parameters::zeros_like(ckpt.config);
    auto views = param_views(ckpt.params);
    const auto& tensors = header.at("tensors");
    require(tensors.size() == views.size(), "checkpoint tensor directory size mismatch");
    for (std::size_t i = 0; i < views.size(); ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != views[i].name ||
            t.at("rows").get<Eigen::Index>() != views[i].rows ||
            t.at("cols").get<Eigen::Index>() != views[i].cols) {
            throw ParseError("checkpoint tensor directory mismatch at " + views[i].name);
        }
        in.read(reinterpret_cast<char*>(views[i].data),
                static_cast<std::streamsize>(views[i].size() *
                                             static_cast<Eigen::Index>(sizeof(double))));
        if (!in) throw ParseError("truncated tensor data at " + views[i].name);
    }
    validate_checkpoint(ckpt, "load_checkpoint");
    return ckpt;
}

}  // namespace doctrans
