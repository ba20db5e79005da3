#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "doctrans/corpus.hpp"
#include "doctrans/decode_session.hpp"
#include "doctrans/metrics.hpp"
#include "doctrans/model.hpp"

namespace doctrans {

// One beam hypothesis over newly generated tokens (forced prefix excluded).
struct BeamHyp {
    std::vector<TokenId> tokens;  // generated ids, terminator excluded
    double score = 0.0;           // cumulative log-probability, terminator included
    bool finished = false;        // ended on a terminator (vs cap)

    // Length penalty score / len^alpha over generated tokens (terminator
    // counted when one ended the hypothesis).
    double normalized(double alpha) const;
};

struct BeamConfig {
    int beam = 5;
    double alpha = 1.0;
    long max_new = 0;                          // cap on generated tokens
    std::vector<TokenId> terminators{kEosId};  // ids that end a hypothesis
    std::vector<TokenId> forced_prefix;        // fed after BOS, before search
};

// Deterministic beam search; beam = 1 reduces to greedy argmax decoding.
BeamHyp beam_search(const DecodeSession& session, const BeamConfig& config);

// Builds a fresh decoding context for one encoded source sequence; lets mock
// models stand in for a trained checkpoint.
using SessionFactory =
    std::function<std::unique_ptr<DecodeSession>(std::span<const TokenId> encoded_source)>;

SessionFactory checkpoint_session_factory(const ModelCheckpoint& checkpoint);

// Whole-sequence decode: beam search until EOS (or max_new). The returned
// stream keeps separator ids; the source must fit the session's capacity.
std::vector<TokenId> decode_standard(const SessionFactory& factory,
                                     std::span<const TokenId> encoded_source, int beam,
                                     double alpha, long max_new);
std::vector<TokenId> decode_standard(const ModelCheckpoint& checkpoint,
                                     std::span<const TokenId> encoded_source, int beam,
                                     double alpha, long max_new);

// Split-then-translate baseline: sentences packed greedily into chunks of
// encoded length <= max_len, each chunk decoded independently. Returns one
// target sentence per source sentence (separator-delimited pieces realigned).
std::vector<Sentence> decode_segmented(const SessionFactory& factory, const Document& document,
                                       long max_len, int beam, double alpha);
std::vector<Sentence> decode_segmented(const ModelCheckpoint& checkpoint,
                                       const Document& document, long max_len, int beam,
                                       double alpha);

// Observable window state, snapshotted once per translated sentence, after
// eviction settles and before the sentence is decoded.
struct SlideState {
    std::vector<Sentence> window_src;  // attended source sentences (current last)
    std::vector<Sentence> window_tgt;  // translations still in the window
    std::vector<Sentence> committed;   // evicted translations, already final
    int next_src_index = 0;            // sentence about to be translated
    long window_budget = 0;
};

struct SlidingConfig {
    int beam = 5;
    double alpha = 1.0;
    long window_budget = 0;  // encoded-token cap for the source window
    // Per-sentence generation cap: cap_mul * |source sentence| + cap_add.
    long cap_mul = 2;
    long cap_add = 8;
    // Collapse the beam to its best hypothesis at every sentence boundary
    // (default) or only when the advance evicted context.
    bool collapse_only_on_eviction = false;
    std::function<void(const SlideState&)> observer;
};

// Sentence-granular sliding-window decode: translates sentence j with the
// most recent source context that fits the budget, forcing the surviving
// target context as a decoder prefix; oldest (src, tgt) pairs are evicted
// together and evicted targets are committed to the output. A document whose
// whole encoded source fits the budget goes through decode_standard instead.
std::vector<Sentence> decode_sliding(const SessionFactory& factory, const Document& document,
                                     const SlidingConfig& config);
std::vector<Sentence> decode_sliding(const ModelCheckpoint& checkpoint, const Document& document,
                                     const SlidingConfig& config);

struct SweepRow {
    std::string strategy;
    int max_len = 0;
    double d_bleu = 0.0;
    double s_bleu = 0.0;
};

// Decodes the corpus at each maximum length under one strategy ("segmented"
// or "sliding") and scores it against the corpus targets. Sliding windows are
// 0.8 of the effective length, capped at the checkpoint's trained budget.
std::vector<SweepRow> sweep_decode_lengths(const ModelCheckpoint& checkpoint,
                                           const std::vector<Document>& corpus,
                                           std::span<const int> lengths,
                                           const std::string& strategy, int beam = 5,
                                           double alpha = 1.0);
std::vector<SweepRow> sweep_decode_lengths(const SessionFactory& factory,
                                           const std::vector<Document>& corpus,
                                           std::span<const int> lengths,
                                           const std::string& strategy, int beam, double alpha,
                                           long sliding_train_cap);

// Reference translations grouped per document, for document-level scoring.
DocCorpus corpus_references(const std::vector<Document>& corpus);

}  // namespace doctrans
