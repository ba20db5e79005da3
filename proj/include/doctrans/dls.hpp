#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doctrans/corpus.hpp"
#include "doctrans/rng.hpp"

namespace doctrans {

// T = e^(ep - gamma); epochs are 1-based.
double dls_temperature(int epoch, double gamma);

// log p_l for l = 1..max_len with p_l proportional to exp(-l / T).
// Kept in the log domain end to end: exp(-l) alone underflows near l = 512.
Eigen::VectorXd length_log_distribution(int max_len, double temperature);

struct LengthSchedule {
    int max_len = 0;
    double gamma = 5.0;
    int epoch = 1;
    double temperature = 1.0;
    Eigen::VectorXd log_probs;

    static LengthSchedule make(int max_len, double gamma, int epoch);
    Eigen::VectorXd probs() const { return log_probs.array().exp(); }
};

// Budgets in 1..max_len, i.i.d. from the schedule's distribution.
std::vector<int> sample_lengths(const LengthSchedule& schedule, Rng& rng, int count);
int sample_length(const LengthSchedule& schedule, Rng& rng);

// raw: plain sum of sentence token counts (the paper-figure arithmetic).
// encoded: includes BOS/SEP/EOS overhead (what the model actually consumes).
enum class LengthAccounting { raw, encoded };

struct Segment {
    std::string doc_id;
    int first_sentence = 0;
    int last_sentence = 0;  // inclusive
    long src_len = 0;
    long tgt_len = 0;
    int budget = 0;
    bool oversized = false;

    int sentence_count() const { return last_sentence - first_sentence + 1; }
    long max_len() const { return std::max(src_len, tgt_len); }
};

// Greedy left-to-right packing. A segment grows while both sides stay within
// the current budget; a first sentence that alone exceeds the budget is
// emitted by itself with oversized set. One budget is consumed per segment.
std::vector<Segment> segment_document(const Document& doc,
                                      const std::function<int()>& next_budget,
                                      LengthAccounting accounting = LengthAccounting::encoded);

struct EpochData {
    std::vector<Segment> segments;  // deterministic shuffled training order
    double iota = 0.0;              // mean over segments of max(src_len, tgt_len)
    int epoch = 1;
};

// Recomputes the schedule for the epoch, segments every document under
// per-document budget streams seeded from (seed, doc id), shuffles the
// segment list with a seed-derived permutation, and computes iota.
EpochData build_epoch(const std::vector<Document>& corpus, int epoch, double gamma,
                      int max_len, std::uint64_t seed);

// The fixed-packing baseline: every document packed greedily to max_len once.
EpochData build_fixed_packing(const std::vector<Document>& corpus, int max_len);

std::vector<SentencePair> segment_sentences(const Document& doc, const Segment& seg);

}  // namespace doctrans
