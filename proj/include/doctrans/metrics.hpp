#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "doctrans/corpus.hpp"
#include "doctrans/errors.hpp"

namespace doctrans {

using Sentence = std::vector<TokenId>;
using SentenceCorpus = std::vector<Sentence>;
using DocCorpus = std::vector<std::vector<Sentence>>;

struct BleuReport {
    double score = 0.0;  // 0..100
    std::vector<double> precisions;  // p_1..p_max_n after smoothing
    double brevity_penalty = 0.0;
    long hyp_tokens = 0;
    long ref_tokens = 0;
};

// Micro-averaged clipped n-gram counts over any number of hypothesis/reference
// pairs; sentence- and corpus-level scores share this one formula.
class BleuAccumulator {
public:
    explicit BleuAccumulator(int max_n = 4, bool add_one_smoothing = true);

    void add(std::span<const TokenId> hypothesis, std::span<const TokenId> reference);
    BleuReport report() const;

private:
    int max_n_;
    bool smooth_;
    std::vector<long> clipped_;  // per order
    std::vector<long> total_;
    long hyp_tokens_ = 0;
    long ref_tokens_ = 0;
};

// Clipped n-gram precision with brevity penalty on token ids. Zero counts at
// order >= 2 get add-one smoothing; an empty hypothesis scores 0.
BleuReport bleu(std::span<const TokenId> hypothesis, std::span<const TokenId> reference,
                int max_n = 4, bool add_one_smoothing = true);

// Corpus score over aligned sentences.
double s_bleu(const SentenceCorpus& hypotheses, const SentenceCorpus& references);

// Corpus score over aligned documents, each flattened to one token stream
// (separator ids dropped).
double d_bleu(const DocCorpus& hypotheses, const DocCorpus& references);

struct ContrastiveResult {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

// Scores one candidate target document of a suite item; higher is better.
using CandidateScorer = std::function<double(const ContrastiveItem& item, int candidate)>;

// Index of the best-scoring candidate, ties broken toward the lowest index.
int pick_candidate(std::span<const double> scores);

// Fraction of items whose best-scoring candidate is the annotated one.
ContrastiveResult contrastive_accuracy(std::span<const ContrastiveItem> suite,
                                       const CandidateScorer& scorer);

}  // namespace doctrans
