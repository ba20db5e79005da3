#include "doctrans/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <string>
#include <unordered_map>

namespace doctrans {

namespace {

// n-grams of small integer ids, packed into a string key for counting.
std::string pack_ngram(std::span<const TokenId> tokens, std::size_t start, int n) {
    std::string key;
    key.resize(static_cast<std::size_t>(n) * sizeof(TokenId));
    std::memcpy(key.data(), tokens.data() + start, key.size());
    return key;
}

std::unordered_map<std::string, long> ngram_counts(std::span<const TokenId> tokens, int n) {
    std::unordered_map<std::string, long> counts;
    if (static_cast<long>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[pack_ngram(tokens, i, n)];
    return counts;
}

}  // namespace

BleuAccumulator::BleuAccumulator(int max_n, bool add_one_smoothing)
    : max_n_(max_n), smooth_(add_one_smoothing) {
    require(max_n >= 1, "bleu needs max_n >= 1");
    clipped_.assign(static_cast<std::size_t>(max_n), 0);
    total_.assign(static_cast<std::size_t>(max_n), 0);
}

void BleuAccumulator::add(std::span<const TokenId> hypothesis,
                          std::span<const TokenId> reference) {
    require(!reference.empty(), "bleu reference must be non-empty");
    hyp_tokens_ += static_cast<long>(hypothesis.size());
    ref_tokens_ += static_cast<long>(reference.size());
    for (int n = 1; n <= max_n_; ++n) {
        const auto ref_counts = ngram_counts(reference, n);
        long clipped = 0, total = 0;
        const auto hyp_counts = ngram_counts(hypothesis, n);
        for (const auto& [gram, count] : hyp_counts) {
            total += count;
            const auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) clipped += std::min(count, it->second);
        }
        clipped_[static_cast<std::size_t>(n - 1)] += clipped;
        total_[static_cast<std::size_t>(n - 1)] += total;
    }
}

BleuReport BleuAccumulator::report() const {
    BleuReport r;
    r.hyp_tokens = hyp_tokens_;
    r.ref_tokens = ref_tokens_;
    r.precisions.assign(static_cast<std::size_t>(max_n_), 0.0);
    if (hyp_tokens_ == 0) return r;  // empty hypothesis scores 0

    double log_sum = 0.0;
    for (int n = 1; n <= max_n_; ++n) {
        const std::size_t i = static_cast<std::size_t>(n - 1);
        double p;
        if (clipped_[i] > 0) {
            p = static_cast<double>(clipped_[i]) / static_cast<double>(total_[i]);
        } else if (n >= 2 && smooth_) {
            p = 1.0 / static_cast<double>(total_[i] + 1);
        } else {
            p = 0.0;
        }
        r.precisions[i] = p;
        if (p <= 0.0) return r;  // any hard-zero precision pins the score at 0
        log_sum += std::log(p);
    }
    r.brevity_penalty =
        hyp_tokens_ >= ref_tokens_
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref_tokens_) / static_cast<double>(hyp_tokens_));
    r.score = 100.0 * r.brevity_penalty * std::exp(log_sum / max_n_);
    return r;
}

BleuReport bleu(std::span<const TokenId> hypothesis, std::span<const TokenId> reference,
                int max_n, bool add_one_smoothing) {
    BleuAccumulator acc(max_n, add_one_smoothing);
    acc.add(hypothesis, reference);
    return acc.report();
}

double s_bleu(const SentenceCorpus& hypotheses, const SentenceCorpus& references) {
    require(hypotheses.size() == references.size(),
            "s_bleu needs one hypothesis per reference sentence");
    BleuAccumulator acc;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) acc.add(hypotheses[i], references[i]);
    return acc.report().score;
}

namespace {

Sentence flatten_document(const std::vector<Sentence>& sentences) {
    Sentence flat;
    for (const Sentence& s : sentences) {
        for (TokenId t : s) {
            if (t != kSepId) flat.push_back(t);
        }
    }
    return flat;
}

}  // namespace

double d_bleu(const DocCorpus& hypotheses, const DocCorpus& references) {
    require(hypotheses.size() == references.size(),
            "d_bleu needs one hypothesis per reference document");
    BleuAccumulator acc;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        acc.add(flatten_document(hypotheses[i]), flatten_document(references[i]));
    }
    return acc.report().score;
}

int pick_candidate(std::span<const double> scores) {
    require(!scores.empty(), "candidate pick needs at least one score");
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
        if (scores[i] > scores[best]) best = i;  // strict: ties keep the lower index
    }
    return best;
}

ContrastiveResult contrastive_accuracy(std::span<const ContrastiveItem> suite,
                                       const CandidateScorer& scorer) {
    require(!suite.empty(), "contrastive suite must be non-empty");
    ContrastiveResult result;
    result.total = suite.size();
    for (const ContrastiveItem& item : suite) {
        std::array<double, kContrastiveCandidates> scores{};
        for (int c = 0; c < kContrastiveCandidates; ++c) scores[static_cast<std::size_t>(c)] = scorer(item, c);
        if (pick_candidate(scores) == item.correct_index) ++result.correct;
    }
    return result;
}

}  // namespace doctrans
