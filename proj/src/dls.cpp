#include "doctrans/dls.hpp"

#include <cmath>

#include "doctrans/errors.hpp"
#include "doctrans/linalg.hpp"

namespace doctrans {

double dls_temperature(int epoch, double gamma) {
    require(epoch >= 1, "epoch index is 1-based");
    return std::exp(static_cast<double>(epoch) - gamma);
}

Eigen::VectorXd length_log_distribution(int max_len, double temperature) {
    require(max_len >= 1, "max_len must be at least 1");
    require(temperature > 0.0, "temperature must be positive");
    Eigen::VectorXd scaled(max_len);
    for (int l = 1; l <= max_len; ++l) {
        scaled[l - 1] = -static_cast<double>(l) / temperature;
    }
    const double norm = logsumexp(scaled);
    return scaled.array() - norm;
}

LengthSchedule LengthSchedule::make(int max_len, double gamma, int epoch) {
    LengthSchedule s;
    s.max_len = max_len;
    s.gamma = gamma;
    s.epoch = epoch;
    s.temperature = dls_temperature(epoch, gamma);
    s.log_probs = length_log_distribution(max_len, s.temperature);
    return s;
}

int sample_length(const LengthSchedule& schedule, Rng& rng) {
    const double r = rng.next_real();
    double cum = 0.0;
    for (int l = 1; l <= schedule.max_len; ++l) {
        cum += std::exp(schedule.log_probs[l - 1]);
        if (r < cum) return l;
    }
    return schedule.max_len;
}

std::vector<int> sample_lengths(const LengthSchedule& schedule, Rng& rng, int count) {
    std::vector<int> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(sample_length(schedule, rng));
    return out;
}

namespace {

// Side lengths of sentences a..b (inclusive) under the given accounting.
std::pair<long, long> span_lengths(const Document& doc, int a, int b, LengthAccounting acc) {
    long src = 0, tgt = 0;
    for (int i = a; i <= b; ++i) {
        src += static_cast<long>(doc.sentences[i].source.size());
        tgt += static_cast<long>(doc.sentences[i].target.size());
    }
    if (acc == LengthAccounting::encoded) {
        const long overhead = 2 + (b - a);  // BOS + EOS + separators
        src += overhead;
        tgt += overhead;
    }
    return {src, tgt};
}

}  // namespace

std::vector<Segment> segment_document(const Document& doc,
                                      const std::function<int()>& next_budget,
                                      LengthAccounting accounting) {
    require(!doc.sentences.empty(), "document has no sentences");
    const int m = static_cast<int>(doc.sentences.size());
    std::vector<Segment> segments;
    int a = 0;
    while (a < m) {
        const int budget = next_budget();
        auto [src, tgt] = span_lengths(doc, a, a, accounting);
        Segment seg;
        seg.doc_id = doc.id;
        seg.first_sentence = a;
        seg.budget = budget;
        if (src > budget || tgt > budget) {
            seg.last_sentence = a;
            seg.src_len = src;
            seg.tgt_len = tgt;
            seg.oversized = true;
            segments.push_back(seg);
            ++a;
            continue;
        }
        int b = a;
        long cur_src = src, cur_tgt = tgt;
        while (b + 1 < m) {
            auto [next_src, next_tgt] = span_lengths(doc, a, b + 1, accounting);
            if (next_src > budget || next_tgt > budget) break;
            ++b;
            cur_src = next_src;
            cur_tgt = next_tgt;
        }
        seg.last_sentence = b;
        seg.src_len = cur_src;
        seg.tgt_len = cur_tgt;
        segments.push_back(seg);
        a = b + 1;
    }
    return segments;
}

namespace {

EpochData finish_epoch(std::vector<Segment> segments, int epoch) {
    EpochData data;
    data.epoch = epoch;
    double sum = 0.0;
    for (const auto& seg : segments) sum += static_cast<double>(seg.max_len());
    data.iota = segments.empty() ? 0.0 : sum / static_cast<double>(segments.size());
    data.segments = std::move(segments);
    return data;
}

}  // namespace

EpochData build_epoch(const std::vector<Document>& corpus, int epoch, double gamma,
                      int max_len, std::uint64_t seed) {
    require(!corpus.empty(), "corpus is empty");
    const LengthSchedule schedule = LengthSchedule::make(max_len, gamma, epoch);
    std::vector<Segment> segments;
    for (const auto& doc : corpus) {
        Rng doc_rng(derive_seed(seed, doc.id));
        auto budgets = [&]() { return sample_length(schedule, doc_rng); };
        auto doc_segments = segment_document(doc, budgets, LengthAccounting::encoded);
        segments.insert(segments.end(), doc_segments.begin(), doc_segments.end());
    }
    Rng shuffle_rng(derive_seed(seed, "shuffle"));
    shuffle_rng.shuffle(segments);
    return finish_epoch(std::move(segments), epoch);
}

EpochData build_fixed_packing(const std::vector<Document>& corpus, int max_len) {
    require(!corpus.empty(), "corpus is empty");
    std::vector<Segment> segments;
    for (const auto& doc : corpus) {
        auto budgets = [max_len]() { return max_len; };
        auto doc_segments = segment_document(doc, budgets, LengthAccounting::encoded);
        segments.insert(segments.end(), doc_segments.begin(), doc_segments.end());
    }
    return finish_epoch(std::move(segments), 1);
}

std::vector<SentencePair> segment_sentences(const Document& doc, const Segment& seg) {
    return {doc.sentences.begin() + seg.first_sentence,
            doc.sentences.begin() + seg.last_sentence + 1};
}

}  // namespace doctrans
