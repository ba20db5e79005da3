#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "doctrans/corpus.hpp"
#include "doctrans/dls.hpp"
#include "doctrans/rng.hpp"

using namespace doctrans;

namespace {

Document doc_with_source_lengths(const std::vector<int>& lengths) {
    Document doc;
    doc.id = "fixture";
    for (int len : lengths) {
        SentencePair pair;
        for (int i = 0; i < len; ++i) {
            pair.source.push_back(11 + i);
            pair.target.push_back(11 + i);
        }
        doc.sentences.push_back(std::move(pair));
    }
    return doc;
}

std::function<int()> budget_list(std::vector<int> budgets) {
    auto state = std::make_shared<std::pair<std::vector<int>, std::size_t>>(std::move(budgets), 0);
    return [state]() {
        REQUIRE(state->second < state->first.size());
        return state->first[state->second++];
    };
}

}  // namespace

TEST_CASE("temperature schedule follows e^(ep - gamma)") {
    CHECK(dls_temperature(5, 5.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(dls_temperature(1, 5.0) == doctest::Approx(0.01831563889).epsilon(1e-9));
    CHECK(dls_temperature(10, 5.0) == doctest::Approx(148.4131591).epsilon(1e-9));
    CHECK_THROWS_AS(dls_temperature(0, 5.0), ContractViolation);
}

TEST_CASE("length distribution matches the hand-computed three-length case") {
    const Eigen::VectorXd p = LengthSchedule::make(3, 5.0, 5).probs();  // T = 1
    REQUIRE(p.size() == 3);
    CHECK(p[0] == doctest::Approx(0.6652409558).epsilon(1e-8));
    CHECK(p[1] == doctest::Approx(0.2447284711).epsilon(1e-8));
    CHECK(p[2] == doctest::Approx(0.0900305731).epsilon(1e-8));
}

TEST_CASE("high temperature flattens the distribution toward uniform") {
    const Eigen::VectorXd p = length_log_distribution(8, std::exp(5.0)).array().exp();
    for (int l = 0; l < 8; ++l) CHECK(std::abs(p[l] - 0.125) < 0.005);
}

TEST_CASE("low temperature collapses all mass onto length one") {
    const Eigen::VectorXd log_p = length_log_distribution(8, std::exp(-4.0));
    CHECK(std::exp(log_p[0]) > 1.0 - 1e-12);
}

TEST_CASE("the distribution normalizes and stays finite across the full grid") {
    for (int max_len : {1, 3, 64, 512, 4096}) {
        for (double log_t : {-10.0, -4.0, 0.0, 4.0, 10.0}) {
            const Eigen::VectorXd log_p = length_log_distribution(max_len, std::exp(log_t));
            CHECK(!log_p.hasNaN());
            CHECK(log_p.maxCoeff() <= 0.0);
            CHECK(log_p.array().exp().sum() == doctest::Approx(1.0).epsilon(1e-9));

            // p_l strictly decreasing in l.
            for (int l = 1; l < max_len; ++l) CHECK(log_p[l - 1] > log_p[l]);
        }
    }
}

TEST_CASE("raising the temperature moves the distribution toward uniform") {
    const int max_len = 16;
    double prev_gap = 2.0;
    for (double log_t : {-2.0, -1.0, 0.0, 1.0, 2.0, 3.0}) {
        const Eigen::VectorXd p = length_log_distribution(max_len, std::exp(log_t)).array().exp();
        const double gap = (p.array() - 1.0 / max_len).abs().maxCoeff();
        CHECK(gap <= prev_gap + 1e-12);
        prev_gap = gap;
    }
}

TEST_CASE("sampled lengths match the schedule empirically") {
    const LengthSchedule schedule = LengthSchedule::make(3, 5.0, 5);  // T = 1
    Rng rng(404);
    const auto draws = sample_lengths(schedule, rng, 100000);

    Eigen::Vector3d counts = Eigen::Vector3d::Zero();
    for (int draw : draws) {
        REQUIRE(draw >= 1);
        REQUIRE(draw <= 3);
        counts[draw - 1] += 1.0;
    }
    const Eigen::Vector3d expected{0.6652409558, 0.2447284711, 0.0900305731};
    double chi2 = 0.0;
    for (int l = 0; l < 3; ++l) {
        const double freq = counts[l] / 100000.0;
        CHECK(std::abs(freq - expected[l]) < 0.01);
        const double e = expected[l] * 100000.0;
        chi2 += (counts[l] - e) * (counts[l] - e) / e;
    }
    CHECK(chi2 < 13.8155);  // 0.999 quantile of chi-square with 2 degrees of freedom

    Rng rng2(404);
    CHECK(sample_lengths(schedule, rng2, 100000) == draws);
}

TEST_CASE("segmentation reproduces the worked raw-length example") {
    const Document doc = doc_with_source_lengths({9, 15, 25, 8});
    const auto segments =
        segment_document(doc, budget_list({35, 1, 12}), LengthAccounting::raw);

    REQUIRE(segments.size() == 3);
    CHECK(segments[0].first_sentence == 0);
    CHECK(segments[0].last_sentence == 1);
    CHECK(segments[0].src_len == 24);
    CHECK(!segments[0].oversized);

    CHECK(segments[1].first_sentence == 2);
    CHECK(segments[1].last_sentence == 2);
    CHECK(segments[1].src_len == 25);
    CHECK(segments[1].oversized);  // 25 > budget 1, single-sentence exception

    CHECK(segments[2].first_sentence == 3);
    CHECK(segments[2].last_sentence == 3);
    CHECK(segments[2].src_len == 8);
    CHECK(!segments[2].oversized);
}

TEST_CASE("a single-sentence document always yields one covering segment") {
    const Document doc = doc_with_source_lengths({6});
    for (int budget : {1, 6, 100}) {
        const auto segments = segment_document(doc, [budget]() { return budget; });
        REQUIRE(segments.size() == 1);
        CHECK(segments[0].first_sentence == 0);
        CHECK(segments[0].last_sentence == 0);
        CHECK(segments[0].oversized == (segments[0].max_len() > budget));
    }
}

TEST_CASE("encoded accounting includes framing overhead") {
    const Document doc = doc_with_source_lengths({3, 3});
    // Encoded lengths: one sentence = 5, both = 9.
    auto segments = segment_document(doc, budget_list({8, 8}), LengthAccounting::encoded);
    REQUIRE(segments.size() == 2);
    CHECK(segments[0].src_len == 5);

    segments = segment_document(doc, budget_list({9}), LengthAccounting::encoded);
    REQUIRE(segments.size() == 1);
    CHECK(segments[0].src_len == 9);
}

TEST_CASE("the target side also constrains packing") {
    Document doc;
    doc.id = "lopsided";
    doc.sentences.push_back({{11, 12}, {21, 22, 23, 24, 25, 26, 27, 28}});
    doc.sentences.push_back({{13, 14}, {29, 30, 31, 32, 33, 34, 35, 36}});
    // Source pair would fit budget 10 encoded (2+2+3 = 7), targets do not
    // (8+8+3 = 19), so the segments must split.
    const auto segments = segment_document(doc, budget_list({10, 10}));
    REQUIRE(segments.size() == 2);
    CHECK(segments[0].last_sentence == 0);
    CHECK(segments[0].tgt_len == 10);       // one target sentence plus framing
    CHECK_FALSE(segments[0].oversized);     // fits alone, just cannot extend
}

TEST_CASE("exactly one budget is consumed per emitted segment") {
    GenConfig config;
    config.doc_count = 30;
    config.min_sentences = 1;
    config.max_sentences = 8;
    config.seed = 77;
    Rng rng(5);
    for (const auto& doc : generate_corpus(config)) {
        int consumed = 0;
        auto budgets = [&]() {
            ++consumed;
            return rng.uniform_int(1, 40);
        };
        const auto segments = segment_document(doc, budgets);
        CHECK(consumed == static_cast<int>(segments.size()));
    }
}

TEST_CASE("segments partition every document and respect their budgets") {
    GenConfig config;
    config.doc_count = 1000;
    config.min_sentences = 1;
    config.max_sentences = 10;
    config.min_sentence_len = 1;
    config.max_sentence_len = 20;
    config.seed = 99;
    Rng rng(17);
    for (const auto& doc : generate_corpus(config)) {
        auto budgets = [&]() { return rng.uniform_int(1, 48); };
        const auto segments = segment_document(doc, budgets);

        int next = 0;
        for (const auto& seg : segments) {
            CHECK(seg.first_sentence == next);
            CHECK(seg.first_sentence <= seg.last_sentence);
            next = seg.last_sentence + 1;
            if (seg.oversized) {
                CHECK(seg.first_sentence == seg.last_sentence);
                CHECK(seg.max_len() > seg.budget);
            } else {
                CHECK(seg.src_len <= seg.budget);
                CHECK(seg.tgt_len <= seg.budget);
            }

            // Recorded lengths match a direct recount of the covered span.
            const auto sentences = segment_sentences(doc, seg);
            std::vector<std::vector<TokenId>> src_side, tgt_side;
            for (const auto& p : sentences) {
                src_side.push_back(p.source);
                tgt_side.push_back(p.target);
            }
            CHECK(seg.src_len == encoded_length(src_side));
            CHECK(seg.tgt_len == encoded_length(tgt_side));
        }
        CHECK(next == static_cast<int>(doc.sentences.size()));
    }
}

TEST_CASE("build_epoch is deterministic and covers the corpus") {
    GenConfig config;
    config.doc_count = 40;
    config.min_sentences = 2;
    config.max_sentences = 8;
    config.seed = 15;
    const auto corpus = generate_corpus(config);

    const EpochData a = build_epoch(corpus, 3, 5.0, 32, 1234);
    const EpochData b = build_epoch(corpus, 3, 5.0, 32, 1234);
    REQUIRE(a.segments.size() == b.segments.size());
    for (std::size_t i = 0; i < a.segments.size(); ++i) {
        CHECK(a.segments[i].doc_id == b.segments[i].doc_id);
        CHECK(a.segments[i].first_sentence == b.segments[i].first_sentence);
        CHECK(a.segments[i].last_sentence == b.segments[i].last_sentence);
    }
    CHECK(a.iota == b.iota);
    CHECK(a.epoch == 3);

    // Per-document segments, regrouped, tile each document exactly.
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        std::vector<Segment> mine;
        for (const auto& seg : a.segments) {
            if (seg.doc_id == corpus[d].id) mine.push_back(seg);
        }
        std::sort(mine.begin(), mine.end(), [](const Segment& x, const Segment& y) {
            return x.first_sentence < y.first_sentence;
        });
        int next = 0;
        for (const auto& seg : mine) {
            CHECK(seg.first_sentence == next);
            next = seg.last_sentence + 1;
        }
        CHECK(next == static_cast<int>(corpus[d].sentences.size()));
    }

    // iota is the mean of max(src_len, tgt_len) over segments.
    double sum = 0.0;
    for (const auto& seg : a.segments) sum += static_cast<double>(seg.max_len());
    CHECK(a.iota == doctest::Approx(sum / static_cast<double>(a.segments.size())));
}

TEST_CASE("single-sentence corpora pin iota to the mean encoded sentence length") {
    GenConfig config;
    config.doc_count = 60;
    config.min_sentences = 1;
    config.max_sentences = 1;
    config.seed = 8;
    const auto corpus = generate_corpus(config);

    double expected = 0.0;
    for (const auto& doc : corpus) {
        expected += static_cast<double>(
            std::max(doc.sentences[0].source.size(), doc.sentences[0].target.size()) + 2);
    }
    expected /= static_cast<double>(corpus.size());

    const EpochData data = build_epoch(corpus, 12, 5.0, 64, 7);  // T = e^7, near-uniform budgets
    CHECK(data.iota == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("late epochs produce longer segments than the first epoch") {
    GenConfig config;
    config.doc_count = 50;
    config.min_sentences = 6;
    config.max_sentences = 12;
    config.seed = 4;
    const auto corpus = generate_corpus(config);

    const double iota_early = build_epoch(corpus, 1, 5.0, 96, 11).iota;
    const double iota_late = build_epoch(corpus, 12, 5.0, 96, 11).iota;
    CHECK(iota_late > iota_early);
}

TEST_CASE("iota grows monotonically under a gamma-2 schedule") {
    GenConfig config;
    config.doc_count = 80;
    config.min_sentences = 6;
    config.max_sentences = 12;
    config.seed = 31;
    const auto corpus = generate_corpus(config);

    double prev = 0.0;
    for (int ep = 1; ep <= 6; ++ep) {
        const double iota = build_epoch(corpus, ep, 2.0, 96, 11).iota;
        CHECK(iota >= prev);
        prev = iota;
    }
}

TEST_CASE("fixed packing uses the full budget for every document") {
    GenConfig config;
    config.doc_count = 30;
    config.min_sentences = 2;
    config.max_sentences = 10;
    config.seed = 2;
    const auto corpus = generate_corpus(config);

    const EpochData data = build_fixed_packing(corpus, 48);
    for (const auto& seg : data.segments) {
        CHECK(seg.budget == 48);
        if (!seg.oversized) CHECK(seg.max_len() <= 48);
    }
    CHECK(build_fixed_packing(corpus, 48).iota == data.iota);
}
