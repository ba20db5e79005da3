#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "doctrans/errors.hpp"

namespace doctrans {

using TokenId = std::int32_t;

// Reserved ids sit below all content symbols in every vocabulary.
constexpr TokenId kPadId = 0;
constexpr TokenId kBosId = 1;
constexpr TokenId kEosId = 2;
constexpr TokenId kSepId = 3;
constexpr int kNumReserved = 4;

struct Vocab {
    std::vector<std::string> symbols;

    int size() const { return static_cast<int>(symbols.size()); }

    // Reserved symbols first, then generated content surface strings.
    static Vocab synthetic(int vocab_size);
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);
};

struct SentencePair {
    std::vector<TokenId> source;
    std::vector<TokenId> target;

    bool operator==(const SentencePair&) const = default;
};

struct Document {
    std::string id;
    std::vector<SentencePair> sentences;

    bool operator==(const Document&) const = default;
};

// Token-role split of the synthetic vocabulary. The target side of a
// sentence is a fixed rotation of the source ids, except the ambiguous
// token, whose target is the variant selected by the most recent cue
// token anywhere earlier in the document.
struct TokenRoles {
    static constexpr int kNumCues = 3;
    std::array<TokenId, kNumCues> cues;
    std::array<TokenId, kNumCues> variants;
    TokenId ambiguous;
    TokenId first_regular;
    int vocab_size;

    static TokenRoles for_vocab(int vocab_size);
    int regular_count() const { return vocab_size - first_regular; }
    TokenId substitute(TokenId source_token) const;  // the fixed cipher
    int cue_index(TokenId token) const;              // -1 if not a cue
};

struct GenConfig {
    int vocab_size = 64;
    int doc_count = 1;
    int min_sentence_len = 3;
    int max_sentence_len = 10;
    int min_sentences = 1;
    int max_sentences = 4;
    double cue_prob = 0.12;
    double ambiguous_prob = 0.10;
    std::uint64_t seed = 0;
};

std::vector<Document> generate_corpus(const GenConfig& config);

// BOS s1 SEP s2 SEP ... sn EOS on both sides.
std::pair<std::vector<TokenId>, std::vector<TokenId>> encode_segment(
    std::span<const SentencePair> sentences);

std::vector<TokenId> encode_side(std::span<const std::vector<TokenId>> sentences);

// Inverse of encode_side: strips BOS/EOS and splits at SEP.
std::vector<std::vector<TokenId>> decode_side(const std::vector<TokenId>& encoded);

std::vector<SentencePair> decode_segment(const std::vector<TokenId>& source,
                                         const std::vector<TokenId>& target);

// Encoded token count of an n-sentence side: sum(|s_i|) + (n - 1) + 2.
long encoded_length(std::span<const std::vector<TokenId>> sentences);

void save_corpus(const std::vector<Document>& corpus, const std::string& path);
std::vector<Document> load_corpus(const std::string& path);

inline constexpr int kContrastiveCandidates = 3;

struct ContrastiveItem {
    Document document;  // exactly one ambiguous source token
    std::array<std::vector<std::vector<TokenId>>, kContrastiveCandidates>
        candidates;  // per-sentence target ids
    int correct_index = 0;
    int antecedent_distance = 0;  // sentences between cue and ambiguous token
    int ambiguous_sentence = 0;

    bool operator==(const ContrastiveItem&) const = default;
};

struct ContrastiveConfig {
    int item_count = 100;
    int vocab_size = 64;
    int min_sentence_len = 3;
    int max_sentence_len = 10;
    int min_sentences = 2;
    int max_sentences = 6;
    int min_distance = 0;
    int max_distance = 3;
    std::uint64_t seed = 0;
};

std::vector<ContrastiveItem> generate_contrastive_suite(const ContrastiveConfig& config);

void save_contrastive_suite(const std::vector<ContrastiveItem>& suite, const std::string& path);
std::vector<ContrastiveItem> load_contrastive_suite(const std::string& path);

}  // namespace doctrans
