#include "doctrans/corpus.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctrans/rng.hpp"

namespace doctrans {

using json = nlohmann::json;

namespace {

constexpr int kMinVocab = kNumReserved + 2 * TokenRoles::kNumCues + 2;

std::string padded_index(const char* prefix, int index) {
    std::ostringstream oss;
    oss << prefix;
    std::string digits = std::to_string(index);
    for (std::size_t i = digits.size(); i < 6; ++i) oss << '0';
    oss << digits;
    return oss.str();
}

void check_range(int lo, int hi, const char* what) {
    if (lo > hi) {
        throw ConfigError(std::string(what) + " range is empty: min " + std::to_string(lo) +
                          " > max " + std::to_string(hi));
    }
    if (lo < 1) throw ConfigError(std::string(what) + " must be at least 1");
}

}  // namespace

Vocab Vocab::synthetic(int vocab_size) {
    const TokenRoles roles = TokenRoles::for_vocab(vocab_size);
    Vocab v;
    v.symbols = {"<pad>", "<bos>", "<eos>", "<sep>"};
    v.symbols.reserve(vocab_size);
    for (int i = 0; i < TokenRoles::kNumCues; ++i) v.symbols.push_back("cue" + std::to_string(i));
    for (int i = 0; i < TokenRoles::kNumCues; ++i) v.symbols.push_back("var" + std::to_string(i));
    v.symbols.push_back("amb");
    for (TokenId t = roles.first_regular; t < vocab_size; ++t) {
        v.symbols.push_back(padded_index("tok", t));
    }
    return v;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open vocab file for writing: " + path);
    for (const auto& s : symbols) out << s << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open vocab file: " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) v.symbols.push_back(line);
    return v;
}

TokenRoles TokenRoles::for_vocab(int vocab_size) {
    if (vocab_size < kMinVocab) {
        throw ConfigError("vocab_size must be at least " + std::to_string(kMinVocab) +
                          ", got " + std::to_string(vocab_size));
    }
    TokenRoles r;
    r.vocab_size = vocab_size;
    for (int i = 0; i < kNumCues; ++i) r.cues[i] = kNumReserved + i;
    for (int i = 0; i < kNumCues; ++i) r.variants[i] = kNumReserved + kNumCues + i;
    r.ambiguous = kNumReserved + 2 * kNumCues;
    r.first_regular = r.ambiguous + 1;
    return r;
}

TokenId TokenRoles::substitute(TokenId source_token) const {
    const int content = vocab_size - kNumReserved;
    const int rot = content / 2;
    return kNumReserved + (source_token - kNumReserved + rot) % content;
}

int TokenRoles::cue_index(TokenId token) const {
    for (int i = 0; i < kNumCues; ++i) {
        if (cues[i] == token) return i;
    }
    return -1;
}

std::vector<Document> generate_corpus(const GenConfig& config) {
    check_range(config.min_sentence_len, config.max_sentence_len, "sentence length");
    check_range(config.min_sentences, config.max_sentences, "sentences per document");
    if (config.doc_count < 0) throw ConfigError("doc_count must be non-negative");
    if (config.cue_prob < 0 || config.ambiguous_prob < 0 ||
        config.cue_prob + config.ambiguous_prob >= 1.0) {
        throw ConfigError("cue/ambiguous probabilities must be non-negative and sum below 1");
    }
    const TokenRoles roles = TokenRoles::for_vocab(config.vocab_size);

    Rng rng(config.seed);
    std::vector<Document> corpus;
    corpus.reserve(config.doc_count);
    for (int d = 0; d < config.doc_count; ++d) {
        Document doc;
        doc.id = padded_index("doc", d);
        const int num_sentences = rng.uniform_int(config.min_sentences, config.max_sentences);
        int last_cue = -1;
        for (int s = 0; s < num_sentences; ++s) {
            SentencePair pair;
            const int len = rng.uniform_int(config.min_sentence_len, config.max_sentence_len);
            pair.source.reserve(len);
            pair.target.reserve(len);
            for (int p = 0; p < len; ++p) {
                TokenId src;
                if (rng.bernoulli(config.cue_prob)) {
                    const int cue = rng.uniform_int(0, TokenRoles::kNumCues - 1);
                    src = roles.cues[cue];
                    pair.target.push_back(roles.substitute(src));
                    last_cue = cue;
                } else if (last_cue >= 0 && rng.bernoulli(config.ambiguous_prob)) {
                    src = roles.ambiguous;
                    pair.target.push_back(roles.variants[last_cue]);
                } else {
                    src = roles.first_regular +
                          static_cast<TokenId>(rng.bounded(roles.regular_count()));
                    pair.target.push_back(roles.substitute(src));
                }
                pair.source.push_back(src);
            }
            doc.sentences.push_back(std::move(pair));
        }
        corpus.push_back(std::move(doc));
    }
    return corpus;
}

std::vector<TokenId> encode_side(std::span<const std::vector<TokenId>> sentences) {
    require(!sentences.empty(), "encode_side: sentence list is empty");
    std::vector<TokenId> out;
    long total = 2 + static_cast<long>(sentences.size()) - 1;
    for (const auto& s : sentences) total += static_cast<long>(s.size());
    out.reserve(total);
    out.push_back(kBosId);
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (i > 0) out.push_back(kSepId);
        out.insert(out.end(), sentences[i].begin(), sentences[i].end());
    }
    out.push_back(kEosId);
    return out;
}

std::pair<std::vector<TokenId>, std::vector<TokenId>> encode_segment(
    std::span<const SentencePair> sentences) {
    require(!sentences.empty(), "encode_segment: sentence list is empty");
    std::vector<std::vector<TokenId>> src, tgt;
    src.reserve(sentences.size());
    tgt.reserve(sentences.size());
    for (const auto& p : sentences) {
        src.push_back(p.source);
        tgt.push_back(p.target);
    }
    return {encode_side(src), encode_side(tgt)};
}

std::vector<std::vector<TokenId>> decode_side(const std::vector<TokenId>& encoded) {
    if (encoded.size() < 2 || encoded.front() != kBosId || encoded.back() != kEosId) {
        throw ParseError("decode_side: sequence must start with BOS and end with EOS");
    }
    std::vector<std::vector<TokenId>> sentences(1);
    for (std::size_t i = 1; i + 1 < encoded.size(); ++i) {
        if (encoded[i] == kSepId) {
            sentences.emplace_back();
        } else if (encoded[i] == kBosId || encoded[i] == kEosId) {
            throw ParseError("decode_side: reserved token inside content");
        } else {
            sentences.back().push_back(encoded[i]);
        }
    }
    return sentences;
}

std::vector<SentencePair> decode_segment(const std::vector<TokenId>& source,
                                         const std::vector<TokenId>& target) {
    auto src = decode_side(source);
    auto tgt = decode_side(target);
    if (src.size() != tgt.size()) {
        throw ParseError("decode_segment: source and target sentence counts differ");
    }
    std::vector<SentencePair> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        out[i] = SentencePair{std::move(src[i]), std::move(tgt[i])};
    }
    return out;
}

long encoded_length(std::span<const std::vector<TokenId>> sentences) {
    long total = 2 + static_cast<long>(sentences.size()) - 1;
    for (const auto& s : sentences) total += static_cast<long>(s.size());
    return total;
}

namespace {

json sentences_to_json(const std::vector<SentencePair>& sentences) {
    json arr = json::array();
    for (const auto& p : sentences) {
        arr.push_back(json{{"src", p.source}, {"tgt", p.target}});
    }
    return arr;
}

std::vector<SentencePair> sentences_from_json(const json& arr) {
    std::vector<SentencePair> out;
    for (const auto& item : arr) {
        SentencePair p;
        p.source = item.at("src").get<std::vector<TokenId>>();
        p.target = item.at("tgt").get<std::vector<TokenId>>();
        out.push_back(std::move(p));
    }
    return out;
}

template <class Fn>
void for_each_record(const std::string& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json record;
        try {
            record = json::parse(line);
            fn(record);
        } catch (const json::exception& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

}  // namespace

void save_corpus(const std::vector<Document>& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open file for writing: " + path);
    for (const auto& doc : corpus) {
        json record{{"id", doc.id}, {"sentences", sentences_to_json(doc.sentences)}};
        out << record.dump() << '\n';
    }
}

std::vector<Document> load_corpus(const std::string& path) {
    std::vector<Document> corpus;
    for_each_record(path, [&](const json& record) {
        Document doc;
        doc.id = record.at("id").get<std::string>();
        doc.sentences = sentences_from_json(record.at("sentences"));
        corpus.push_back(std::move(doc));
    });
    return corpus;
}

std::vector<ContrastiveItem> generate_contrastive_suite(const ContrastiveConfig& config) {
    check_range(config.min_sentence_len, config.max_sentence_len, "sentence length");
    check_range(config.min_sentences, config.max_sentences, "sentences per document");
    if (config.min_distance < 0 || config.min_distance > config.max_distance) {
        throw ConfigError("antecedent distance range is empty");
    }
    if (config.max_distance > config.max_sentences - 1) {
        throw ConfigError("antecedent distance " + std::to_string(config.max_distance) +
                          " cannot fit in documents of at most " +
                          std::to_string(config.max_sentences) + " sentences");
    }
    if (config.min_distance == 0 && config.min_sentence_len < 2) {
        throw ConfigError("distance 0 requires sentences of at least 2 tokens");
    }
    const TokenRoles roles = TokenRoles::for_vocab(config.vocab_size);

    Rng rng(config.seed);
    std::vector<ContrastiveItem> suite;
    suite.reserve(config.item_count);
    for (int n = 0; n < config.item_count; ++n) {
        ContrastiveItem item;
        item.antecedent_distance = rng.uniform_int(config.min_distance, config.max_distance);
        const int min_m = std::max(config.min_sentences, item.antecedent_distance + 1);
        const int m = rng.uniform_int(min_m, config.max_sentences);
        item.ambiguous_sentence = rng.uniform_int(item.antecedent_distance, m - 1);
        const int cue_sentence = item.ambiguous_sentence - item.antecedent_distance;
        item.correct_index = rng.uniform_int(0, TokenRoles::kNumCues - 1);

        Document doc;
        doc.id = padded_index("contra", n);
        for (int s = 0; s < m; ++s) {
            SentencePair pair;
            const int len = rng.uniform_int(config.min_sentence_len, config.max_sentence_len);
            for (int p = 0; p < len; ++p) {
                const TokenId t = roles.first_regular +
                                  static_cast<TokenId>(rng.bounded(roles.regular_count()));
                pair.source.push_back(t);
                pair.target.push_back(roles.substitute(t));
            }
            doc.sentences.push_back(std::move(pair));
        }

        // Place the single cue, then the single ambiguous token after it.
        auto& cue_sent = doc.sentences[cue_sentence];
        auto& amb_sent = doc.sentences[item.ambiguous_sentence];
        int cue_pos, amb_pos;
        if (item.antecedent_distance == 0) {
            cue_pos = rng.uniform_int(0, static_cast<int>(cue_sent.source.size()) - 2);
            amb_pos = rng.uniform_int(cue_pos + 1, static_cast<int>(cue_sent.source.size()) - 1);
        } else {
            cue_pos = rng.uniform_int(0, static_cast<int>(cue_sent.source.size()) - 1);
            amb_pos = rng.uniform_int(0, static_cast<int>(amb_sent.source.size()) - 1);
        }
        const TokenId cue_token = roles.cues[item.correct_index];
        cue_sent.source[cue_pos] = cue_token;
        cue_sent.target[cue_pos] = roles.substitute(cue_token);
        amb_sent.source[amb_pos] = roles.ambiguous;
        amb_sent.target[amb_pos] = roles.variants[item.correct_index];

        for (int k = 0; k < TokenRoles::kNumCues; ++k) {
            std::vector<std::vector<TokenId>> candidate;
            for (const auto& p : doc.sentences) candidate.push_back(p.target);
            candidate[item.ambiguous_sentence][amb_pos] = roles.variants[k];
            item.candidates[k] = std::move(candidate);
        }
        item.document = std::move(doc);
        suite.push_back(std::move(item));
    }
    return suite;
}

void save_contrastive_suite(const std::vector<ContrastiveItem>& suite, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open file for writing: " + path);
    for (const auto& item : suite) {
        json record{{"id", item.document.id},
                    {"sentences", sentences_to_json(item.document.sentences)},
                    {"candidates", item.candidates},
                    {"correct_index", item.correct_index},
                    {"antecedent_distance", item.antecedent_distance},
                    {"ambiguous_sentence", item.ambiguous_sentence}};
        out << record.dump() << '\n';
    }
}

std::vector<ContrastiveItem> load_contrastive_suite(const std::string& path) {
    std::vector<ContrastiveItem> suite;
    for_each_record(path, [&](const json& record) {
        ContrastiveItem item;
        item.document.id = record.at("id").get<std::string>();
        item.document.sentences = sentences_from_json(record.at("sentences"));
        const auto& cands = record.at("candidates");
        if (cands.size() != item.candidates.size()) {
            throw ParseError("contrastive record must carry exactly 3 candidates");
        }
        for (std::size_t k = 0; k < item.candidates.size(); ++k) {
            item.candidates[k] = cands[k].get<std::vector<std::vector<TokenId>>>();
        }
        item.correct_index = record.at("correct_index").get<int>();
        item.antecedent_distance = record.at("antecedent_distance").get<int>();
        item.ambiguous_sentence = record.at("ambiguous_sentence").get<int>();
        suite.push_back(std::move(item));
    });
    return suite;
}

}  // namespace doctrans
