// Operator surface: data generation, training, decoding, evaluation, and
// analysis commands over the doctrans library. Every command reads an
// optional INI config file, applies command-line overrides, validates the
// result, writes its outputs under --out, and echoes the effective config
// to <out>/config.ini so the run can be reproduced byte-for-byte.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "doctrans/attention.hpp"
#include "doctrans/corpus.hpp"
#include "doctrans/decoding.hpp"
#include "doctrans/dls.hpp"
#include "doctrans/errors.hpp"
#include "doctrans/metrics.hpp"
#include "doctrans/model.hpp"
#include "doctrans/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace doctrans;

namespace {

// ---------------------------------------------------------------------------
// Options and the section/key registry shared by the INI reader, the INI
// echo writer, and the command-line flags.
// ---------------------------------------------------------------------------

struct Options {
    // [run]
    std::uint64_t seed = 42;
    std::string out = "out";
    // [data]
    std::string data_dir = "data";
    std::string split = "test";
    int vocab = 64;
    int docs = 200;
    double valid_frac = 0.1;
    double test_frac = 0.1;
    int min_sentence_len = 3;
    int max_sentence_len = 10;
    int min_sentences = 1;
    int max_sentences = 4;
    double cue_prob = 0.12;
    double ambiguous_prob = 0.10;
    int contrastive_items = 100;
    int contrastive_min_sentences = 2;
    int contrastive_max_sentences = 6;
    int contrastive_min_distance = 0;
    int contrastive_max_distance = 3;
    // [model]
    std::string model_file = "model.ckpt";
    int layers = 2;
    int heads = 4;
    int d_model = 64;
    int d_ff = 256;
    int max_positions = 512;
    double dropout = 0.1;
    bool laa = true;
    // [train]
    int epochs = 12;
    double gamma = 5.0;
    int train_max_len = 128;
    bool dls = true;
    double lr = 5e-4;
    int warmup_steps = 40;
    long batch_token_budget = 512;
    double label_smoothing = 0.1;
    // [decode]
    std::string strategy = "sliding";
    int beam = 5;
    double alpha = 1.0;
    double window_frac = 0.8;
    int decode_max_len = 0;  // 0: use the checkpoint's training budget
    // [eval]
    std::string hyp = "decoded.jsonl";
    // [analyze]
    int bins = 16;
    std::string entropy_lengths = "16,64,256,1024";
    double entropy_iota = 64.0;
    int entropy_trials = 1000;
    int entropy_dk = 64;
    std::string sweep_lengths = "32,64,128";
};

enum class Kind { Int, Long, U64, Dbl, Bool, Str };

struct Entry {
    const char* section;
    const char* key;
    Kind kind;
    void* ptr;
    const char* help;
};

std::vector<Entry> registry(Options& o) {
    return {
        {"run", "seed", Kind::U64, &o.seed, "root seed for every random choice"},
        {"run", "out", Kind::Str, &o.out, "output directory"},

        {"data", "dir", Kind::Str, &o.data_dir, "directory holding the generated corpus files"},
        {"data", "split", Kind::Str, &o.split, "corpus split to read (train, valid, test)"},
        {"data", "vocab", Kind::Int, &o.vocab, "vocabulary size including reserved ids"},
        {"data", "docs", Kind::Int, &o.docs, "total documents across all splits"},
        {"data", "valid-frac", Kind::Dbl, &o.valid_frac, "fraction of documents in the valid split"},
        {"data", "test-frac", Kind::Dbl, &o.test_frac, "fraction of documents in the test split"},
        {"data", "min-sentence-len", Kind::Int, &o.min_sentence_len, "shortest sentence"},
        {"data", "max-sentence-len", Kind::Int, &o.max_sentence_len, "longest sentence"},
        {"data", "min-sentences", Kind::Int, &o.min_sentences, "fewest sentences per document"},
        {"data", "max-sentences", Kind::Int, &o.max_sentences, "most sentences per document"},
        {"data", "cue-prob", Kind::Dbl, &o.cue_prob, "per-token probability of a cue"},
        {"data", "ambiguous-prob", Kind::Dbl, &o.ambiguous_prob,
         "per-token probability of the ambiguous token"},
        {"data", "contrastive-items", Kind::Int, &o.contrastive_items,
         "contrastive suite size"},
        {"data", "contrastive-min-sentences", Kind::Int, &o.contrastive_min_sentences,
         "fewest sentences per suite document"},
        {"data", "contrastive-max-sentences", Kind::Int, &o.contrastive_max_sentences,
         "most sentences per suite document"},
        {"data", "contrastive-min-distance", Kind::Int, &o.contrastive_min_distance,
         "smallest cue-to-ambiguous sentence distance"},
        {"data", "contrastive-max-distance", Kind::Int, &o.contrastive_max_distance,
         "largest cue-to-ambiguous sentence distance"},

        {"model", "file", Kind::Str, &o.model_file, "checkpoint path"},
        {"model", "layers", Kind::Int, &o.layers, "encoder/decoder layer count"},
        {"model", "heads", Kind::Int, &o.heads, "attention heads"},
        {"model", "d-model", Kind::Int, &o.d_model, "model width"},
        {"model", "d-ff", Kind::Int, &o.d_ff, "feed-forward width"},
        {"model", "max-positions", Kind::Int, &o.max_positions, "positional capacity"},
        {"model", "dropout", Kind::Dbl, &o.dropout, "training dropout rate"},
        {"model", "laa", Kind::Bool, &o.laa, "length-aware attention scaling"},

        {"train", "epochs", Kind::Int, &o.epochs, "training epochs"},
        {"train", "gamma", Kind::Dbl, &o.gamma, "epoch offset of the length-temperature schedule"},
        {"train", "max-len", Kind::Int, &o.train_max_len, "per-segment encoded-token budget cap"},
        {"train", "dls", Kind::Bool, &o.dls, "resample segment lengths every epoch"},
        {"train", "lr", Kind::Dbl, &o.lr, "peak learning rate"},
        {"train", "warmup-steps", Kind::Int, &o.warmup_steps, "linear warmup steps"},
        {"train", "batch-token-budget", Kind::Long, &o.batch_token_budget,
         "target tokens accumulated per optimizer step"},
        {"train", "label-smoothing", Kind::Dbl, &o.label_smoothing, "label smoothing mass"},

        {"decode", "strategy", Kind::Str, &o.strategy, "standard, segmented, or sliding"},
        {"decode", "beam", Kind::Int, &o.beam, "beam width"},
        {"decode", "alpha", Kind::Dbl, &o.alpha, "length-normalization exponent"},
        {"decode", "window-frac", Kind::Dbl, &o.window_frac,
         "sliding window budget as a fraction of the effective length"},
        {"decode", "max-len", Kind::Int, &o.decode_max_len,
         "effective length at decode time (0: the checkpoint's training budget)"},

        {"eval", "hyp", Kind::Str, &o.hyp, "decoded hypothesis file to score"},

        {"analyze", "bins", Kind::Int, &o.bins, "histogram bin count for analyze lengths"},
        {"analyze", "entropy-lengths", Kind::Str, &o.entropy_lengths,
         "comma-separated attended lengths for analyze entropy"},
        {"analyze", "entropy-iota", Kind::Dbl, &o.entropy_iota,
         "reference length of the length-aware scale"},
        {"analyze", "entropy-trials", Kind::Int, &o.entropy_trials, "Monte-Carlo draws per length"},
        {"analyze", "entropy-dk", Kind::Int, &o.entropy_dk, "key dimension of the score sampler"},
        {"analyze", "sweep-lengths", Kind::Str, &o.sweep_lengths,
         "comma-separated effective lengths for analyze sweep"},
    };
}

// ---------------------------------------------------------------------------
// INI reading and echo writing.
// ---------------------------------------------------------------------------

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_value(const Entry& e) {
    switch (e.kind) {
        case Kind::Int: return std::to_string(*static_cast<int*>(e.ptr));
        case Kind::Long: return std::to_string(*static_cast<long*>(e.ptr));
        case Kind::U64: return std::to_string(*static_cast<std::uint64_t*>(e.ptr));
        case Kind::Dbl: return fmt_double(*static_cast<double*>(e.ptr));
        case Kind::Bool: return *static_cast<bool*>(e.ptr) ? "true" : "false";
        case Kind::Str: return *static_cast<std::string*>(e.ptr);
    }
    throw ConfigError("unknown option kind");
}

void assign_value(const Entry& e, const std::string& raw) {
    try {
        switch (e.kind) {
            case Kind::Int: *static_cast<int*>(e.ptr) = std::stoi(raw); return;
            case Kind::Long: *static_cast<long*>(e.ptr) = std::stol(raw); return;
            case Kind::U64: *static_cast<std::uint64_t*>(e.ptr) = std::stoull(raw); return;
            case Kind::Dbl: *static_cast<double*>(e.ptr) = std::stod(raw); return;
            case Kind::Bool: {
                if (raw == "true" || raw == "1") {
                    *static_cast<bool*>(e.ptr) = true;
                } else if (raw == "false" || raw == "0") {
                    *static_cast<bool*>(e.ptr) = false;
                } else {
                    throw ConfigError("expected true/false");
                }
                return;
            }
            case Kind::Str: *static_cast<std::string*>(e.ptr) = raw; return;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(std::string("bad value for ") + e.section + "." + e.key + ": " + raw);
    }
}

void apply_ini(const std::string& path, const std::vector<Entry>& entries) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const auto it = std::find_if(entries.begin(), entries.end(), [&](const Entry& e) {
            return section == e.section && key == e.key;
        });
        if (it == entries.end()) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown option [" +
                              section + "] " + key);
        }
        assign_value(*it, value);
    }
}

using KeySet = std::vector<std::pair<std::string, std::string>>;  // (section, key)

bool consumed(const KeySet& keys, const Entry& e) {
    return std::find(keys.begin(), keys.end(),
                     std::make_pair(std::string(e.section), std::string(e.key))) != keys.end();
}

// Echoes the resolved values of every option the command consumed, in
// registry order, so a re-run from the echo reproduces the run exactly.
void echo_config(const fs::path& out_dir, const std::vector<Entry>& entries, const KeySet& keys) {
    std::ofstream out(out_dir / "config.ini");
    if (!out) throw ParseError("cannot write " + (out_dir / "config.ini").string());
    std::string section;
    for (const Entry& e : entries) {
        if (!consumed(keys, e)) continue;
        if (section != e.section) {
            if (!section.empty()) out << '\n';
            section = e.section;
            out << '[' << section << "]\n";
        }
        out << e.key << " = " << format_value(e) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Shared pieces.
// ---------------------------------------------------------------------------

std::vector<int> parse_int_list(const std::string& raw, const std::string& what) {
    std::vector<int> values;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        try {
            values.push_back(std::stoi(t));
        } catch (const std::exception&) {
            throw ConfigError(what + ": bad integer '" + t + "'");
        }
    }
    if (values.empty()) throw ConfigError(what + " must list at least one length");
    for (int v : values) {
        if (v < 1) throw ConfigError(what + " entries must be positive");
    }
    return values;
}

ModelConfig model_config(const Options& o, int vocab_size) {
    ModelConfig mc;
    mc.layers = o.layers;
    mc.heads = o.heads;
    mc.d_model = o.d_model;
    mc.d_ff = o.d_ff;
    mc.vocab = vocab_size;
    mc.max_positions = o.max_positions;
    mc.dropout = o.dropout;
    mc.scale_mode = o.laa ? ScaleMode::laa : ScaleMode::baseline;
    return mc;
}

TrainConfig train_config(const Options& o) {
    TrainConfig tc;
    tc.epochs = o.epochs;
    tc.gamma = o.gamma;
    tc.max_len = o.train_max_len;
    tc.dls = o.dls;
    tc.seed = o.seed;
    tc.lr = o.lr;
    tc.warmup_steps = o.warmup_steps;
    tc.batch_token_budget = o.batch_token_budget;
    tc.label_smoothing = o.label_smoothing;
    return tc;
}

fs::path split_path(const Options& o) { return fs::path(o.data_dir) / (o.split + ".jsonl"); }

int effective_decode_len(const Options& o, const ModelCheckpoint& ckpt) {
    const int len = o.decode_max_len > 0 ? o.decode_max_len : ckpt.train_max_len;
    if (len < 3) throw ConfigError("effective decode length must be at least 3 encoded tokens");
    return len;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path.string());
    return out;
}

void validate(const Options& o) {
    if (o.window_frac <= 0.0 || o.window_frac > 1.0) {
        throw ConfigError("decode.window-frac must lie in (0, 1]");
    }
    if (o.strategy != "standard" && o.strategy != "segmented" && o.strategy != "sliding") {
        throw ConfigError("decode.strategy must be standard, segmented, or sliding");
    }
    if (o.split != "train" && o.split != "valid" && o.split != "test") {
        throw ConfigError("data.split must be train, valid, or test");
    }
    if (o.beam < 1) throw ConfigError("decode.beam must be at least 1");
    if (o.alpha < 0.0) throw ConfigError("decode.alpha must be non-negative");
    if (o.docs < 1) throw ConfigError("data.docs must be positive");
    if (o.valid_frac < 0.0 || o.test_frac < 0.0 || o.valid_frac + o.test_frac >= 1.0) {
        throw ConfigError("split fractions must be non-negative and sum below 1");
    }
    if (o.epochs < 1) throw ConfigError("train.epochs must be at least 1");
    if (o.train_max_len < 3) throw ConfigError("train.max-len must be at least 3 encoded tokens");
    if (o.bins < 1) throw ConfigError("analyze.bins must be at least 1");
    if (o.entropy_trials < 1) throw ConfigError("analyze.entropy-trials must be at least 1");
    if (o.entropy_dk < 1) throw ConfigError("analyze.entropy-dk must be at least 1");
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

const KeySet kGenDataKeys = {
    {"run", "seed"},
    {"run", "out"},
    {"data", "vocab"},
    {"data", "docs"},
    {"data", "valid-frac"},
    {"data", "test-frac"},
    {"data", "min-sentence-len"},
    {"data", "max-sentence-len"},
    {"data", "min-sentences"},
    {"data", "max-sentences"},
    {"data", "cue-prob"},
    {"data", "ambiguous-prob"},
    {"data", "contrastive-items"},
    {"data", "contrastive-min-sentences"},
    {"data", "contrastive-max-sentences"},
    {"data", "contrastive-min-distance"},
    {"data", "contrastive-max-distance"},
};

void cmd_gen_data(const Options& o) {
    GenConfig gc;
    gc.vocab_size = o.vocab;
    gc.doc_count = o.docs;
    gc.min_sentence_len = o.min_sentence_len;
    gc.max_sentence_len = o.max_sentence_len;
    gc.min_sentences = o.min_sentences;
    gc.max_sentences = o.max_sentences;
    gc.cue_prob = o.cue_prob;
    gc.ambiguous_prob = o.ambiguous_prob;
    gc.seed = derive_seed(o.seed, "corpus");
    const std::vector<Document> corpus = generate_corpus(gc);

    const int valid_n = static_cast<int>(o.docs * o.valid_frac);
    const int test_n = static_cast<int>(o.docs * o.test_frac);
    const int train_n = o.docs - valid_n - test_n;
    if (train_n < 1) throw ConfigError("split fractions leave no training documents");

    const fs::path out_dir(o.out);
    fs::create_directories(out_dir);
    const auto slice = [&](int first, int count) {
        return std::vector<Document>(corpus.begin() + first, corpus.begin() + first + count);
    };
    save_corpus(slice(0, train_n), (out_dir / "train.jsonl").string());
    save_corpus(slice(train_n, valid_n), (out_dir / "valid.jsonl").string());
    save_corpus(slice(train_n + valid_n, test_n), (out_dir / "test.jsonl").string());
    Vocab::synthetic(o.vocab).save((out_dir / "vocab.txt").string());

    ContrastiveConfig cc;
    cc.item_count = o.contrastive_items;
    cc.vocab_size = o.vocab;
    cc.min_sentence_len = o.min_sentence_len;
    cc.max_sentence_len = o.max_sentence_len;
    cc.min_sentences = o.contrastive_min_sentences;
    cc.max_sentences = o.contrastive_max_sentences;
    cc.min_distance = o.contrastive_min_distance;
    cc.max_distance = o.contrastive_max_distance;
    cc.seed = derive_seed(o.seed, "contrastive");
    save_contrastive_suite(generate_contrastive_suite(cc),
                           (out_dir / "contrastive.jsonl").string());

    std::cerr << "wrote " << train_n << "/" << valid_n << "/" << test_n
              << " train/valid/test documents and " << o.contrastive_items
              << " contrastive items to " << o.out << '\n';
}

const KeySet kTrainKeys = {
    {"run", "seed"},         {"run", "out"},
    {"data", "dir"},
    {"model", "layers"},     {"model", "heads"},
    {"model", "d-model"},    {"model", "d-ff"},
    {"model", "max-positions"}, {"model", "dropout"},
    {"model", "laa"},
    {"train", "epochs"},     {"train", "gamma"},
    {"train", "max-len"},    {"train", "dls"},
    {"train", "lr"},         {"train", "warmup-steps"},
    {"train", "batch-token-budget"}, {"train", "label-smoothing"},
};

void cmd_train(const Options& o) {
    const fs::path data(o.data_dir);
    const std::vector<Document> corpus = load_corpus((data / "train.jsonl").string());
    const Vocab vocab = Vocab::load((data / "vocab.txt").string());

    const fs::path out_dir(o.out);
    fs::create_directories(out_dir);
    std::ofstream log = open_output(out_dir / "train_log.csv");
    log << "epoch,loss,T,iota\n";

    TrainHooks hooks;
    hooks.on_epoch_done = [&](const EpochLog& e) {
        log << e.epoch << ',' << fmt_double(e.loss) << ',' << fmt_double(e.temperature) << ','
            << fmt_double(e.iota) << '\n';
        std::cerr << "epoch " << e.epoch << '/' << o.epochs << " loss " << e.loss << '\n';
    };
    const ModelCheckpoint ckpt =
        train(corpus, model_config(o, vocab.size()), train_config(o), hooks);
    save_checkpoint(ckpt, (out_dir / "model.ckpt").string());
}

const KeySet kDecodeKeys = {
    {"run", "seed"},       {"run", "out"},
    {"data", "dir"},       {"data", "split"},
    {"model", "file"},
    {"decode", "strategy"}, {"decode", "beam"},
    {"decode", "alpha"},    {"decode", "window-frac"},
    {"decode", "max-len"},
};

void cmd_decode(const Options& o) {
    const ModelCheckpoint ckpt = load_checkpoint(o.model_file);
    const std::vector<Document> corpus = load_corpus(split_path(o).string());

    const fs::path out_dir(o.out);
    fs::create_directories(out_dir);
    std::ofstream out = open_output(out_dir / "decoded.jsonl");

    for (const Document& doc : corpus) {
        std::vector<Sentence> sentences;
        if (o.strategy == "standard") {
            std::vector<std::vector<TokenId>> sources;
            for (const SentencePair& p : doc.sentences) sources.push_back(p.source);
            if (encoded_length(sources) > ckpt.config.max_positions) {
                throw ConfigError("document " + doc.id +
                                  " exceeds the model's positional capacity; "
                                  "use the segmented or sliding strategy");
            }
            sentences = decode_segmented(ckpt, doc, ckpt.config.max_positions, o.beam, o.alpha);
        } else if (o.strategy == "segmented") {
            sentences =
                decode_segmented(ckpt, doc, effective_decode_len(o, ckpt), o.beam, o.alpha);
        } else {
            SlidingConfig sc;
            sc.beam = o.beam;
            sc.alpha = o.alpha;
            sc.window_budget =
                static_cast<long>(o.window_frac * effective_decode_len(o, ckpt));
            sentences = decode_sliding(ckpt, doc, sc);
        }
        json record{{"doc_id", doc.id}, {"sentences", sentences}};
        out << record.dump() << '\n';
    }
}

const KeySet kEvaluateKeys = {
    {"run", "seed"}, {"run", "out"},
    {"data", "dir"}, {"data", "split"},
    {"model", "file"},
    {"eval", "hyp"},
};

void cmd_evaluate(const Options& o) {
    const std::vector<Document> refs = load_corpus(split_path(o).string());

    std::ifstream in(o.hyp);
    if (!in) throw ParseError("cannot open hypothesis file: " + o.hyp);
    DocCorpus hyp_docs;
    std::vector<std::string> hyp_ids;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json record;
        try {
            record = json::parse(line);
            hyp_ids.push_back(record.at("doc_id").get<std::string>());
            hyp_docs.push_back(record.at("sentences").get<std::vector<Sentence>>());
        } catch (const json::exception& e) {
            throw ParseError(o.hyp + ": " + e.what());
        }
    }

    require(hyp_docs.size() == refs.size(),
            "hypothesis and reference corpora have different document counts");
    DocCorpus ref_docs = corpus_references(refs);
    SentenceCorpus hyp_sentences, ref_sentences;
    for (std::size_t d = 0; d < refs.size(); ++d) {
        require(hyp_ids[d] == refs[d].id, "hypothesis documents are misaligned: expected " +
                                              refs[d].id + ", got " + hyp_ids[d]);
        require(hyp_docs[d].size() == ref_docs[d].size(),
                "document " + refs[d].id + " has a sentence-count mismatch");
        for (std::size_t s = 0; s < hyp_docs[d].size(); ++s) {
            hyp_sentences.push_back(hyp_docs[d][s]);
            ref_sentences.push_back(ref_docs[d][s]);
        }
    }

    const ModelCheckpoint ckpt = load_checkpoint(o.model_file);
    const std::vector<ContrastiveItem> suite =
        load_contrastive_suite((fs::path(o.data_dir) / "contrastive.jsonl").string());

    json report{
        {"s_bleu", s_bleu(hyp_sentences, ref_sentences)},
        {"d_bleu", d_bleu(hyp_docs, ref_docs)},
        {"contrastive_acc", contrastive_accuracy(suite, contrastive_scorer(ckpt)).accuracy()},
        {"contrastive_blind_acc",
         contrastive_accuracy(suite, context_blind_scorer(ckpt)).accuracy()},
    };

    const fs::path out_dir(o.out);
    fs::create_directories(out_dir);
    std::ofstream out = open_output(out_dir / "report.json");
    out << report.dump() << '\n';
    std::cout << report.dump() << '\n';
}

const KeySet kAnalyzeEntropyKeys = {
    {"run", "seed"},
    {"run", "out"},
    {"analyze", "entropy-lengths"},
    {"analyze", "entropy-iota"},
    {"analyze", "entropy-trials"},
    {"analyze", "entropy-dk"},
};

void cmd_analyze_entropy(const Options& o) {
    EntropyGapConfig config;
    config.lengths = parse_int_list(o.entropy_lengths, "analyze.entropy-lengths");
    config.iota = o.entropy_iota;
    config.trials = o.entropy_trials;
    config.d_k = o.entropy_dk;
    config.seed = o.seed;
    const EntropyGapResult result = entropy_gap_study(config);

    const fs::path out_dir(o.out);
    fs::create_directories(out_dir);
    std::ofstream csv = open_output(out_dir / "entropy.csv");
    csv << "scale_mode,length,mean_entropy,std_entropy,delta\n";
    for (const EntropyGapRow& row : result.rows) {
        const double spread =
            row.mode == ScaleMode::baseline ? result.baseline_spread : result.laa_spread;
        csv << scale_mode_name(row.mode) << ',' << row.length << ','
            << fmt_double(row.mean_entropy) << ',' << fmt_double(row.std_entropy) << ','
            << fmt_double(spread) << '\n';
    }
}

const KeySet kAnalyzeLengthsKeys = {
    {"run", "seed"},     {"run", "out"},
    {"data", "dir"},
    {"train", "epochs"}, {"train", "gamma"},
    {"train", "max-len"}, {"train", "dls"},
    {"analyze", "bins"},
};

void cmd_analyze_lengths(const Options& o) {
    const std::vector<Document> corpus =
        load_corpus((fs::path(o.data_dir) / "train.jsonl").string());

    const int width = (o.train_max_len + o.bins - 1) / o.bins;
    const fs::path out_dir(o.out);
    fs::create_directories(out_dir);
    std::ofstream csv = open_output(out_dir / "lengths.csv");
    csv << "epoch,length_bin,count\n";

    // Mirrors the trainer's per-epoch plan: the same seed derivation yields
    // the very segments a training run with this config would see.
    const EpochData fixed =
        o.dls ? EpochData{} : build_fixed_packing(corpus, o.train_max_len);
    for (int ep = 1; ep <= o.epochs; ++ep) {
        const EpochData data =
            o.dls ? build_epoch(corpus, ep, o.gamma, o.train_max_len, o.seed ^ ep) : fixed;
        std::vector<long> counts(o.bins, 0);
        for (const Segment& seg : data.segments) {
            const long len = seg.max_len();
            const int bin = std::min<long>((len - 1) / width, o.bins - 1);
            ++counts[bin];
        }
        for (int b = 0; b < o.bins; ++b) {
            csv << ep << ',' << (b + 1) * width << ',' << counts[b] << '\n';
        }
    }
}

const KeySet kAnalyzeSweepKeys = {
    {"run", "seed"},   {"run", "out"},
    {"data", "dir"},   {"data", "split"},
    {"model", "file"},
    {"decode", "beam"}, {"decode", "alpha"},
    {"analyze", "sweep-lengths"},
};

void cmd_analyze_sweep(const Options& o) {
    const ModelCheckpoint ckpt = load_checkpoint(o.model_file);
    const std::vector<Document> corpus = load_corpus(split_path(o).string());
    const std::vector<int> lengths = parse_int_list(o.sweep_lengths, "analyze.sweep-lengths");

    const fs::path out_dir(o.out);
    fs::create_directories(out_dir);
    std::ofstream csv = open_output(out_dir / "sweep.csv");
    csv << "strategy,max_len,d_bleu,s_bleu\n";
    for (const std::string strategy : {"segmented", "sliding"}) {
        for (const SweepRow& row :
             sweep_decode_lengths(ckpt, corpus, lengths, strategy, o.beam, o.alpha)) {
            csv << row.strategy << ',' << row.max_len << ',' << fmt_double(row.d_bleu) << ','
                << fmt_double(row.s_bleu) << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Wiring.
// ---------------------------------------------------------------------------

// Adds --config/--seed/--out plus a flag per consumed registry entry.
void add_flags(CLI::App* cmd, Options& o, std::string& config_path,
               const std::vector<Entry>& entries, const KeySet& keys) {
    cmd->add_option("--config", config_path, "INI config file; flags override its values");
    cmd->add_option("--seed", o.seed, "root seed for every random choice");
    cmd->add_option("--out", o.out, "output directory");
    for (const Entry& e : entries) {
        if (std::string(e.section) == "run" || !consumed(keys, e)) continue;
        const std::string name = std::string("--") + e.section + "." + e.key;
        switch (e.kind) {
            case Kind::Int: cmd->add_option(name, *static_cast<int*>(e.ptr), e.help); break;
            case Kind::Long: cmd->add_option(name, *static_cast<long*>(e.ptr), e.help); break;
            case Kind::U64:
                cmd->add_option(name, *static_cast<std::uint64_t*>(e.ptr), e.help);
                break;
            case Kind::Dbl: cmd->add_option(name, *static_cast<double*>(e.ptr), e.help); break;
            case Kind::Bool:
                cmd->add_option(name, *static_cast<bool*>(e.ptr), e.help)
                    ->expected(1);  // explicit true/false, not a bare flag
                break;
            case Kind::Str:
                cmd->add_option(name, *static_cast<std::string*>(e.ptr), e.help);
                break;
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    Options options;
    const std::vector<Entry> entries = registry(options);
    std::string config_path;

    CLI::App app{"Synthetic document-to-document transduction workbench"};
    app.require_subcommand(1);

    CLI::App* gen = app.add_subcommand("gen-data", "generate corpus splits and the "
                                                   "contrastive suite");
    CLI::App* train_cmd = app.add_subcommand("train", "train a model and log per-epoch stats");
    CLI::App* decode = app.add_subcommand("decode", "translate a corpus split with a checkpoint");
    CLI::App* evaluate = app.add_subcommand("evaluate", "score decoded output and the "
                                                        "contrastive suite");
    CLI::App* analyze = app.add_subcommand("analyze", "emit entropy, length-histogram, or "
                                                      "length-sweep CSVs");
    std::string which;
    analyze->add_option("which", which, "entropy, lengths, or sweep")
        ->required()
        ->check(CLI::IsMember({"entropy", "lengths", "sweep"}));

    add_flags(gen, options, config_path, entries, kGenDataKeys);
    add_flags(train_cmd, options, config_path, entries, kTrainKeys);
    add_flags(decode, options, config_path, entries, kDecodeKeys);
    add_flags(evaluate, options, config_path, entries, kEvaluateKeys);

    // analyze shares one flag surface across its three modes.
    KeySet analyze_keys = kAnalyzeEntropyKeys;
    for (const KeySet* extra : {&kAnalyzeLengthsKeys, &kAnalyzeSweepKeys}) {
        for (const auto& key : *extra) {
            if (std::find(analyze_keys.begin(), analyze_keys.end(), key) == analyze_keys.end()) {
                analyze_keys.push_back(key);
            }
        }
    }
    add_flags(analyze, options, config_path, entries, analyze_keys);

    try {
        // The config file loads before CLI values land, so flags win; the
        // file path itself is pre-scanned because it arrives as a flag too.
        for (int i = 1; i < argc; ++i) {
            const std::string arg = argv[i];
            if (arg == "--config" && i + 1 < argc) {
                config_path = argv[i + 1];
            } else if (arg.rfind("--config=", 0) == 0) {
                config_path = arg.substr(9);
            }
        }
        if (!config_path.empty()) apply_ini(config_path, entries);

        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            return app.exit(e);
        }

        validate(options);

        if (gen->parsed()) {
            cmd_gen_data(options);
            echo_config(options.out, entries, kGenDataKeys);
        } else if (train_cmd->parsed()) {
            cmd_train(options);
            echo_config(options.out, entries, kTrainKeys);
        } else if (decode->parsed()) {
            cmd_decode(options);
            echo_config(options.out, entries, kDecodeKeys);
        } else if (evaluate->parsed()) {
            cmd_evaluate(options);
            echo_config(options.out, entries, kEvaluateKeys);
        } else if (analyze->parsed()) {
            if (which == "entropy") {
                cmd_analyze_entropy(options);
                echo_config(options.out, entries, kAnalyzeEntropyKeys);
            } else if (which == "lengths") {
                cmd_analyze_lengths(options);
                echo_config(options.out, entries, kAnalyzeLengthsKeys);
            } else {
                cmd_analyze_sweep(options);
                echo_config(options.out, entries, kAnalyzeSweepKeys);
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
