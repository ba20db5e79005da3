#include "doctrans/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace doctrans {

double BeamHyp::normalized(double alpha) const {
    const double len = static_cast<double>(tokens.size()) + (finished ? 1.0 : 0.0);
    return score / std::pow(std::max(1.0, len), alpha);
}

namespace {

struct LiveHyp {
    std::vector<TokenId> tokens;
    double score = 0.0;
    std::unique_ptr<DecoderHandle> handle;
    Eigen::VectorXd next_lp;
};

bool is_terminator(TokenId t, const std::vector<TokenId>& terminators) {
    return std::find(terminators.begin(), terminators.end(), t) != terminators.end();
}

// Ranked beam results: finished hypotheses plus any cap-ended survivors,
// best normalized score first. Deterministic for fixed inputs.
std::vector<BeamHyp> beam_search_all(const DecodeSession& session, const BeamConfig& config) {
    require(config.beam >= 1, "beam width must be at least 1");
    require(config.max_new >= 0, "max_new must be non-negative");

    LiveHyp root;
    root.handle = session.start();
    root.next_lp = root.handle->step(kBosId);
    for (TokenId t : config.forced_prefix) root.next_lp = root.handle->step(t);

    std::vector<BeamHyp> finished;
    std::vector<LiveHyp> active;
    if (config.max_new == 0) {
        finished.push_back({{}, 0.0, false});
        return finished;
    }
    active.push_back(std::move(root));

    struct Cand {
        double score;
        std::size_t hyp;
        TokenId token;
    };

    for (long step = 0; step < config.max_new && !active.empty(); ++step) {
        std::vector<Cand> cands;
        cands.reserve(active.size() * static_cast<std::size_t>(session.vocab()));
        for (std::size_t h = 0; h < active.size(); ++h) {
            for (TokenId v = 0; v < session.vocab(); ++v) {
                cands.push_back({active[h].score + active[h].next_lp[v], h, v});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.token != b.token) return a.token < b.token;
            return a.hyp < b.hyp;
        });
        if (static_cast<int>(cands.size()) > config.beam) {
            cands.resize(static_cast<std::size_t>(config.beam));
        }

        std::vector<LiveHyp> next_active;
        for (const Cand& c : cands) {
            LiveHyp& parent = active[c.hyp];
            if (is_terminator(c.token, config.terminators)) {
                finished.push_back({parent.tokens, c.score, true});
                continue;
            }
            if (parent.handle->length() >= session.max_target_len()) {
                // No room to extend further: keep the hypothesis as cap-ended.
                BeamHyp capped{parent.tokens, c.score, false};
                capped.tokens.push_back(c.token);
                finished.push_back(std::move(capped));
                continue;
            }
            LiveHyp child;
            child.tokens = parent.tokens;
            child.tokens.push_back(c.token);
            child.score = c.score;
            child.handle = parent.handle->clone();
            child.next_lp = child.handle->step(c.token);
            next_active.push_back(std::move(child));
        }
        active = std::move(next_active);
        if (static_cast<int>(finished.size()) >= config.beam) break;
    }
    for (LiveHyp& h : active) finished.push_back({std::move(h.tokens), h.score, false});

    std::stable_sort(finished.begin(), finished.end(), [&](const BeamHyp& a, const BeamHyp& b) {
        const double na = a.normalized(config.alpha);
        const double nb = b.normalized(config.alpha);
        if (na != nb) return na > nb;
        return a.finished && !b.finished;
    });
    if (static_cast<int>(finished.size()) > config.beam) {
        finished.resize(static_cast<std::size_t>(config.beam));
    }
    return finished;
}

}  // namespace

BeamHyp beam_search(const DecodeSession& session, const BeamConfig& config) {
    return beam_search_all(session, config).front();
}

SessionFactory checkpoint_session_factory(const ModelCheckpoint& checkpoint) {
    return [&checkpoint](std::span<const TokenId> encoded_source) {
        return make_decode_session(checkpoint, encoded_source);
    };
}

std::vector<TokenId> decode_standard(const SessionFactory& factory,
                                     std::span<const TokenId> encoded_source, int beam,
                                     double alpha, long max_new) {
    const auto session = factory(encoded_source);
    BeamConfig config;
    config.beam = beam;
    config.alpha = alpha;
    config.max_new = max_new;
    return beam_search(*session, config).tokens;
}

std::vector<TokenId> decode_standard(const ModelCheckpoint& checkpoint,
                                     std::span<const TokenId> encoded_source, int beam,
                                     double alpha, long max_new) {
    return decode_standard(checkpoint_session_factory(checkpoint), encoded_source, beam, alpha,
                           max_new);
}

namespace {

// Greedy source-side packing: consecutive sentences whose encoded length
// stays within max_len; a lone over-long sentence still gets its own chunk.
std::vector<std::pair<int, int>> pack_source_chunks(const Document& doc, long max_len) {
    std::vector<std::pair<int, int>> chunks;
    int first = 0;
    long body = 0;  // token count without framing
    int count = 0;
    for (int j = 0; j < static_cast<int>(doc.sentences.size()); ++j) {
        const long slen = static_cast<long>(doc.sentences[static_cast<std::size_t>(j)].source.size());
        const long with_j = body + slen + count + 2;  // sum + (count+1 - 1) + BOS/EOS
        if (count > 0 && with_j > max_len) {
            chunks.emplace_back(first, j - 1);
            first = j;
            body = slen;
            count = 1;
        } else {
            body += slen;
            ++count;
        }
    }
    chunks.emplace_back(first, static_cast<int>(doc.sentences.size()) - 1);
    return chunks;
}

// Splits a generated stream at separators and realigns it to `want` pieces:
// surplus pieces merge into the last one, missing pieces come back empty. The
// flattened content tokens are preserved exactly.
std::vector<Sentence> split_realign(const std::vector<TokenId>& stream, std::size_t want) {
    std::vector<Sentence> pieces(1);
    for (TokenId t : stream) {
        if (t == kSepId) {
            pieces.emplace_back();
        } else {
            pieces.back().push_back(t);
        }
    }
    if (pieces.size() > want) {
        for (std::size_t i = want; i < pieces.size(); ++i) {
            pieces[want - 1].insert(pieces[want - 1].end(), pieces[i].begin(), pieces[i].end());
        }
        pieces.resize(want);
    }
    while (pieces.size() < want) pieces.emplace_back();
    return pieces;
}

std::vector<const std::vector<TokenId>*> source_side(const Document& doc, int first, int last) {
    std::vector<const std::vector<TokenId>*> out;
    for (int j = first; j <= last; ++j) {
        out.push_back(&doc.sentences[static_cast<std::size_t>(j)].source);
    }
    return out;
}

std::vector<TokenId> encode_sentences(const std::vector<const std::vector<TokenId>*>& sentences) {
    std::vector<TokenId> ids{kBosId};
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (i > 0) ids.push_back(kSepId);
        ids.insert(ids.end(), sentences[i]->begin(), sentences[i]->end());
    }
    ids.push_back(kEosId);
    return ids;
}

long encoded_span_length(const Document& doc, int first, int last) {
    long body = 0;
    for (int j = first; j <= last; ++j) {
        body += static_cast<long>(doc.sentences[static_cast<std::size_t>(j)].source.size());
    }
    return body + (last - first) + 2;
}

long generation_cap(const Document& doc, int first, int last, long mul, long add) {
    long cap = 0;
    for (int j = first; j <= last; ++j) {
        cap += mul * static_cast<long>(doc.sentences[static_cast<std::size_t>(j)].source.size()) +
               add;
    }
    return cap;
}

}  // namespace

std::vector<Sentence> decode_segmented(const SessionFactory& factory, const Document& document,
                                       long max_len, int beam, double alpha) {
    require(!document.sentences.empty(), "cannot decode an empty document");
    require(max_len >= 3, "segment length too small to hold one sentence");
    std::vector<Sentence> out;
    for (const auto& [first, last] : pack_source_chunks(document, max_len)) {
        std::vector<TokenId> src_ids = encode_sentences(source_side(document, first, last));
        if (static_cast<long>(src_ids.size()) > max_len) {
            std::cerr << "warning: sentence " << first << " of document " << document.id
                      << " exceeds the segment length " << max_len << "; truncating\n";
            src_ids.resize(static_cast<std::size_t>(max_len));
        }
        BeamConfig config;
        config.beam = beam;
        config.alpha = alpha;
        config.max_new = generation_cap(document, first, last, 2, 8);
        const auto session = factory(src_ids);
        const BeamHyp hyp = beam_search(*session, config);
        std::vector<Sentence> chunk_sentences =
            split_realign(hyp.tokens, static_cast<std::size_t>(last - first + 1));
        for (auto& s : chunk_sentences) out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sentence> decode_segmented(const ModelCheckpoint& checkpoint,
                                       const Document& document, long max_len, int beam,
                                       double alpha) {
    return decode_segmented(checkpoint_session_factory(checkpoint), document, max_len, beam,
                            alpha);
}

namespace {

// Document-level hypothesis carried across sentence boundaries when the beam
// is allowed to stay diverse between advances.
struct DocHyp {
    std::vector<Sentence> window_tgt;
    double score = 0.0;
};

std::vector<TokenId> prefix_from(const std::vector<Sentence>& window_tgt) {
    std::vector<TokenId> prefix;
    for (const Sentence& s : window_tgt) {
        prefix.insert(prefix.end(), s.begin(), s.end());
        prefix.push_back(kSepId);
    }
    return prefix;
}

long encoded_prefix_length(const std::vector<Sentence>& window_tgt) {
    long body = 0;
    for (const Sentence& s : window_tgt) body += static_cast<long>(s.size());
    if (window_tgt.empty()) return 1;  // BOS alone
    return body + static_cast<long>(window_tgt.size()) - 1 + 2;
}

}  // namespace

std::vector<Sentence> decode_sliding(const SessionFactory& factory, const Document& document,
                                     const SlidingConfig& config) {
    require(!document.sentences.empty(), "cannot decode an empty document");
    require(config.window_budget >= 3, "sliding window budget too small to hold one sentence");
    require(config.beam >= 1, "beam width must be at least 1");
    const int m = static_cast<int>(document.sentences.size());

    for (int j = 0; j < m; ++j) {
        if (encoded_span_length(document, j, j) > config.window_budget) {
            throw ContractViolation("sentence " + std::to_string(j) + " of document " +
                                    document.id + " exceeds the sliding window budget " +
                                    std::to_string(config.window_budget));
        }
    }

    // Whole-document path: everything fits, so no window ever advances and the
    // output must be token-identical to a plain whole-sequence decode.
    if (encoded_span_length(document, 0, m - 1) <= config.window_budget) {
        const std::vector<TokenId> src_ids = encode_sentences(source_side(document, 0, m - 1));
        const std::vector<TokenId> stream =
            decode_standard(factory, src_ids, config.beam, config.alpha,
                            generation_cap(document, 0, m - 1, config.cap_mul, config.cap_add));
        return split_realign(stream, static_cast<std::size_t>(m));
    }

    std::vector<Sentence> committed;
    std::vector<DocHyp> hyps{{{}, 0.0}};
    int w_start = 0;  // oldest source sentence still in the window

    for (int j = 0; j < m; ++j) {
        bool evicted = false;
        while (w_start < j && encoded_span_length(document, w_start, j) > config.window_budget) {
            // Collapse before the first eviction of this advance so committed
            // output comes from the single best hypothesis.
            if (hyps.size() > 1) hyps.resize(1);
            committed.push_back(std::move(hyps.front().window_tgt.front()));
            hyps.front().window_tgt.erase(hyps.front().window_tgt.begin());
            ++w_start;
            evicted = true;
        }
        require(encoded_span_length(document, w_start, j) <= config.window_budget,
                "sliding window invariant violated");
        if (!config.collapse_only_on_eviction && hyps.size() > 1) hyps.resize(1);
        if (evicted && hyps.size() > 1) hyps.resize(1);

        for (const DocHyp& h : hyps) {
            require(encoded_prefix_length(h.window_tgt) <= config.window_budget,
                    "target context exceeds the sliding window budget");
        }

        if (config.observer) {
            SlideState state;
            for (int k = w_start; k <= j; ++k) {
                state.window_src.push_back(document.sentences[static_cast<std::size_t>(k)].source);
            }
            state.window_tgt = hyps.front().window_tgt;
            state.committed = committed;
            state.next_src_index = j;
            state.window_budget = config.window_budget;
            config.observer(state);
        }

        const std::vector<TokenId> src_ids = encode_sentences(source_side(document, w_start, j));
        const auto session = factory(src_ids);
        BeamConfig bc;
        bc.beam = config.beam;
        bc.alpha = config.alpha;
        bc.max_new = generation_cap(document, j, j, config.cap_mul, config.cap_add);
        bc.terminators = {kSepId, kEosId};

        std::vector<DocHyp> next_hyps;
        for (const DocHyp& h : hyps) {
            bc.forced_prefix = prefix_from(h.window_tgt);
            for (const BeamHyp& sh : beam_search_all(*session, bc)) {
                DocHyp nh;
                nh.window_tgt = h.window_tgt;
                nh.window_tgt.push_back(sh.tokens);
                nh.score = h.score + sh.score;
                next_hyps.push_back(std::move(nh));
            }
        }
        std::stable_sort(next_hyps.begin(), next_hyps.end(),
                         [](const DocHyp& a, const DocHyp& b) { return a.score > b.score; });
        const std::size_t keep = config.collapse_only_on_eviction
                                     ? static_cast<std::size_t>(config.beam)
                                     : std::size_t{1};
        if (next_hyps.size() > keep) next_hyps.resize(keep);
        hyps = std::move(next_hyps);
    }

    std::vector<Sentence> out = std::move(committed);
    for (Sentence& s : hyps.front().window_tgt) out.push_back(std::move(s));
    require(static_cast<int>(out.size()) == m, "sliding decode must emit one sentence per source");
    return out;
}

std::vector<Sentence> decode_sliding(const ModelCheckpoint& checkpoint, const Document& document,
                                     const SlidingConfig& config) {
    return decode_sliding(checkpoint_session_factory(checkpoint), document, config);
}

DocCorpus corpus_references(const std::vector<Document>& corpus) {
    DocCorpus refs;
    refs.reserve(corpus.size());
    for (const Document& doc : corpus) {
        std::vector<Sentence> sentences;
        sentences.reserve(doc.sentences.size());
        for (const SentencePair& sp : doc.sentences) sentences.push_back(sp.target);
        refs.push_back(std::move(sentences));
    }
    return refs;
}

std::vector<SweepRow> sweep_decode_lengths(const SessionFactory& factory,
                                           const std::vector<Document>& corpus,
                                           std::span<const int> lengths,
                                           const std::string& strategy, int beam, double alpha,
                                           long sliding_train_cap) {
    require(!lengths.empty(), "length sweep needs at least one length");
    require(!corpus.empty(), "length sweep needs a non-empty corpus");
    if (strategy != "segmented" && strategy != "sliding") {
        throw ConfigError("sweep strategy must be 'segmented' or 'sliding', got '" + strategy +
                          "'");
    }
    const DocCorpus refs = corpus_references(corpus);
    SentenceCorpus ref_sentences;
    for (const auto& doc : refs) {
        for (const auto& s : doc) ref_sentences.push_back(s);
    }

    std::vector<SweepRow> rows;
    for (int max_len : lengths) {
        DocCorpus hyps;
        hyps.reserve(corpus.size());
        for (const Document& doc : corpus) {
            if (strategy == "segmented") {
                hyps.push_back(decode_segmented(factory, doc, max_len, beam, alpha));
            } else {
                SlidingConfig sc;
                sc.beam = beam;
                sc.alpha = alpha;
                const long effective =
                    sliding_train_cap > 0 ? std::min<long>(max_len, sliding_train_cap) : max_len;
                sc.window_budget = static_cast<long>(std::floor(0.8 * static_cast<double>(effective)));
                hyps.push_back(decode_sliding(factory, doc, sc));
            }
        }
        SentenceCorpus hyp_sentences;
        for (const auto& doc : hyps) {
            for (const auto& s : doc) hyp_sentences.push_back(s);
        }
        rows.push_back({strategy, max_len, d_bleu(hyps, refs), s_bleu(hyp_sentences, ref_sentences)});
    }
    return rows;
}

std::vector<SweepRow> sweep_decode_lengths(const ModelCheckpoint& checkpoint,
                                           const std::vector<Document>& corpus,
                                           std::span<const int> lengths,
                                           const std::string& strategy, int beam, double alpha) {
    const long cap = checkpoint.train_max_len > 0 ? checkpoint.train_max_len
                                                  : checkpoint.config.max_positions;
    return sweep_decode_lengths(checkpoint_session_factory(checkpoint), corpus, lengths, strategy,
                                beam, alpha, cap);
}

}  // namespace doctrans
