#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "doctrans/errors.hpp"
#include "doctrans/linalg.hpp"

namespace doctrans {

enum class ScaleMode { baseline, laa };

struct AttnConfig {
    int d_k = 1;
    ScaleMode scale_mode = ScaleMode::baseline;
    double iota = 0.0;              // reference length, required > 1 in laa mode
    bool per_query_length = false;  // causal mode: l = visible keys of the query row
};

// log_iota(l). Zero at l = 1; softmax over a single key ignores the scale.
inline double laa_lambda(long attended_len, double iota) {
    require(attended_len >= 1, "attended length must be at least 1");
    if (iota <= 1.0) throw ConfigError("laa requires iota > 1");
    return std::log(static_cast<double>(attended_len)) / std::log(iota);
}

template <class Scalar>
struct AttnOutput {
    Mat<Scalar> values;    // row-wise weighted sums of V
    Mat<Scalar> weights;   // row-stochastic, masked entries exactly 0
    Vec<Scalar> row_scale; // lambda_i / sqrt(d_k), cached for the backward pass
};

namespace detail {

inline void check_attn_shapes(Eigen::Index q_rows, Eigen::Index q_cols, Eigen::Index k_rows,
                              Eigen::Index k_cols, Eigen::Index v_rows, const BoolArray* mask,
                              const AttnConfig& config) {
    require(q_cols == k_cols, "Q and K must share the key dimension");
    require(q_cols == config.d_k, "d_k does not match Q/K columns");
    require(k_rows == v_rows, "K and V must have the same number of rows");
    if (mask != nullptr) {
        require(mask->rows() == q_rows && mask->cols() == k_rows,
                "mask must be (q_len x kv_len)");
    }
    if (config.scale_mode == ScaleMode::laa && config.iota <= 1.0) {
        throw ConfigError("laa scale mode requires iota > 1");
    }
}

// Visible-key count per query row; the whole-sequence length is the maximum
// over rows (equals kv_len when no mask, the real key count under pad masks).
inline Eigen::VectorXi visible_counts(const BoolArray* mask, Eigen::Index q_rows,
                                      Eigen::Index kv_rows) {
    Eigen::VectorXi counts(q_rows);
    if (mask == nullptr) {
        counts.setConstant(static_cast<int>(kv_rows));
        return counts;
    }
    for (Eigen::Index i = 0; i < q_rows; ++i) {
        int c = 0;
        for (Eigen::Index j = 0; j < kv_rows; ++j) c += (*mask)(i, j) ? 1 : 0;
        require(c >= 1, "attention row has no visible keys");
        counts[i] = c;
    }
    return counts;
}

template <class Scalar>
Vec<Scalar> row_scales(const Eigen::VectorXi& counts, const AttnConfig& config) {
    const Scalar inv_sqrt_dk = Scalar(1) / std::sqrt(static_cast<Scalar>(config.d_k));
    Vec<Scalar> scale(counts.size());
    if (config.scale_mode == ScaleMode::baseline) {
        scale.setConstant(inv_sqrt_dk);
        return scale;
    }
    if (config.per_query_length) {
        for (Eigen::Index i = 0; i < counts.size(); ++i) {
            scale[i] = inv_sqrt_dk * static_cast<Scalar>(laa_lambda(counts[i], config.iota));
        }
    } else {
        const int whole = counts.maxCoeff();
        scale.setConstant(inv_sqrt_dk * static_cast<Scalar>(laa_lambda(whole, config.iota)));
    }
    return scale;
}

}  // namespace detail

// softmax((Q K^T / sqrt(d_k)) * lambda) V with lambda = 1 (baseline) or
// log_iota(l) (laa); l is the attended-sequence length, per query row in
// per_query_length mode.
template <class Scalar>
AttnOutput<Scalar> attention(const Mat<Scalar>& q, const Mat<Scalar>& k, const Mat<Scalar>& v,
                             const BoolArray* mask, const AttnConfig& config) {
    detail::check_attn_shapes(q.rows(), q.cols(), k.rows(), k.cols(), v.rows(), mask, config);
    const Eigen::VectorXi counts = detail::visible_counts(mask, q.rows(), k.rows());

    AttnOutput<Scalar> out;
    out.row_scale = detail::row_scales<Scalar>(counts, config);
    Mat<Scalar> logits = q * k.transpose();
    logits.array().colwise() *= out.row_scale.array();
    if (mask != nullptr) {
        const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
        logits = mask->select(logits, Mat<Scalar>::Constant(q.rows(), k.rows(), neg_inf));
    }
    out.weights = softmax_rows(logits);
    if (mask != nullptr) {
        out.weights = mask->select(out.weights, Mat<Scalar>::Zero(q.rows(), k.rows()));
    }
    out.values = out.weights * v;
    return out;
}

template <class Scalar>
struct AttnGrads {
    Mat<Scalar> d_q, d_k, d_v;
};

// Gradients w.r.t. Q, K, V for upstream d(values). The scale vector is a
// constant of the lengths, never a function of the parameters.
template <class Scalar>
AttnGrads<Scalar> attention_backward(const Mat<Scalar>& d_values, const Mat<Scalar>& q,
                                     const Mat<Scalar>& k, const Mat<Scalar>& v,
                                     const AttnOutput<Scalar>& cached) {
    const Mat<Scalar>& w = cached.weights;
    AttnGrads<Scalar> g;
    g.d_v = w.transpose() * d_values;
    Mat<Scalar> d_w = d_values * v.transpose();
    // softmax backward: dS = W .* (dW - rowsum(dW .* W)); masked entries stay 0.
    Vec<Scalar> row_dot = (d_w.array() * w.array()).rowwise().sum();
    Mat<Scalar> d_logits = w.array() * (d_w.array().colwise() - row_dot.array());
    d_logits.array().colwise() *= cached.row_scale.array();
    g.d_q = d_logits * k;
    g.d_k = d_logits.transpose() * q;
    return g;
}

// H_i = -sum_j a_ij log a_ij with 0 log 0 = 0. Throws on negative weights.
template <class Derived>
Vec<typename Derived::Scalar> attention_entropy(const Eigen::MatrixBase<Derived>& weights) {
    using S = typename Derived::Scalar;
    Vec<S> h(weights.rows());
    for (Eigen::Index i = 0; i < weights.rows(); ++i) {
        S acc = 0;
        for (Eigen::Index j = 0; j < weights.cols(); ++j) {
            const S a = weights(i, j);
            require(a >= S(0), "attention weights must be non-negative");
            if (a > S(0)) acc -= a * std::log(a);
        }
        h[i] = acc;
    }
    return h;
}

// The same entropy from raw scores: log sum_j e^{lambda s_ij} - lambda sum_j p_ij s_ij.
template <class Derived>
Vec<typename Derived::Scalar> attention_entropy_logit_form(const Eigen::MatrixBase<Derived>& scores,
                                                           double lambda) {
    using S = typename Derived::Scalar;
    Vec<S> h(scores.rows());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Vec<S> scaled = scores.row(i).transpose() * S(lambda);
        const S lse = logsumexp(scaled);
        Vec<S> p = (scaled.array() - lse).exp();
        h[i] = lse - S(lambda) * p.dot(scores.row(i).transpose());
    }
    return h;
}

// Mean-field approximation: log n + lambda (s_bar_i - s_max_i).
template <class Derived>
Vec<typename Derived::Scalar> entropy_approximation(const Eigen::MatrixBase<Derived>& scores,
                                                    double lambda) {
    using S = typename Derived::Scalar;
    require(scores.cols() >= 1, "entropy approximation needs at least one score");
    const S log_n = std::log(static_cast<S>(scores.cols()));
    Vec<S> h(scores.rows());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const S s_bar = scores.row(i).mean();
        const S s_max = scores.row(i).maxCoeff();
        h[i] = log_n + S(lambda) * (s_bar - s_max);
    }
    return h;
}

// Multi-head wrapper: projects token rows with per-model weight matrices,
// runs each head through attention(), and mixes the concatenated heads.
template <class Scalar>
struct MultiHeadCache {
    Mat<Scalar> q, k, v;  // projected, still (len x d_model)
    std::vector<AttnOutput<Scalar>> heads;
    Mat<Scalar> concat;
    Mat<Scalar> output;
};

template <class Scalar>
MultiHeadCache<Scalar> multi_head_attention(const Mat<Scalar>& x_q, const Mat<Scalar>& x_kv,
                                            const Mat<Scalar>& wq, const Mat<Scalar>& wk,
                                            const Mat<Scalar>& wv, const Mat<Scalar>& wo,
                                            int heads, const BoolArray* mask,
                                            const AttnConfig& config) {
    require(heads >= 1, "multi-head attention needs at least one head");
    const Eigen::Index d_model = wq.cols();
    require(d_model % heads == 0, "model width must divide evenly across heads");
    require(d_model / heads == config.d_k, "d_k must equal d_model / heads");
    MultiHeadCache<Scalar> cache;
    cache.q = x_q * wq;
    cache.k = x_kv * wk;
    cache.v = x_kv * wv;
    cache.concat.resize(x_q.rows(), d_model);
    cache.heads.reserve(static_cast<std::size_t>(heads));
    const Eigen::Index dk = config.d_k;
    for (int h = 0; h < heads; ++h) {
        const Eigen::Index off = h * dk;
        AttnOutput<Scalar> head = attention<Scalar>(cache.q.middleCols(off, dk),
                                                    cache.k.middleCols(off, dk),
                                                    cache.v.middleCols(off, dk), mask, config);
        cache.concat.middleCols(off, dk) = head.values;
        cache.heads.push_back(std::move(head));
    }
    cache.output = cache.concat * wo;
    return cache;
}

template <class Scalar>
struct MultiHeadGrads {
    Mat<Scalar> d_x_q, d_x_kv;  // caller adds both into d_x for self-attention
    Mat<Scalar> d_wq, d_wk, d_wv, d_wo;
};

template <class Scalar>
MultiHeadGrads<Scalar> multi_head_attention_backward(const Mat<Scalar>& d_output,
                                                     const Mat<Scalar>& x_q,
                                                     const Mat<Scalar>& x_kv,
                                                     const Mat<Scalar>& wq, const Mat<Scalar>& wk,
                                                     const Mat<Scalar>& wv, const Mat<Scalar>& wo,
                                                     const MultiHeadCache<Scalar>& cache) {
    const Eigen::Index d_model = wq.cols();
    const int heads = static_cast<int>(cache.heads.size());
    const Eigen::Index dk = d_model / heads;
    MultiHeadGrads<Scalar> g;
    g.d_wo = cache.concat.transpose() * d_output;
    Mat<Scalar> d_concat = d_output * wo.transpose();
    Mat<Scalar> d_q(cache.q.rows(), d_model), d_k(cache.k.rows(), d_model),
        d_v(cache.v.rows(), d_model);
    for (int h = 0; h < heads; ++h) {
        const Eigen::Index off = h * dk;
        Mat<Scalar> qh = cache.q.middleCols(off, dk);
        Mat<Scalar> kh = cache.k.middleCols(off, dk);
        Mat<Scalar> vh = cache.v.middleCols(off, dk);
        AttnGrads<Scalar> hg = attention_backward<Scalar>(d_concat.middleCols(off, dk), qh, kh, vh,
                                                          cache.heads[static_cast<std::size_t>(h)]);
        d_q.middleCols(off, dk) = hg.d_q;
        d_k.middleCols(off, dk) = hg.d_k;
        d_v.middleCols(off, dk) = hg.d_v;
    }
    g.d_wq = x_q.transpose() * d_q;
    g.d_wk = x_kv.transpose() * d_k;
    g.d_wv = x_kv.transpose() * d_v;
    g.d_x_q = d_q * wq.transpose();
    g.d_x_kv = d_k * wk.transpose() + d_v * wv.transpose();
    return g;
}

struct EntropyReport {
    Eigen::VectorXd exact;   // per-query entropies of softmax(lambda * scores)
    Eigen::VectorXd approx;  // mean-field approximations
    Eigen::VectorXd s_bar;
    Eigen::VectorXd s_max;
    long n = 0;
    double lambda = 1.0;
};

EntropyReport make_entropy_report(const Eigen::MatrixXd& scores, double lambda);

class Rng;  // rng.hpp

// Fills one row of i.i.d. scores for an attended length; seeded by the study.
using ScoreSampler = std::function<void(Rng& rng, Eigen::RowVectorXd& scores)>;

// Scores drawn as dot products of fresh unit-Gaussian query/key vectors,
// scaled by 1/sqrt(d_k) — the usual pre-softmax logit distribution.
ScoreSampler dot_product_sampler(int d_k);

struct EntropyGapConfig {
    std::vector<int> lengths{16, 64, 256, 1024};
    double iota = 64.0;
    int trials = 1000;
    int d_k = 64;  // used by the default dot-product sampler
    std::uint64_t seed = 0;
    ScoreSampler sampler;  // default: unit-Gaussian q,k dot products scaled by 1/sqrt(d_k)
};

struct EntropyGapRow {
    ScaleMode mode;
    int length;
    double mean_entropy;
    double std_entropy;
};

struct EntropyGapResult {
    std::vector<EntropyGapRow> rows;
    double baseline_spread = 0.0;  // max - min of mean entropy across lengths
    double laa_spread = 0.0;
};

// Monte-Carlo mean attention entropy per length, baseline vs laa. Scores are
// dot products of unit-Gaussian query/key vectors scaled by 1/sqrt(d_k); the
// same draws feed both modes.
EntropyGapResult entropy_gap_study(const EntropyGapConfig& config);

const char* scale_mode_name(ScaleMode mode);
ScaleMode scale_mode_from_name(const std::string& name);

}  // namespace doctrans
