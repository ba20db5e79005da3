#include "doctrans/attention.hpp"

#include <algorithm>
#include <limits>

#include "doctrans/rng.hpp"

namespace doctrans {

EntropyReport make_entropy_report(const Eigen::MatrixXd& scores, double lambda) {
    require(scores.rows() >= 1 && scores.cols() >= 1, "score matrix must be non-empty");
    EntropyReport report;
    report.n = scores.cols();
    report.lambda = lambda;
    report.exact = attention_entropy_logit_form(scores, lambda);
    report.approx = entropy_approximation(scores, lambda);
    report.s_bar = scores.rowwise().mean();
    report.s_max = scores.rowwise().maxCoeff();
    return report;
}

namespace {

double spread(const std::vector<double>& means) {
    const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
    return *hi - *lo;
}

}  // namespace

ScoreSampler dot_product_sampler(int d_k) {
    require(d_k >= 1, "score sampler needs d_k >= 1");
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
    return [d_k, inv_sqrt_dk](Rng& rng, Eigen::RowVectorXd& scores) {
        Eigen::VectorXd q(d_k), key(d_k);
        for (int d = 0; d < d_k; ++d) q[d] = rng.next_gaussian();
        for (Eigen::Index j = 0; j < scores.size(); ++j) {
            for (int d = 0; d < d_k; ++d) key[d] = rng.next_gaussian();
            scores[j] = q.dot(key) * inv_sqrt_dk;
        }
    };
}

EntropyGapResult entropy_gap_study(const EntropyGapConfig& config) {
    require(!config.lengths.empty(), "entropy gap study needs at least one length");
    require(config.trials >= 1, "entropy gap study needs at least one trial");
    if (config.iota <= 1.0) throw ConfigError("entropy gap study requires iota > 1");
    const ScoreSampler sampler = config.sampler ? config.sampler : dot_product_sampler(config.d_k);

    EntropyGapResult result;
    std::vector<double> base_means, laa_means;

    for (std::size_t li = 0; li < config.lengths.size(); ++li) {
        const int n = config.lengths[li];
        require(n >= 2 && n <= 4096, "entropy gap study lengths must lie in [2, 4096]");
        const double lambda = laa_lambda(n, config.iota);
        Rng rng(derive_seed(config.seed, "entropy-gap", li));

        double base_sum = 0.0, base_sq = 0.0, laa_sum = 0.0, laa_sq = 0.0;
        Eigen::RowVectorXd scores(n);
        for (int t = 0; t < config.trials; ++t) {
            sampler(rng, scores);
            const double h_base = attention_entropy_logit_form(scores, 1.0)[0];
            const double h_laa = attention_entropy_logit_form(scores, lambda)[0];
            base_sum += h_base;
            base_sq += h_base * h_base;
            laa_sum += h_laa;
            laa_sq += h_laa * h_laa;
        }
        const double inv_t = 1.0 / config.trials;
        const double base_mean = base_sum * inv_t;
        const double laa_mean = laa_sum * inv_t;
        const double base_var = std::max(0.0, base_sq * inv_t - base_mean * base_mean);
        const double laa_var = std::max(0.0, laa_sq * inv_t - laa_mean * laa_mean);
        result.rows.push_back({ScaleMode::baseline, n, base_mean, std::sqrt(base_var)});
        result.rows.push_back({ScaleMode::laa, n, laa_mean, std::sqrt(laa_var)});
        base_means.push_back(base_mean);
        laa_means.push_back(laa_mean);
    }

    result.baseline_spread = spread(base_means);
    result.laa_spread = spread(laa_means);
    return result;
}

const char* scale_mode_name(ScaleMode mode) {
    return mode == ScaleMode::baseline ? "baseline" : "laa";
}

ScaleMode scale_mode_from_name(const std::string& name) {
    if (name == "baseline") return ScaleMode::baseline;
    if (name == "laa") return ScaleMode::laa;
    throw ConfigError("unknown scale mode: " + name);
}

}  // namespace doctrans
