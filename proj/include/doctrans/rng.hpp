#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace doctrans {

// All randomized procedures derive their seeds from one root seed through
// derive_seed(root, purpose_tag, index). mt19937_64 plus the hand-rolled
// draws below are fully specified by the standard, so identical seeds give
// identical streams on every platform.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0) {
    return splitmix64(root ^ splitmix64(fnv1a64(tag) ^ splitmix64(index)));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Unbiased draw in [0, n) by rejection.
    std::uint64_t bounded(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    // Inclusive range.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(bounded(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    // [0, 1) with 53-bit resolution.
    double next_real() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = next_real();
        } while (u1 <= 0.0);
        u2 = next_real();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return next_real() < p; }

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[bounded(i)]);
        }
    }

    // Inverse-CDF draw from a probability vector (entries >= 0, sum ~ 1).
    int sample_index(const Eigen::VectorXd& probs) {
        const double r = next_real();
        double cum = 0.0;
        for (Eigen::Index i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            if (r < cum) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size() - 1);
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace doctrans
