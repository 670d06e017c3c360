#pragma once

// Splittable counter-based random streams. A stream is a 64-bit key plus a
// draw counter; child streams are derived by hashing a label into the key, so
// any (seed, label path) pair names the same stream in every run. Output
// generation is SplitMix64 (https://prng.di.unimi.it).

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crlab {

// bumped whenever key derivation or sampler dispatch changes
inline constexpr int kStreamVersion = 1;

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_label(std::uint64_t key, std::uint64_t label) {
    return mix64(key + kGolden + mix64(label + kGolden));
}

inline std::uint64_t hash_label(std::uint64_t key, std::string_view label) {
    std::uint64_t h = key + kGolden;
    for (unsigned char c : label)
        h = mix64(h + c + kGolden);
    return h;
}

} // namespace detail

class RngStream {
  public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed)
        : key_(detail::mix64(seed + detail::kGolden)) {}

    // child stream; draws from the child never collide with the parent's
    RngStream split(std::uint64_t label) const {
        return RngStream(detail::hash_label(key_, label), 0);
    }
    RngStream split(std::string_view label) const {
        return RngStream(detail::hash_label(key_, label), 0);
    }
    RngStream split(std::uint64_t a, std::uint64_t b) const {
        return split(a).split(b);
    }
    RngStream split(std::uint64_t a, std::string_view b) const {
        return split(a).split(b);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() {
        ctr_ += detail::kGolden;
        return detail::mix64(key_ + ctr_);
    }

    // uniform in [0,1)
    double uniform01() {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    bool bernoulli(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return uniform01() < p;
    }

    long long poisson(double mean) {
        if (mean < 0.0 || !std::isfinite(mean))
            throw std::invalid_argument("poisson: bad mean");
        if (mean == 0.0) return 0;
        std::poisson_distribution<long long> d(mean);
        return d(*this);
    }

    long long binomial(long long n, double p) {
        if (n < 0 || p < 0.0 || p > 1.0)
            throw std::invalid_argument("binomial: bad params");
        if (n == 0 || p == 0.0) return 0;
        if (p == 1.0) return n;
        std::binomial_distribution<long long> d(n, p);
        return d(*this);
    }

    // geometric on {1,2,...}: number of trials up to and including the first
    // success, P(k) = p (1-p)^(k-1)
    long long geometric1(double p) {
        if (p <= 0.0 || p > 1.0)
            throw std::invalid_argument("geometric1: bad p");
        if (p == 1.0) return 1;
        std::geometric_distribution<long long> d(p);
        return d(*this) + 1;
    }

    // index draw weighted by nonnegative weights; total must be positive
    std::size_t categorical(const std::vector<double>& w) {
        double tot = 0.0;
        for (double x : w) tot += x;
        if (!(tot > 0.0))
            throw std::invalid_argument("categorical: zero total weight");
        double u = uniform01() * tot;
        double acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            acc += w[i];
            if (u < acc) return i;
        }
        return w.size() - 1;
    }

    std::uint64_t key() const { return key_; }

  private:
    RngStream(std::uint64_t key, std::uint64_t ctr) : key_(key), ctr_(ctr) {}

    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
};

} // namespace crlab
