#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace erlab {

// splitmix64; used both as a seed scrambler and to derive named sub-streams.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic sub-stream derivation: every random choice in the project
// flows from a root seed through (label, index) pairs, so runs are
// reproducible regardless of execution order.
inline uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t index = 0) {
    return splitmix64(splitmix64(root ^ fnv1a64(label)) + index);
}

// mt19937_64 wrapper with platform-independent uniform/gaussian draws.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(splitmix64(seed)) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        // rejection sampling keeps the draw unbiased
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    // Box-Muller; avoids std::normal_distribution so streams are identical
    // across standard library implementations.
    double gaussian(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace erlab
