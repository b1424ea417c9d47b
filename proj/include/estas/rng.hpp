#pragma once

#include <cstdint>
#include <cmath>

namespace estas {

// Counter-free splitmix64 stream. The standard-library engines and
// distributions are not bit-stable across implementations, so every random
// draw in the project goes through this generator.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi].
    double next_range(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t next_below(std::uint64_t n) {
        // Rejection sampling keeps the draw unbiased.
        const std::uint64_t limit = n * ((~0ULL) / n);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller on this stream.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

private:
    std::uint64_t state_;
};

// Mixes an arbitrary number of 64-bit words into one seed. Per-sample and
// per-view streams are derived as hash_seed(run_seed, sample, view) so batch
// work can run in any order without changing results.
inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    v *= 0xff51afd7ed558ccdULL;
    v ^= v >> 33;
    h ^= v;
    h *= 0xc4ceb9fe1a85ec53ULL;
    h ^= h >> 29;
    return h;
}

inline std::uint64_t hash_seed(std::uint64_t a) {
    return hash_combine(0x2545f4914f6cdd1dULL, a);
}

inline std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b) {
    return hash_combine(hash_seed(a), b);
}

inline std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return hash_combine(hash_seed(a, b), c);
}

inline std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                               std::uint64_t d) {
    return hash_combine(hash_seed(a, b, c), d);
}

}  // namespace estas
