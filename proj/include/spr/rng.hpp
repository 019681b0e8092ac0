#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace spr {

// Deterministic random streams. Every consumer derives its own stream from
// the single run seed plus a purpose string, so adding or removing one
// consumer never shifts the numbers seen by another.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for a named sub-stream: hash of (seed, purpose, extras...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
    return splitmix64(seed ^ fnv1a(purpose));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                                 std::uint64_t a) {
    return splitmix64(derive_seed(seed, purpose) ^ splitmix64(a ^ 0x51ed2701ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                                 std::uint64_t a, std::uint64_t b) {
    return splitmix64(derive_seed(seed, purpose, a) ^ splitmix64(b ^ 0xa1b2c3d4ULL));
}

/// xoshiro-free counter RNG built on splitmix64. Bit-reproducible on every
/// platform, unlike std:: distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x2545f4914f6cdd1dULL)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // Rejection-free modulo is fine here: n is tiny relative to 2^64.
        return next_u64() % n;
    }

    /// Standard normal via Box-Muller (deterministic, no cached spare).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace spr
