#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace tempo::rng {

inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Deterministic random stream. State is a single 64-bit word, so streams are
/// trivially serializable (checkpoints) and cheap to fork.
///
/// Distributions are implemented by hand rather than via <random> so that the
/// produced sequences are identical across standard libraries.
class Stream {
public:
    Stream() : state_(0) {}
    explicit Stream(uint64_t state) : state_(state) {}

    uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform on the open interval (0, 1); never returns an exact 0 or 1.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (cosine branch only, keeps state flat).
    double normal() {
        const double u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Exponential with the given mean; strictly positive.
    double exponential(double mean) { return -mean * std::log(uniform01()); }

    /// Unbiased integer in [0, n) by rejection.
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

private:
    uint64_t state_;
};

/// Derive a named stream from a root seed. Every consumer of randomness pulls
/// from its own named stream, so adding a consumer never perturbs the others.
inline Stream stream(uint64_t seed, std::string_view name) {
    uint64_t s = seed ^ fnv1a64(name);
    splitmix64(s); // decorrelate adjacent seeds
    return Stream(s);
}

} // namespace tempo::rng
