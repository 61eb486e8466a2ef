#pragma once

#include <cmath>
#include <cstdint>

#include "vseg/common.hpp"

namespace vseg {

inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Combine a base seed with a stream index into an independent child seed.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    return mix64(base ^ mix64(stream + 0x632be59bd9b4e019ull));
}

// splitmix64 generator. Counter-based, one u64 of state, identical output on
// every platform. Normal deviates come from Box-Muller over our own uniform
// transform so the sequences are portable too (std::normal_distribution is
// not specified across standard libraries).
class Rng {
  public:
    Rng() : state_(0x853c49e6748fea9bull) {}
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit resolution
    real uniform() { return static_cast<real>(next_u64() >> 11) * 0x1.0p-53; }

    real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

    // inclusive integer range, rejection sampled (no modulo bias)
    int64_t uniform_int(int64_t lo, int64_t hi) {
        check(lo <= hi, "uniform_int: empty range");
        uint64_t n = static_cast<uint64_t>(hi - lo) + 1ull;
        if (n == 0) return static_cast<int64_t>(next_u64());  // full 2^64 range
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t u;
        do {
            u = next_u64();
        } while (u >= limit);
        return lo + static_cast<int64_t>(u % n);
    }

    real normal() {
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        real u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        real r = std::sqrt(-2.0 * std::log(u1));
        real a = 2.0 * 3.14159265358979323846 * u2;
        cache_ = r * std::sin(a);
        has_cache_ = true;
        return r * std::cos(a);
    }

    real normal(real mean, real stddev) { return mean + stddev * normal(); }

    // Independent child stream. Derived from the current state, so the same
    // (seed, call order, stream id) always yields the same child.
    Rng split(uint64_t stream) { return Rng(derive_seed(next_u64(), stream)); }

    // state serialization for resumable training
    uint64_t state() const { return state_; }
    bool has_cached_normal() const { return has_cache_; }
    real cached_normal() const { return cache_; }
    void restore(uint64_t state, bool has_cache, real cache) {
        state_ = state;
        has_cache_ = has_cache;
        cache_ = cache;
    }

  private:
    uint64_t state_;
    bool has_cache_ = false;
    real cache_ = 0.0;
};

}  // namespace vseg
