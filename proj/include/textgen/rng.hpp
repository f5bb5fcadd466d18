#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace textgen {

// Deterministic random stream. Draws come from mt19937_64 with hand-rolled
// distributions so that identical seeds give identical values on every
// platform and standard library.
//
// Streams are named: Rng(seed, "lm-train") and Rng(seed, "gan-train") are
// independent even for the same seed.
class Rng {
   public:
    explicit Rng(uint64_t seed) : engine_(mix(seed, 0x6a09e667f3bcc908ull)) {}

    Rng(uint64_t seed, std::string_view stream)
        : engine_(mix(seed, fnv1a(stream))) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform on (0, 1): never returns 0 or 1.
    double uniform() {
        // 53-bit mantissa draw on [0,1), shifted half a step into (0,1).
        const uint64_t bits = engine_() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller with a cached spare.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n), n >= 1. Rejection sampling, no modulo bias.
    int uniform_int(int n);

    // Gumbel(0,1) = -log(-log(U)), U clamped away from {0,1}.
    double gumbel();

   private:
    static uint64_t fnv1a(std::string_view s) {
        uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }

    // SplitMix64 finalizer over (seed, stream tag).
    static uint64_t mix(uint64_t seed, uint64_t tag) {
        uint64_t z = seed + 0x9e3779b97f4a7c15ull + tag;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace textgen
