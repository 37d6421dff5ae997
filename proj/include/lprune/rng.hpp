#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace lprune {

// splitmix64 finalizer; used to derive decorrelated sub-seeds.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic seed for a subtask identified by (a, b) under a master seed.
// Schedule-independent parallelism hangs off this: every cell/candidate/batch
// derives its own stream.
inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
    return splitmix64(seed ^ splitmix64(a + 0x632be59bd9b4e019ULL) ^ splitmix64(b + 0x9e6c63d0876a9a47ULL));
}

// mt19937_64 with hand-rolled distributions. The engine's output sequence is
// pinned by the standard; the std distribution templates are not, and
// reproducibility here must not depend on the C++ runtime in use.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n), rejection sampled (no modulo bias)
    uint64_t uniform_int(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // standard normal via Box-Muller, pair-cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lprune
