#pragma once

#include <cmath>
#include <cstdint>

namespace kgje {

// Deterministic 64-bit PRNG: xoshiro256** seeded through splitmix64.
// The algorithm is fixed here (not delegated to <random> distributions,
// whose output is implementation-defined) so that a seed fully determines
// a run on every platform.
//
//   splitmix64:  z = (s += 0x9E3779B97F4A7C15);
//                z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//                z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//                return z ^ (z >> 31);
//   xoshiro256**: result = rotl(s1 * 5, 7) * 9, state update per Blackman/Vigna.
//
// uniform() maps the top 53 bits to [0,1); normal() is Box-Muller on two
// uniform draws (no cached spare); below(n) is unbiased via rejection.
class Rng {
  public:
    explicit Rng(uint64_t seed) {
        uint64_t z = seed;
        for (int i = 0; i < 4; ++i) s_[i] = splitmix64(z);
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n)
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        uint64_t x = next();
        while (x < threshold) x = next();
        return x % n;
    }

    bool coin() { return (next() >> 63) != 0; }

    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Independent child stream (used to give each pipeline stage its own
    // sequence while keeping everything derived from the root seed).
    Rng fork(uint64_t stream) {
        uint64_t z = next() ^ (stream * 0x9E3779B97F4A7C15ULL);
        return Rng(splitmix64(z));
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    static uint64_t splitmix64(uint64_t& s) {
        uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    uint64_t s_[4];
};

}  // namespace kgje
