#pragma once

#include <cstdint>

// Deterministic PRNG used for everything random in the toolkit. The exact
// algorithms are part of the reproducibility contract:
//
//   splitmix64(state):
//     state += 0x9E3779B97F4A7C15
//     z = state
//     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//     return z ^ (z >> 31)
//
//   xoshiro256** (Blackman/Vigna), state seeded with four successive
//   splitmix64 outputs:
//     r = rotl(s1 * 5, 7) * 9
//     t = s1 << 17
//     s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)
//
//   uniform():        (next_u64() >> 40) * 2^-24              -> [0, 1)
//   uniform_int(n):   next_u64() % n
//   derive_seed(m,k): splitmix64 step of m + 0x9E3779B97F4A7C15 * (k + 1)
namespace sgp {

struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        state += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

// Independent sub-stream seed; used to give every example / layer / subsystem
// its own generator so results do not depend on evaluation order.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
    return SplitMix64(master + 0x9E3779B97F4A7C15ULL * (stream + 1)).next();
}

class Rng {
public:
    explicit Rng(uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& w : s_) w = sm.next();
    }

    uint64_t next_u64() {
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

    // [0, 1); 24-bit resolution so the value is exact in single precision.
    float uniform() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
};

} // namespace sgp
