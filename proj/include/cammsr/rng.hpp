#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cammsr {

// Deterministic xoshiro256** generator seeded through splitmix64.
// The integer stream is pure 64-bit arithmetic, so identical seeds give
// identical draws on every platform. Gaussian draws use an Irwin-Hall sum
// of twelve uniforms instead of Box-Muller to stay libm-free.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9E3779B97F4A7C15ULL;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            s = z ^ (z >> 31);
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, bound). bound must be > 0.
    uint64_t uniform_int(uint64_t bound) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * bound) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Approximate standard normal: sum of 12 uniforms minus 6 (exact mean 0, var 1).
    double normal() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += uniform();
        return s - 6.0;
    }

    template <class V>
    void shuffle(V& items) {
        for (size_t i = items.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // Derives an independent stream, e.g. per epoch or per parameter name.
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static uint64_t hash_name(const std::string& name) {
        uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
        for (unsigned char c : name) {
            h ^= c;
            h *= 0x100000001B3ULL;
        }
        return h;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t state_[4];
};

}  // namespace cammsr
