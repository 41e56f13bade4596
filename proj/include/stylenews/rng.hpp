// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace stylenews {

// Counter-free deterministic RNG (xoshiro256** seeded via splitmix64).
// Identical across platforms; std:: distributions are avoided on purpose
// because their output is implementation-defined.
//
// All randomness in the project is derived structurally:
//     Rng r = Rng::derive(master_seed, "shuffle/d_style", epoch, pass);
// so a resumed run draws exactly what the uninterrupted run drew.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9E3779B97F4A7C15ull;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
            s = z ^ (z >> 31);
        }
    }

    template <typename... Parts>
    static Rng derive(uint64_t seed, std::string_view tag, Parts... parts) {
        uint64_t h = 0xCBF29CE484222325ull ^ seed;
        auto mix = [&h](uint64_t v) {
            h ^= v;
            h *= 0x100000001B3ull;
            h ^= h >> 29;
        };
        for (char c : tag) mix(static_cast<uint64_t>(static_cast<unsigned char>(c)));
        (mix(static_cast<uint64_t>(parts)), ...);
        return Rng(h);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl_(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl_(state_[3], 45);
        return result;
    }

    // uniform in [0, 1), 53-bit resolution
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // unbiased integer in [0, n)
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Box-Muller; draws two uniforms per call
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * mag * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl_(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
};

}  // namespace stylenews
