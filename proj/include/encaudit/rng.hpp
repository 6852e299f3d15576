#pragma once

// Deterministic random streams.
//
// All sampling in the toolkit goes through Rng, a thin wrapper over
// std::mt19937_64 (whose output sequence is fixed by the C++ standard).
// Distributions are implemented here instead of using <random>'s
// distribution classes, whose algorithms are implementation-defined, so a
// given seed produces the same corpus, dataset and weights with any
// standard library.
//
//   uniform01()      (x >> 11) * 2^-53, x the next 64-bit output
//   uniform_index(n) rejection sampling on the top bits (unbiased)
//   normal()         Box-Muller on two uniform01 draws, one value per call
//
// Per-item streams (one per sentence id, say) are derived with
// derive_seed(base, key): FNV-1a over the key bytes mixed into the base seed
// with the SplitMix64 finalizer.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace encaudit {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xCBF29CE484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view key) {
    return splitmix64(base ^ splitmix64(fnv1a64(key)));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key) {
    return splitmix64(base ^ splitmix64(key + 0x632BE59BD9B4E019ULL));
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n <= 1) return 0;
        std::uint64_t mask = n - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        for (;;) {
            std::uint64_t x = engine_() & mask;
            if (x < n) return x;
        }
    }

    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Fisher-Yates, driven by uniform_index.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace encaudit
