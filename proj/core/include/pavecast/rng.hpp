#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace pavecast {

// Deterministic PRNG with explicit output mapping. std::mt19937_64 has a
// standardized sequence, but the std distributions do not, so uniform and
// normal draws are implemented here directly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix(seed)) {}

    std::uint64_t next_u64() {
        // xorshift64* over a splitmix-seeded state.
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545F4914F6CDD1DULL;
    }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (one value per call, no caching so the
    // stream stays position-independent).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Truncated normal: resample until inside [lo, hi]. Falls back to
    // clamped uniform if the window is pathologically far in the tail.
    double truncated_normal(double mean, double std, double lo, double hi) {
        if (std <= 0.0) return mean < lo ? lo : (mean > hi ? hi : mean);
        for (int i = 0; i < 1000; ++i) {
            const double v = normal(mean, std);
            if (v >= lo && v <= hi) return v;
        }
        return uniform(lo, hi);
    }

    // Index in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t state_;
};

// Derives an independent substream seed from a master seed and a label.
// All randomness in a run flows from the master seed through this map.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0) {
    std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
    for (const char c : label) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001B3ULL;
    }
    return Rng::splitmix(master ^ Rng::splitmix(h) ^ Rng::splitmix(index * 0x9E3779B97F4A7C15ULL + 1));
}

}  // namespace pavecast
