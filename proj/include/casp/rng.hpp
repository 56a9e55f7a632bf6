#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace casp {

// Counter-based SplitMix64. The n-th draw of stream (seed, key) is
//   mix64(base + (n + 1) * 0x9E3779B97F4A7C15),  base = mix64(seed ^ mix64(key))
// where mix64 is the SplitMix64 finalizer. The whole state is (base, counter),
// so any implementation reproduces identical streams from identical seeds.
class Rng {
public:
    static constexpr uint64_t golden = 0x9E3779B97F4A7C15ULL;

    static constexpr uint64_t mix64(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // FNV-1a, used to derive stream keys from names.
    static constexpr uint64_t hash(std::string_view s) {
        uint64_t h = 0xCBF29CE484222325ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ULL;
        }
        return h;
    }

    explicit Rng(uint64_t seed = 0, uint64_t key = 0) : base_(mix64(seed ^ mix64(key))) {}
    Rng(uint64_t seed, std::string_view key) : Rng(seed, hash(key)) {}

    static Rng from_state(uint64_t base, uint64_t counter) {
        Rng r;
        r.base_ = base;
        r.counter_ = counter;
        return r;
    }

    uint64_t next_u64() { return mix64(base_ + (++counter_) * golden); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return n == 0 ? 0 : static_cast<uint64_t>(uniform() * static_cast<double>(n)); }

    // Box-Muller; consumes two draws per call.
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
    }
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    uint64_t base() const { return base_; }
    uint64_t counter() const { return counter_; }

private:
    uint64_t base_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace casp
