#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mcl {

/// Counter-based SplitMix64 generator.
///
/// The i-th output (i = 1, 2, ...) is mix64(key + i * 0x9E3779B97F4A7C15), where
/// mix64 is the SplitMix64 finalizer (Steele, Lea, Flood 2014). A generator is
/// fully described by (key, counter), so draws are identical on every platform.
/// split(stream) derives an independent child key without advancing the parent,
/// which lets training keep separate streams for shuffling, augmentation and
/// mask sampling.
class Rng {
public:
    explicit constexpr Rng(std::uint64_t seed) noexcept : key_(mix64(seed ^ 0x6A09E667F3BCC909ULL)) {}

    [[nodiscard]] constexpr Rng split(std::uint64_t stream) const noexcept {
        Rng child(0);
        child.key_ = mix64(key_ ^ mix64(stream + 0xBB67AE8584CAA73BULL));
        return child;
    }

    constexpr std::uint64_t next_u64() noexcept {
        ++counter_;
        return mix64(key_ + counter_ * kGamma);
    }

    /// Uniform integer in [lo, hi] (inclusive), unbiased (Lemire's method).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
        const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit span
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * range;
        auto low = static_cast<std::uint64_t>(m);
        if (low < range) {
            const std::uint64_t threshold = (0 - range) % range;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * range;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return lo + static_cast<std::int64_t>(m >> 64);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (one output per call, two uniforms consumed).
    double normal() noexcept {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) noexcept { return uniform01() < p; }

    [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    static constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace mcl
