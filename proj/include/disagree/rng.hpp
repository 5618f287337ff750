#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace disagree {

/// SplitMix64 (Steele, Lea, Flood 2014). 64-bit state, increment
/// 0x9e3779b97f4a7c15, output mix with shifts 30/27/31 and multipliers
/// 0xbf58476d1ce4e5b9 / 0x94d049bb133111eb. Every random draw in the project
/// (epoch shuffles, survey sampling, synthetic corpora) goes through this
/// generator so results are identical on every platform; std distributions
/// are never used because their output is implementation-defined.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept
    {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [0, bound) by rejection; bound must be > 0.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept
    {
        const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % bound;
        std::uint64_t x = next();
        while (x >= limit) x = next();
        return x % bound;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    constexpr double uniform() noexcept
    {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    constexpr std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

/// Fisher-Yates shuffle driven by SplitMix64::below.
template <typename T>
void shuffle(std::span<T> items, SplitMix64& rng) noexcept
{
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace disagree
