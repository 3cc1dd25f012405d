#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace evcs {

/// SplitMix64 finalizer. Used to derive independent stream seeds from keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27U)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31U);
}

/// Folds a sequence of integer keys into one stream seed.
template <class... Keys>
constexpr std::uint64_t stream_key(std::uint64_t seed, Keys... keys) noexcept
{
    std::uint64_t h = mix64(seed);
    ((h = mix64(h ^ static_cast<std::uint64_t>(keys))), ...);
    return h;
}

/// Small counter-based generator. Satisfies UniformRandomBitGenerator so it
/// plugs into <random> distributions, but is also cheap enough to create one
/// per (customer, station, fold) triple.
class SplitMix64 {
  public:
    using result_type = std::uint64_t;

    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_{seed} {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept
    {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31U);
    }

    /// Uniform on the open interval (0, 1).
    double open_uniform() noexcept
    {
        return (static_cast<double>((*this)() >> 11U) + 0.5) * 0x1.0p-53;
    }

    /// Standard Gumbel (location 0, scale 1) by inverse CDF.
    double gumbel() noexcept { return -std::log(-std::log(open_uniform())); }

    /// Standard normal via Box-Muller (one of the pair is discarded so the
    /// stream position stays a simple function of the draw count).
    double normal() noexcept
    {
        const double u1 = open_uniform();
        const double u2 = open_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
    }

  private:
    std::uint64_t state_;
};

} // namespace evcs
