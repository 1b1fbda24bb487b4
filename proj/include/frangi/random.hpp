#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace frangi {

/// SplitMix64 finalizer; mixes a counter into a well-distributed 64-bit word.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Generator keyed by (seed, counter). mt19937_64's output sequence is fixed by
/// the standard; the helpers below avoid the implementation-defined
/// distributions so streams are identical across standard libraries.
inline std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t counter)
{
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ counter));
}

/// Uniform integer in [0, n) by rejection sampling.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n)
{
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal deviate via Box-Muller (one value per call).
inline double standard_normal(std::mt19937_64& rng)
{
    const double u1 = 1.0 - uniform_unit(rng); // (0, 1]
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace frangi
