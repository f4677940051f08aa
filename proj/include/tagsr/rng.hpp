#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tagsr {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent deterministic substream keyed by (seed, keys...). Used so that
/// per-individual work draws the same numbers regardless of scheduling.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys)
{
    std::uint64_t h = splitmix64(seed);
    for (auto k : keys) {
        h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    }
    return Rng(h);
}

inline double uniform01(Rng& rng)
{
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n)
{
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

} // namespace tagsr
