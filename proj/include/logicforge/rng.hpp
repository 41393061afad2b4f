#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace logicforge {

using Rng = std::mt19937_64;

// Derives an independent child seed from a root seed and a component label,
// so every component draws from its own stream of the single user seed.
inline std::uint64_t split_seed(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the label
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (h | 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double sample_gumbel(Rng& rng) {
    double u = uniform01(rng);
    u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
    return -std::log(-std::log(u));
}

} // namespace logicforge
