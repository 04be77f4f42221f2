#pragma once

#include <cstdint>
#include <random>

namespace bsvie {

/// SplitMix64 step; used to derive independent per-path seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream-splitting rule: path p draws from mt19937_64 seeded with
/// splitmix64(root + (p+1)*golden). Streams depend only on (root, p), so
/// enlarging the path count leaves existing paths untouched.
inline std::mt19937_64 path_engine(std::uint64_t root_seed, std::uint64_t path) {
    return std::mt19937_64(splitmix64(root_seed + (path + 1) * 0x9e3779b97f4a7c15ULL));
}

} // namespace bsvie
