#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sglmb {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stream tags so that independent consumers never share a seed.
enum class StreamTag : std::uint64_t {
    measurements = 1,
    budget = 2,
    gibbs = 3,
    test = 4,
};

/// Derives a child seed from a master seed and a path of integers
/// (trial index, scan, component index, ...).
inline std::uint64_t derive_seed(std::uint64_t master, StreamTag tag,
                                 std::initializer_list<std::uint64_t> path = {}) {
    std::uint64_t s = mix64(master ^ mix64(static_cast<std::uint64_t>(tag)));
    for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
    return s;
}

inline Rng make_rng(std::uint64_t master, StreamTag tag,
                    std::initializer_list<std::uint64_t> path = {}) {
    return Rng(derive_seed(master, tag, path));
}

/// Uniform draw in [0, 1) with 53 bits, independent of std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace sglmb
