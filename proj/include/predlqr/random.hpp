#pragma once

// Counter-based randomness: every draw is a pure function of
// (seed, step, coordinate, stream), so paths are prefix-stable and trials can
// be generated in any order.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace predlqr::rng {

constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31U);
}

constexpr std::uint64_t hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ULL);
    h = mix64(h ^ (a + 0x632be59bd9b4e019ULL));
    h = mix64(h ^ (b + 0x8cb92ba72f3d8dd7ULL));
    h = mix64(h ^ (c + 0xd6e8feb86659fd93ULL));
    return h;
}

/// Uniform on (0, 1].
inline double uniform(std::uint64_t seed, std::uint64_t step, std::uint64_t coord, std::uint64_t stream = 0) {
    return static_cast<double>((hash(seed, step, coord, stream) >> 11U) + 1U) * 0x1.0p-53;
}

/// Standard normal by Box-Muller on two independent counters.
inline double normal(std::uint64_t seed, std::uint64_t step, std::uint64_t coord) {
    const double u1 = uniform(seed, step, coord, 1);
    const double u2 = uniform(seed, step, coord, 2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline bool coin(std::uint64_t seed, std::uint64_t step, std::uint64_t coord) {
    return (hash(seed, step, coord, 3) >> 63U) != 0U;
}

/// Seed for trial `index` of an experiment keyed by `base_seed`.
constexpr std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t index) {
    return hash(base_seed, index, 0x7472ULL, 0x6961ULL);
}

}  // namespace predlqr::rng
