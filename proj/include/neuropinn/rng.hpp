#pragma once

// Counter-based pseudo-random numbers. Every draw is a pure function of
// (seed, stream, counter), so any consumer can reproduce a value without
// carrying generator state. The mixer is the SplitMix64 finalizer applied
// to a combined 64-bit key; normals come from Box-Muller on two uniform
// draws at counters (2c, 2c+1).

#include <cmath>
#include <cstdint>

namespace neuropinn::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

/// Raw 64-bit word for (seed, stream, counter).
inline std::uint64_t word(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t key = mix64(seed + kGolden) ^ mix64(stream * 0xda942042e4dd58b5ull + kGolden);
    return mix64(key + counter * kGolden);
}

/// Uniform draw in the open interval (0, 1).
inline double uniform01(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    // 53 mantissa bits, offset by half an ulp so 0 is never produced
    return (static_cast<double>(word(seed, stream, counter) >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                      double lo, double hi) {
    return lo + (hi - lo) * uniform01(seed, stream, counter);
}

/// Standard normal via Box-Muller; draw i consumes uniform counters 2i and 2i+1.
inline double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    const double u1 = uniform01(seed, stream, 2 * counter);
    const double u2 = uniform01(seed, stream, 2 * counter + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
}

/// Uniform integer in [0, n).
inline std::uint64_t below(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                           std::uint64_t n) {
    // 64-bit multiply-shift; bias is negligible for n << 2^64
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(word(seed, stream, counter)) * n) >> 64);
}

// Stream ids used across the project; fixed so runs are reproducible.
namespace stream {
inline constexpr std::uint64_t kNoise = 1;
inline constexpr std::uint64_t kNetInit = 2;
inline constexpr std::uint64_t kStage1Batch = 3;
inline constexpr std::uint64_t kStage2Batch = 4;
inline constexpr std::uint64_t kMultistart = 5;
}  // namespace stream

}  // namespace neuropinn::rng
