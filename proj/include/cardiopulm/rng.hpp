#pragma once

#include <cmath>
#include <cstdint>

namespace cardiopulm::rng {

// Counter-based (stateless) random numbers. Every draw is a pure function of
// a seed and one or more counters, so parallel loops can sample per index
// without any shared stream and results never depend on iteration order.

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t combine(std::uint64_t seed, std::uint64_t counter) {
    return mix64(seed ^ mix64(counter));
}

inline std::uint64_t combine(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return combine(combine(seed, a), b);
}

inline std::uint64_t combine(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                             std::uint64_t c) {
    return combine(combine(seed, a, b), c);
}

// Uniform in [0, 1). 53-bit mantissa.
inline double uniform01(std::uint64_t key) {
    return static_cast<double>(key >> 11) * 0x1.0p-53;
}

inline double uniform01(std::uint64_t seed, std::uint64_t counter) {
    return uniform01(combine(seed, counter));
}

// Standard normal via Box-Muller on two decorrelated substreams of one key.
inline double normal(std::uint64_t key) {
    const double u1 = uniform01(mix64(key ^ 0xd1b54a32d192ed03ULL));
    const double u2 = uniform01(mix64(key ^ 0x8cb92ba72f3d8dd7ULL));
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
}

inline double normal(std::uint64_t seed, std::uint64_t counter) {
    return normal(combine(seed, counter));
}

// Uniform integer in [0, n). Modulo bias is < 2^-53 for any realistic n.
inline std::uint64_t below(std::uint64_t key, std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform01(key) * static_cast<double>(n));
}

}  // namespace cardiopulm::rng
