#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace recdesk {

// Seeded randomness helpers. The distributions are written out by hand so
// that every stream is reproducible byte-for-byte on any platform; the
// standard distributions leave their algorithms implementation-defined.

inline double uniform01(std::mt19937_64& eng) {
    // 53 uniform bits in [0, 1).
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& eng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(eng);
}

// Box-Muller without state: consumes exactly two engine draws per sample.
inline double normal01(std::mt19937_64& eng) {
    double u1 = uniform01(eng);
    double u2 = uniform01(eng);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// FNV-1a, used for scenario/config fingerprints and seed derivation.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 14695981039346656037ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Independent sub-streams from one run seed, tagged by purpose.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    std::uint64_t h = fnv1a64(tag);
    h ^= base + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

} // namespace recdesk
