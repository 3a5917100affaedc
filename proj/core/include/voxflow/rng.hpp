#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace voxflow {

// FNV-1a 64-bit. Used for content checksums and for deriving sub-seeds from
// names; a fingerprint, not a cryptographic hash.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

// Mix a base seed with a purpose tag so independent streams never overlap.
inline std::uint64_t sub_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = fnv1a64(tag);
    h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

// Deterministic gaussian source. Box-Muller on top of mt19937_64 instead of
// std::normal_distribution, whose algorithm is implementation-defined; this
// keeps streams bit-stable across standard libraries.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite.
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t next_u64() { return gen_(); }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace voxflow
