#pragma once

#include <cmath>
#include <cstdint>

namespace soh {

// Seeded generator with a fixed, portable algorithm so streams can be
// reproduced outside this codebase:
//   * integers: splitmix64 (Steele, Lea, Flood 2014)
//   * uniform doubles: top 53 bits of the next integer, mapped to [0, 1)
//   * normals: basic Box-Muller, two uniforms per draw, no caching
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; log argument is in (0, 1] so it never
    // sees zero.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace soh
