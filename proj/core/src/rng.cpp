#include "sepseg/rng.hpp"

#include <cmath>
#include <numbers>

namespace sepseg {

std::uint64_t SplitMix64::next_below(std::uint64_t n) {
    // Rejection sampling over the largest multiple of n below 2^64.
    const std::uint64_t threshold = -n % n;  // (2^64 - n) mod n
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

double SplitMix64::next_gaussian() {
    // u1 in (0,1] so the log stays finite.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

SplitMix64 SplitMix64::split(std::uint64_t stream) const {
    SplitMix64 mixer(state_ ^ (0xBF58476D1CE4E5B9ull * (stream + 1)));
    return SplitMix64(mixer.next_u64());
}

}  // namespace sepseg
