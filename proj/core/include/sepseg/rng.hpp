#pragma once

#include <cstdint>

namespace sepseg {

// SplitMix64 generator. 64-bit state, constant-time jump, and cheap stream
// derivation, so every sampling site in the toolkit can own an independent,
// seed-reproducible stream. All distributions below are implemented by hand
// (not via <random>) because the standard distributions are
// implementation-defined and would break run-to-run byte equality across
// standard libraries.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). n must be > 0. Unbiased via rejection.
    std::uint64_t next_below(std::uint64_t n);

    // Standard normal via Box-Muller (two uniforms per sample, no cached
    // spare, so the consumption pattern is position-independent).
    double next_gaussian();

    // Derive an independent stream; used to give each phantom structure /
    // each training consumer its own generator.
    SplitMix64 split(std::uint64_t stream) const;

private:
    std::uint64_t state_;
};

}  // namespace sepseg
