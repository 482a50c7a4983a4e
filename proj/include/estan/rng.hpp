#pragma once

#include <cstdint>

namespace estan {

/// SplitMix64 generator. Chosen because the whole pipeline (init, shuffles,
/// augmentation, synthetic data) must replay bit-for-bit from a single seed,
/// and SplitMix64 is pure 64-bit integer arithmetic with published reference
/// outputs. Test vectors live in docs/rng.md and tests/test_rng.cpp.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed) : state_(seed) {}

    uint64_t seed_state() const { return state_; }

    /// Next raw 64-bit word.
    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0,1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0,n). Lemire multiply-high; no libm, no rejection.
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal deviate via Irwin-Hall: sum of 12 uniforms minus 6.
    /// Exact mean 0 and variance 1; support is [-6,6]; consumes 12 words.
    double next_normal() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += next_unit();
        return s - 6.0;
    }

private:
    uint64_t state_;
};

// Stream-derivation constants: xor one of these into the run seed to get an
// independent deterministic stream per subsystem. Documented in docs/rng.md;
// changing them breaks replay.
namespace rng_streams {
inline constexpr uint64_t kInitStream = 0x696E697400000000ULL;   // "init"
inline constexpr uint64_t kTrainStream = 0x747261696E000000ULL;  // "train"
inline constexpr uint64_t kFoldStream = 0x666F6C6400000000ULL;   // "fold"
}  // namespace rng_streams

}  // namespace estan
