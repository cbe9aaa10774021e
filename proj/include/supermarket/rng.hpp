#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

#include "supermarket/errors.hpp"

namespace supermarket {

// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3"). Deterministic across platforms; a stream is
// identified by its 64-bit key, so replication r simply uses key seed + r.
class Philox {
public:
    explicit Philox(std::uint64_t seed) : key_{static_cast<std::uint32_t>(seed),
                                               static_cast<std::uint32_t>(seed >> 32)} {}

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += 0x9E3779B9u;  // golden ratio
                key[1] += 0xBB67AE85u;  // sqrt(3)-1
            }
            const std::uint64_t p0 = 0xD2511F53ull * ctr[0];
            const std::uint64_t p1 = 0xCD9E8D57ull * ctr[2];
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

    std::uint32_t next_u32() {
        if (pos_ == 4) {
            buf_ = block({static_cast<std::uint32_t>(counter_),
                          static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u},
                         key_);
            ++counter_;
            pos_ = 0;
        }
        return buf_[pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Exponential with the given rate.
    double exponential(double rate) {
        if (rate <= 0.0) throw DomainError("exponential: rate must be positive");
        return -std::log1p(-uniform01()) / rate;
    }

    // Uniform integer in [0, n).
    std::uint64_t uniform_below(std::uint64_t n) {
        // Multiply-shift; bias is negligible for the n used here (<= 2^32).
        return static_cast<std::uint64_t>(uniform01() * static_cast<double>(n)) % n;
    }

    // Index drawn proportionally to the (nonnegative) weights. Zero-weight
    // entries are never selected; rounding at the right edge falls back to
    // the last positive weight.
    std::size_t categorical(std::span<const double> weights, double total) {
        double u = uniform01() * total;
        std::size_t fallback = 0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) continue;
            fallback = i;
            u -= weights[i];
            if (u < 0.0) return i;
        }
        return fallback;
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
};

}  // namespace supermarket
