#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace roughmkv {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// A draw is a pure function of (key, counter): no state, no ordering dependence.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit constexpr Philox4x32(std::uint64_t key)
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

    constexpr Block operator()(Block ctr) const {
        std::array<std::uint32_t, 2> k = key_;
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                k[0] += 0x9E3779B9u;
                k[1] += 0xBB67AE85u;
            }
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0};
        }
        return ctr;
    }

private:
    std::array<std::uint32_t, 2> key_;
};

/// Stream purposes. Each purpose owns a disjoint range of stream identifiers.
enum class StreamTag : std::uint64_t {
    driver = 1,
    particle_noise = 2,
    initial_law = 3,
    backward_paths = 4,
    test_draws = 5,
};

/// A splittable random stream identified by (seed, tag, index).
/// `uniform(c)` / `normal(c)` are pure functions of the counter c.
class RandomStream {
public:
    constexpr RandomStream(std::uint64_t seed, StreamTag tag, std::uint64_t index)
        : gen_(seed), stream_((static_cast<std::uint64_t>(tag) << 56) ^ index) {}

    constexpr Philox4x32::Block block(std::uint64_t counter) const {
        return gen_({static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
                     static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)});
    }

    /// Uniform in the open interval (0, 1), 53-bit resolution.
    double uniform(std::uint64_t counter) const {
        const auto b = block(counter);
        return to_unit(b[0], b[1]);
    }

    /// Standard normal via Box-Muller on one Philox block.
    double normal(std::uint64_t counter) const {
        const auto b = block(counter);
        const double u1 = to_unit(b[0], b[1]);
        const double u2 = to_unit(b[2], b[3]);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    static double to_unit(std::uint32_t lo, std::uint32_t hi) {
        const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    Philox4x32 gen_;
    std::uint64_t stream_;
};

}  // namespace roughmkv
