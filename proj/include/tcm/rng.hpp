#pragma once

// Counter-based random streams (Philox4x32-10). A stream is a pure
// function of (seed, trajectory index, draw counter), so trajectories can
// be generated in any order on any thread and still reproduce bit for bit.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace tcm {

namespace detail {

inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                 std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kW0;
        key[1] += kW1;
    }
    return ctr;
}

// 53-bit uniform in (0, 1]; never returns 0 so log() is safe.
inline double to_unit_open_closed(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

} // namespace detail

class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t trajectory_index)
        : seed_(seed), index_(trajectory_index) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t trajectory_index() const { return index_; }
    std::uint64_t counter() const { return counter_; }

    /// Two independent uniforms in (0, 1] from one Philox block.
    std::array<double, 2> uniform_pair() {
        const auto out = detail::philox4x32_10(
            {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
             static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32)},
            {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
        ++counter_;
        return {detail::to_unit_open_closed(out[0], out[1]),
                detail::to_unit_open_closed(out[2], out[3])};
    }

    /// Two independent standard normals (Box-Muller).
    std::array<double, 2> normal_pair() {
        const auto [u1, u2] = uniform_pair();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(theta), r * std::sin(theta)};
    }

private:
    std::uint64_t seed_;
    std::uint64_t index_;
    std::uint64_t counter_ = 0;
};

} // namespace tcm
