// rng.hpp — per-trajectory random streams derived from a master seed.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bloch {

// SplitMix64 finalizer; used only to decorrelate (master, index) pairs.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t trajectory_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return splitmix64(master ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

// Draws for one trajectory: the recoil projection u ~ U[-1, 1] (density 1/2)
// and the real Wiener increment dxi ~ N(0, dt). Draw order per step is
// always u first, then dxi.
class TrajectoryRng {
public:
    explicit TrajectoryRng(std::uint64_t seed) : engine_(seed) {}

    double recoil_projection() { return uniform_(engine_); }
    double wiener_increment(double dt) { return std::sqrt(dt) * normal_(engine_); }
    double standard_normal() { return normal_(engine_); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> uniform_{-1.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace bloch
