// observables.hpp — the fixed set of per-trajectory quadratic forms.
#pragma once

#include <array>
#include <cstddef>

namespace bloch {

// Unnormalized expectation values <psi|A|psi> recorded at each output time.
// Ensemble means of these reproduce Tr[A rho] for the linear unraveling.
enum Obs : std::size_t {
    kNorm = 0,        // <psi|psi>
    kSurvival,        // probability inside the measurement window
    kVelocity,        // <v>
    kPosition,        // <z>
    kPositionSq,      // <z^2>
    kVelocitySq,      // <v^2>
    kAbsorbedLow,     // cumulative probability removed at the z_min edge
    kAbsorbedHigh,    // cumulative probability removed at the z_max edge
    kObsCount
};

using Sample = std::array<double, kObsCount>;

}  // namespace bloch
