// Mono-exponential R2* estimation from multi-echo magnitudes, and the
// derived reversible rate R2' used by the source-separation solver.
#pragma once

#include "chisep/types.hpp"

namespace chisep {

struct R2StarFit {
    ScalarVolume r2star;        // 1/s, clamped to [0, 2000]
    ScalarVolume s0;            // extrapolated TE=0 signal, >= 0
    ScalarVolume residual_rms;  // per-voxel RMS of the fit residual
    BinaryMask valid;           // voxels with a determined fit
};

// Per masked voxel, least-squares fit of M_i ~ S0 * exp(-R2* * TE_i).
// Starts from a log-linear regression (magnitudes epsilon-floored for the
// init only) and refines with damped Gauss-Newton: at most 50 iterations,
// step halved while the sum of squares would increase, stop when the
// relative parameter change drops below 1e-8. Voxels with fewer than two
// positive echoes come back invalid (R2* = 0, excluded from `valid`).
// Needs at least 3 echoes.
R2StarFit fit_r2star(const MultiEchoGre& gre, const BinaryMask& mask);

// R2' = max(R2* - r2_baseline, 0). With a zero baseline this is the
// identity, i.e. R2* stands in for R2' directly.
ScalarVolume r2prime_from_r2star(const ScalarVolume& r2star, double r2_baseline);

}  // namespace chisep
