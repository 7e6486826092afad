// Joint inversion of the field and R2' forward models into paramagnetic and
// diamagnetic susceptibility components, via sign-projected gradient descent.
#pragma once

#include "chisep/dipole.hpp"
#include "chisep/types.hpp"

namespace chisep {

struct SolverConfig {
    double dr_para = 100.0;    // (1/s) per ppm of |chi_para| at 3 T
    double dr_dia = 100.0;     // (1/s) per ppm of |chi_dia|
    double lambda_r2p = 1.0;   // weight of the (normalized) R2' data term
    double lambda_grad = 3e-4; // quadratic gradient regularization
    int max_iter = 500;
    double tol = 1e-8;         // relative objective change for convergence
    double step_safety = 0.9;  // step = step_safety / L, L from power iteration

    void validate() const;
};

struct ChiSeparationResult {
    ScalarVolume chi_para;  // ppb, >= 0
    ScalarVolume chi_dia;   // ppb, <= 0
    ScalarVolume qsm;       // chi_para + chi_dia, elementwise
    int iterations = 0;
    double final_objective = 0.0;
    bool converged = false;  // false: stopped at max_iter without meeting tol
};

// Minimizes
//   ||m.(A(cp+cd) - f)||^2 / sf^2
//   + lambda_r2p * ||m.(dr_para*1e-3*cp + dr_dia*1e-3*(-cd) - r2p)||^2 / sr^2
//   + lambda_grad * (||grad cp||^2 + ||grad cd||^2)
// over cp >= 0, cd <= 0, where A is the dipole field operator on the kernel's
// (padded) grid and sf, sr are the RMS of the masked data. Projected gradient
// descent with a power-iteration step bound and backtracking; iterates are
// clamped to the sign constraints and zeroed outside the mask, so the result
// satisfies the constraints exactly. Starts from a thresholded k-space
// division of the field (|D| > 0.1), split by sign.
ChiSeparationResult separate(const FieldMap& field, const ScalarVolume& r2prime,
                             const BinaryMask& mask, const DipoleKernel& kernel,
                             double b0_tesla, const SolverConfig& cfg);

}  // namespace chisep
