// Unit magnetic dipole response in k-space and the forward models built on it:
// susceptibility -> frequency shift, susceptibility -> reversible relaxation.
#pragma once

#include <vector>

#include "chisep/types.hpp"

namespace chisep {

// Gyromagnetic ratio of the proton divided by 2*pi, in Hz per tesla.
inline constexpr double kGammaBarHzPerTesla = 42.577e6;

// Point-dipole spectrum sampled on the r2c half grid of `dims`.
// Values lie in [-2/3, 1/3]; the k=0 sample is zero (sphere-of-Lorentz
// reference, i.e. the mean field shift is excluded from the model).
struct DipoleKernel {
    Dims dims{};
    Vec3 voxel_mm{};
    Vec3 b0_dir{};
    std::vector<double> spectrum;  // size (dims[0]/2+1) * dims[1] * dims[2]
};

DipoleKernel make_dipole_kernel(const Dims& dims, const Vec3& voxel_mm, const Vec3& b0_dir);

// Frequency shift in Hz produced by a susceptibility distribution in ppb.
// The convolution runs on the kernel's grid, which may be larger than the
// volume; the input is zero-embedded and the result cropped back, so callers
// should build the kernel on a padded grid (2x per axis works well) to keep
// circular wrap-around out of the field of view.
ScalarVolume forward_field(const ScalarVolume& chi_ppb, const DipoleKernel& kernel,
                           double b0_tesla);

// Reversible relaxation rate R2' in 1/s from the para/dia components:
//   r2p = dr_para * 1e-3 * chi_para + dr_dia * 1e-3 * (-chi_dia)
// with chi in ppb and the relaxometric constants in (1/s)/ppm.
// chi_para must be >= 0 and chi_dia <= 0 everywhere.
ScalarVolume forward_r2prime(const ScalarVolume& chi_para_ppb, const ScalarVolume& chi_dia_ppb,
                             double dr_para, double dr_dia);

}  // namespace chisep
