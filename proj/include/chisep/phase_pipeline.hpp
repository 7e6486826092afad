// Wrapped per-echo phase -> background-free tissue field map, in three steps:
// Laplacian unwrapping, SNR-weighted echo combination, and spherical-mean
// background removal with a variable kernel radius.
#pragma once

#include <vector>

#include "chisep/types.hpp"

namespace chisep {

// Laplacian-based unwrapping:
//   phi_u = invlap( cos(phi) * lap(sin(phi)) - sin(phi) * lap(cos(phi)) )
// with lap / invlap realized as FFT multiplications by -(2*pi*|k|)^2 and its
// reciprocal; the k=0 component is set to zero, so the result is defined up
// to an additive constant. The volume is mirrored (even extension, 2x per
// axis) before the transforms so that non-periodic phase ramps do not wrap
// around; zero-padding alone leaves large boundary errors on ramps.
// Requires dims >= 8 per axis.
ScalarVolume laplacian_unwrap(const ScalarVolume& phase);

// Per-voxel frequency in Hz from unwrapped echo phases:
//   f = sum_i w_i * phi_i / (2*pi*TE_i) / sum_i w_i,  w_i = (M_i * TE_i)^2.
// Voxels with zero total weight get f = 0 and are excluded from the mask.
FieldMap combine_echoes(const MultiEchoGre& gre, const std::vector<ScalarVolume>& unwrapped);

// Variable-kernel spherical-mean filtering (background field removal).
// For radii r = r_max_mm down to r_min_mm in 1 mm steps, computes
// h_r = (delta - s_r) * f with s_r a normalized sphere kernel; each voxel
// keeps h_r of the largest radius whose sphere still fits inside `mask`.
// The composite is then deconvolved by the (delta - s_rmax) spectrum where
// its magnitude exceeds tsvd_threshold (zero elsewhere). The returned map
// carries the tissue field masked by `mask` eroded by r_min_mm; an empty
// eroded mask is an error.
FieldMap vsharp(const FieldMap& field, const BinaryMask& mask, double r_max_mm, double r_min_mm,
                double tsvd_threshold);

}  // namespace chisep
