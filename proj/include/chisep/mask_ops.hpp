// mask_ops.hpp - binary mask morphology on anisotropic grids.
#pragma once

#include <vector>

#include "chisep/types.hpp"

namespace chisep {

// Squared Euclidean distance (mm^2) from each voxel to the nearest false
// voxel; 0 on false voxels. Voxels are treated as points at index*voxel_mm.
// Exact separable transform (lower envelope of parabolas per axis).
std::vector<double> distance_sq_to_false(const BinaryMask& mask, const Vec3& voxel_mm);

// True iff every voxel within Euclidean distance radius_mm (closed ball,
// anisotropy-aware) is true in the input. radius 0 is the identity.
BinaryMask erode_mask(const BinaryMask& mask, double radius_mm, const Vec3& voxel_mm);

}  // namespace chisep
