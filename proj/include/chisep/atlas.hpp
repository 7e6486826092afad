// Intensity standardization, hybrid-contrast construction, and voxelwise
// aggregation of co-registered subject maps into mean / SD / rSD atlases.
#pragma once

#include <array>

#include "chisep/types.hpp"

namespace chisep {

struct AtlasBundle {
    ScalarVolume mean;
    ScalarVolume per_voxel_sd;  // sample SD (N-1 denominator)
    ScalarVolume rsd;           // SD / |mean| * 100, percent; 0 where undefined
    BinaryMask rsd_defined;     // false where |mean| < 1e-6 (or outside mask)
    int n_subjects = 0;
};

// 0%,10%,...,100% quantiles of the masked values, by linear interpolation of
// the order statistics. Needs at least 11 masked voxels.
std::array<double, 11> masked_deciles(const ScalarVolume& image, const BinaryMask& mask);

// Piecewise-linear histogram standardization: maps the image's masked
// deciles onto `target_deciles`, interpolating between knots and extending
// the end segments linearly. Requires >= 11 distinct masked values
// ("degenerate histogram" otherwise) and strictly ascending targets.
// The transform is monotone non-decreasing; the whole volume is remapped.
ScalarVolume normalize_deciles(const ScalarVolume& image, const BinaryMask& mask,
                               const std::array<double, 11>& target_deciles);

// Affine rescale of [min, max] onto [lo, hi]; a constant image is an error.
ScalarVolume scale_to_range(const ScalarVolume& image, double lo = 0.0, double hi = 255.0);

// Registration contrast: t1 - 0.8 * qsm, voxelwise.
ScalarVolume hybrid_image(const ScalarVolume& t1_norm, const ScalarVolume& qsm_ppb);

// Voxelwise mean, sample SD, and relative SD across >= 2 subject maps,
// evaluated inside `mask`. rSD is flagged undefined where |mean| < 1e-6.
AtlasBundle aggregate(const std::vector<ScalarVolume>& maps, const BinaryMask& mask);

}  // namespace chisep
