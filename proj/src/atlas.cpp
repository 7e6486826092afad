#include "chisep/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace chisep {

namespace {

double quantile_sorted(const std::vector<double>& v, double p) {
    // linear interpolation of order statistics at rank (n-1)*p
    const double pos = (static_cast<double>(v.size()) - 1.0) * p;
    const std::size_t i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) return v.back();
    const double frac = pos - static_cast<double>(i);
    return frac == 0.0 ? v[i] : v[i] + frac * (v[i + 1] - v[i]);
}

}  // namespace

std::array<double, 11> masked_deciles(const ScalarVolume& image, const BinaryMask& mask) {
    if (mask.dims != image.dims) throw std::runtime_error("masked_deciles: mask grid mismatch");
    std::vector<double> vals;
    vals.reserve(mask.count_true());
    for (std::size_t i = 0; i < image.data.size(); ++i)
        if (mask.data[i]) vals.push_back(image.data[i]);
    if (vals.size() < 11) throw std::runtime_error("masked_deciles: fewer than 11 masked voxels");
    std::sort(vals.begin(), vals.end());
    std::array<double, 11> q{};
    for (int p = 0; p <= 10; ++p) q[p] = quantile_sorted(vals, p / 10.0);
    return q;
}

ScalarVolume normalize_deciles(const ScalarVolume& image, const BinaryMask& mask,
                               const std::array<double, 11>& target_deciles) {
    for (int p = 0; p < 10; ++p)
        if (!(target_deciles[p] < target_deciles[p + 1]))
            throw std::runtime_error("normalize_deciles: non-ascending target deciles");
    if (mask.dims != image.dims)
        throw std::runtime_error("normalize_deciles: mask grid mismatch");

    std::vector<double> vals;
    vals.reserve(mask.count_true());
    for (std::size_t i = 0; i < image.data.size(); ++i)
        if (mask.data[i]) vals.push_back(image.data[i]);
    if (vals.size() < 11)
        throw std::runtime_error("normalize_deciles: fewer than 11 masked voxels");
    std::sort(vals.begin(), vals.end());
    {
        std::size_t distinct = 1;
        for (std::size_t i = 1; i < vals.size(); ++i)
            if (vals[i] != vals[i - 1]) ++distinct;
        if (distinct < 11) throw std::runtime_error("normalize_deciles: degenerate histogram");
    }

    std::array<double, 11> q{};
    for (int p = 0; p <= 10; ++p) q[p] = quantile_sorted(vals, p / 10.0);

    auto remap = [&](double v) {
        // locate the knot interval; exact knot hits return the target as-is
        int seg = 0;
        for (int p = 10; p >= 0; --p) {
            if (v == q[p]) return target_deciles[p];
            if (v > q[p]) {
                seg = std::min(p, 9);
                break;
            }
        }
        const double width = q[seg + 1] - q[seg];
        if (width <= 0.0) return target_deciles[seg + 1];
        const double slope = (target_deciles[seg + 1] - target_deciles[seg]) / width;
        return target_deciles[seg] + (v - q[seg]) * slope;
    };

    ScalarVolume out(image.dims, image.voxel_mm, image.unit);
    for (std::size_t i = 0; i < image.data.size(); ++i) out.data[i] = remap(image.data[i]);
    return out;
}

ScalarVolume scale_to_range(const ScalarVolume& image, double lo, double hi) {
    if (!(lo < hi)) throw std::runtime_error("scale_to_range: need lo < hi");
    const auto [mn_it, mx_it] = std::minmax_element(image.data.begin(), image.data.end());
    const double mn = *mn_it, mx = *mx_it;
    if (!(mx > mn)) throw std::runtime_error("scale_to_range: constant image");
    ScalarVolume out(image.dims, image.voxel_mm, Unit::Dimensionless);
    const double s = (hi - lo) / (mx - mn);
    for (std::size_t i = 0; i < image.data.size(); ++i)
        out.data[i] = lo + (image.data[i] - mn) * s;
    return out;
}

ScalarVolume hybrid_image(const ScalarVolume& t1_norm, const ScalarVolume& qsm_ppb) {
    if (t1_norm.dims != qsm_ppb.dims)
        throw std::runtime_error("hybrid_image: dimension mismatch");
    ScalarVolume out(t1_norm.dims, t1_norm.voxel_mm, Unit::Dimensionless);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = t1_norm.data[i] - 0.8 * qsm_ppb.data[i];
    return out;
}

AtlasBundle aggregate(const std::vector<ScalarVolume>& maps, const BinaryMask& mask) {
    if (maps.size() < 2) throw std::runtime_error("aggregate: need at least 2 maps");
    for (const auto& m : maps)
        if (!m.same_grid(maps[0])) throw std::runtime_error("aggregate: map grid mismatch");
    if (mask.dims != maps[0].dims) throw std::runtime_error("aggregate: mask grid mismatch");

    const std::size_t nvox = maps[0].data.size();
    const double n = static_cast<double>(maps.size());
    AtlasBundle out;
    out.mean = ScalarVolume(maps[0].dims, maps[0].voxel_mm, maps[0].unit);
    out.per_voxel_sd = ScalarVolume(maps[0].dims, maps[0].voxel_mm, maps[0].unit);
    out.rsd = ScalarVolume(maps[0].dims, maps[0].voxel_mm, Unit::Dimensionless);
    out.rsd_defined = BinaryMask(maps[0].dims);
    out.n_subjects = static_cast<int>(maps.size());

    for (std::size_t i = 0; i < nvox; ++i) {
        if (!mask.data[i]) continue;
        double s = 0.0;
        for (const auto& m : maps) s += m.data[i];
        const double mean = s / n;
        double ss = 0.0;
        for (const auto& m : maps) {
            const double d = m.data[i] - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / (n - 1.0));
        out.mean.data[i] = mean;
        out.per_voxel_sd.data[i] = sd;
        if (std::abs(mean) >= 1e-6) {
            out.rsd.data[i] = sd / std::abs(mean) * 100.0;
            out.rsd_defined.data[i] = 1;
        }
    }
    return out;
}

}  // namespace chisep
