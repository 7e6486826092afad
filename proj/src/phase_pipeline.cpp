#include "chisep/phase_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include "chisep/fft.hpp"
#include "chisep/mask_ops.hpp"

namespace chisep {

namespace {

// Even (mirror) extension of each axis to twice its length. The periodic
// image of the extended volume is continuous, which keeps FFT-based
// differential operators honest near the boundary.
std::vector<double> mirror_extend(const ScalarVolume& v, const Dims& md) {
    std::vector<double> out(grid_size(md));
    const Dims& d = v.dims;
    for (int z = 0; z < md[2]; ++z) {
        const int sz = z < d[2] ? z : 2 * d[2] - 1 - z;
        for (int y = 0; y < md[1]; ++y) {
            const int sy = y < d[1] ? y : 2 * d[1] - 1 - y;
            for (int x = 0; x < md[0]; ++x) {
                const int sx = x < d[0] ? x : 2 * d[0] - 1 - x;
                out[static_cast<std::size_t>(x) +
                    static_cast<std::size_t>(md[0]) * (y + static_cast<std::size_t>(md[1]) * z)] =
                    v.at(sx, sy, sz);
            }
        }
    }
    return out;
}

void apply_spectrum(const Fft3d& fft, const std::vector<double>& sym, std::vector<double>& buf,
                    std::vector<std::complex<double>>& spec) {
    fft.forward(buf.data(), spec.data());
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= sym[i];
    fft.inverse(spec.data(), buf.data());
}

}  // namespace

ScalarVolume laplacian_unwrap(const ScalarVolume& phase) {
    if (phase.unit != Unit::Radians)
        throw std::runtime_error("laplacian_unwrap: input must be in radians");
    for (int a = 0; a < 3; ++a)
        if (phase.dims[a] < 8) throw std::runtime_error("laplacian_unwrap: dims must be >= 8");
    phase.require_finite("laplacian_unwrap input");

    const Dims md = scaled_dims(phase.dims, 2);
    Fft3d fft(md);
    const std::vector<double> lap = laplacian_spectrum(md, phase.voxel_mm);
    std::vector<double> invlap(lap.size());
    for (std::size_t i = 0; i < lap.size(); ++i) invlap[i] = lap[i] != 0.0 ? 1.0 / lap[i] : 0.0;

    ScalarVolume tmp = phase;  // reuse grid metadata for mirroring
    std::vector<double> sn(grid_size(md)), cs(grid_size(md));
    {
        for (auto& v : tmp.data) v = std::sin(v);
        sn = mirror_extend(tmp, md);
        tmp = phase;
        for (auto& v : tmp.data) v = std::cos(v);
        cs = mirror_extend(tmp, md);
    }

    std::vector<std::complex<double>> spec(fft.spec_size());
    std::vector<double> lap_sn = sn;
    apply_spectrum(fft, lap, lap_sn, spec);
    std::vector<double> lap_cs = cs;
    apply_spectrum(fft, lap, lap_cs, spec);

    std::vector<double>& rhs = lap_sn;
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = cs[i] * lap_sn[i] - sn[i] * lap_cs[i];
    apply_spectrum(fft, invlap, rhs, spec);

    ScalarVolume out(phase.dims, phase.voxel_mm, Unit::Radians);
    const Dims& d = phase.dims;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x)
                out.at(x, y, z) = rhs[static_cast<std::size_t>(x) +
                                      static_cast<std::size_t>(md[0]) *
                                          (y + static_cast<std::size_t>(md[1]) * z)];
    return out;
}

FieldMap combine_echoes(const MultiEchoGre& gre, const std::vector<ScalarVolume>& unwrapped) {
    gre.validate();
    if (unwrapped.size() != gre.te_s.size())
        throw std::runtime_error("combine_echoes: echo count mismatch");
    for (const auto& u : unwrapped)
        if (!u.same_grid(gre.magnitude[0]))
            throw std::runtime_error("combine_echoes: unwrapped echo grid mismatch");

    FieldMap fm;
    fm.volume = ScalarVolume(gre.magnitude[0].dims, gre.magnitude[0].voxel_mm, Unit::Hz);
    fm.mask = BinaryMask(fm.volume.dims);
    const std::size_t n = fm.volume.data.size();
    const double two_pi = 2.0 * M_PI;
    for (std::size_t i = 0; i < n; ++i) {
        double wsum = 0.0, fsum = 0.0;
        for (std::size_t e = 0; e < gre.te_s.size(); ++e) {
            const double w = gre.magnitude[e].data[i] * gre.te_s[e];
            const double w2 = w * w;
            wsum += w2;
            fsum += w2 * unwrapped[e].data[i] / (two_pi * gre.te_s[e]);
        }
        if (wsum > 0.0) {
            fm.volume.data[i] = fsum / wsum;
            fm.mask.data[i] = 1;
        }
    }
    fm.validate();
    return fm;
}

FieldMap vsharp(const FieldMap& field, const BinaryMask& mask, double r_max_mm, double r_min_mm,
                double tsvd_threshold) {
    field.validate();
    const ScalarVolume& f = field.volume;
    if (mask.dims != f.dims) throw std::runtime_error("vsharp: mask grid mismatch");
    const double min_voxel = std::min({f.voxel_mm[0], f.voxel_mm[1], f.voxel_mm[2]});
    if (!(r_max_mm >= r_min_mm) || !(r_min_mm >= min_voxel))
        throw std::runtime_error("vsharp: need r_max >= r_min >= one voxel");
    if (!(tsvd_threshold > 0.0 && tsvd_threshold < 1.0))
        throw std::runtime_error("vsharp: tsvd threshold must be in (0,1)");

    std::vector<double> radii;
    for (double r = r_max_mm; r > r_min_mm + 1e-9; r -= 1.0) radii.push_back(r);
    radii.push_back(r_min_mm);

    const BinaryMask out_mask = erode_mask(mask, r_min_mm, f.voxel_mm);
    if (out_mask.count_true() == 0)
        throw std::runtime_error("vsharp: mask too small for r_min (empty output mask)");

    // Largest fitting radius per voxel from a single distance transform.
    const std::vector<double> d2 = distance_sq_to_false(mask, f.voxel_mm);

    const Dims pad{static_cast<int>(std::ceil(r_max_mm / f.voxel_mm[0])),
                   static_cast<int>(std::ceil(r_max_mm / f.voxel_mm[1])),
                   static_cast<int>(std::ceil(r_max_mm / f.voxel_mm[2]))};
    const Dims pd = padded_dims(f.dims, pad);
    Fft3d fft(pd);

    const Dims& d = f.dims;
    auto pidx = [&](int x, int y, int z) {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(pd[0]) * (y + static_cast<std::size_t>(pd[1]) * z);
    };

    std::vector<double> fp(fft.real_size(), 0.0);
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) fp[pidx(x, y, z)] = f.at(x, y, z);

    std::vector<std::complex<double>> fspec(fft.spec_size());
    fft.forward(fp.data(), fspec.data());

    std::vector<double> composite(fft.real_size(), 0.0);
    std::vector<double> hr(fft.real_size());
    std::vector<std::complex<double>> spec(fft.spec_size());
    std::vector<double> smv_rmax;
    for (std::size_t ri = 0; ri < radii.size(); ++ri) {
        const double r = radii[ri];
        const std::vector<double> smv = smv_spectrum(fft, f.voxel_mm, r);
        if (ri == 0) smv_rmax = smv;
        for (std::size_t i = 0; i < spec.size(); ++i) spec[i] = fspec[i] * (1.0 - smv[i]);
        fft.inverse(spec.data(), hr.data());
        const double r2 = r * r;
        const double r2_next = ri == 0 ? std::numeric_limits<double>::max()
                                       : radii[ri - 1] * radii[ri - 1];
        for (int z = 0; z < d[2]; ++z)
            for (int y = 0; y < d[1]; ++y)
                for (int x = 0; x < d[0]; ++x) {
                    const double dd = d2[f.index(x, y, z)];
                    if (dd > r2 && !(dd > r2_next)) composite[pidx(x, y, z)] = hr[pidx(x, y, z)];
                }
    }

    fft.forward(composite.data(), spec.data());
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const double g = 1.0 - smv_rmax[i];
        spec[i] = std::abs(g) > tsvd_threshold ? spec[i] / g : 0.0;
    }
    fft.inverse(spec.data(), hr.data());

    FieldMap out;
    out.volume = ScalarVolume(f.dims, f.voxel_mm, Unit::Hz);
    out.mask = out_mask;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x)
                if (out_mask.at(x, y, z)) out.volume.at(x, y, z) = hr[pidx(x, y, z)];
    out.validate();
    return out;
}

}  // namespace chisep
