#include "chisep/mask_ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace chisep {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared-distance transform (Felzenszwalb & Huttenlocher): out[p] =
// min_q (f[q] + w2*(p-q)^2) with w2 the squared sample spacing. Sites with
// f == inf carry no parabola.
void dt1d(const double* f, double* out, int n, double w2, int* v, double* z) {
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double s;
        while (true) {
            const int p = v[k];
            s = ((f[q] + w2 * q * q) - (f[p] + w2 * p * p)) / (2.0 * w2 * (q - p));
            if (s <= z[k]) {
                --k;
                if (k < 0) break;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = (k == 0) ? -kInf : s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        for (int p = 0; p < n; ++p) out[p] = kInf;
        return;
    }
    int j = 0;
    for (int p = 0; p < n; ++p) {
        while (z[j + 1] < p) ++j;
        const int q = v[j];
        out[p] = f[q] + w2 * (p - q) * (p - q);
    }
}

}  // namespace

std::vector<double> distance_sq_to_false(const BinaryMask& mask, const Vec3& voxel_mm) {
    const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
    const std::size_t n = grid_size(mask.dims);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = mask.data[i] ? kInf : 0.0;

    const int nmax = std::max({nx, ny, nz});
    std::vector<double> f(nmax), out(nmax), z(nmax + 1);
    std::vector<int> v(nmax);

    // x lines
    for (int zz = 0; zz < nz; ++zz)
        for (int y = 0; y < ny; ++y) {
            const std::size_t base = static_cast<std::size_t>(nx) * (y + static_cast<std::size_t>(ny) * zz);
            for (int x = 0; x < nx; ++x) f[x] = d[base + x];
            dt1d(f.data(), out.data(), nx, voxel_mm[0] * voxel_mm[0], v.data(), z.data());
            for (int x = 0; x < nx; ++x) d[base + x] = out[x];
        }
    // y lines
    for (int zz = 0; zz < nz; ++zz)
        for (int x = 0; x < nx; ++x) {
            const std::size_t base = x + static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * zz;
            for (int y = 0; y < ny; ++y) f[y] = d[base + static_cast<std::size_t>(nx) * y];
            dt1d(f.data(), out.data(), ny, voxel_mm[1] * voxel_mm[1], v.data(), z.data());
            for (int y = 0; y < ny; ++y) d[base + static_cast<std::size_t>(nx) * y] = out[y];
        }
    // z lines
    const std::size_t stride_z = static_cast<std::size_t>(nx) * ny;
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            const std::size_t base = x + static_cast<std::size_t>(nx) * y;
            for (int zz = 0; zz < nz; ++zz) f[zz] = d[base + stride_z * zz];
            dt1d(f.data(), out.data(), nz, voxel_mm[2] * voxel_mm[2], v.data(), z.data());
            for (int zz = 0; zz < nz; ++zz) d[base + stride_z * zz] = out[zz];
        }

    for (auto& x : d)
        if (x == kInf) x = std::numeric_limits<double>::max();
    return d;
}

BinaryMask erode_mask(const BinaryMask& mask, double radius_mm, const Vec3& voxel_mm) {
    if (radius_mm < 0.0) throw std::runtime_error("erode_mask: negative radius");
    if (radius_mm == 0.0) return mask;
    const std::vector<double> d2 = distance_sq_to_false(mask, voxel_mm);
    BinaryMask out(mask.dims);
    const double r2 = radius_mm * radius_mm;
    for (std::size_t i = 0; i < d2.size(); ++i) out.data[i] = d2[i] > r2 ? 1 : 0;
    return out;
}

}  // namespace chisep
