#include "chisep/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace chisep {

struct Fft3d::Impl {
    fftw_plan fwd{nullptr};
    fftw_plan inv{nullptr};
    double* rbuf{nullptr};
    fftw_complex* cbuf{nullptr};
};

Fft3d::Fft3d(const Dims& dims) : dims_(dims), impl_(new Impl) {
    if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2)
        throw std::runtime_error("Fft3d: dims must be >= 2 per axis");
    impl_->rbuf = fftw_alloc_real(real_size());
    impl_->cbuf = fftw_alloc_complex(spec_size());
    if (!impl_->rbuf || !impl_->cbuf) throw std::runtime_error("Fft3d: allocation failed");
    // x is our fastest axis; FFTW is row-major, so pass (nz, ny, nx).
    impl_->fwd = fftw_plan_dft_r2c_3d(dims[2], dims[1], dims[0], impl_->rbuf, impl_->cbuf,
                                      FFTW_ESTIMATE);
    impl_->inv = fftw_plan_dft_c2r_3d(dims[2], dims[1], dims[0], impl_->cbuf, impl_->rbuf,
                                      FFTW_ESTIMATE);
    if (!impl_->fwd || !impl_->inv) throw std::runtime_error("Fft3d: planning failed");
}

Fft3d::~Fft3d() {
    if (impl_) {
        if (impl_->fwd) fftw_destroy_plan(impl_->fwd);
        if (impl_->inv) fftw_destroy_plan(impl_->inv);
        if (impl_->rbuf) fftw_free(impl_->rbuf);
        if (impl_->cbuf) fftw_free(impl_->cbuf);
    }
}

std::size_t Fft3d::real_size() const { return grid_size(dims_); }

std::size_t Fft3d::spec_size() const {
    return static_cast<std::size_t>(dims_[0] / 2 + 1) * dims_[1] * dims_[2];
}

void Fft3d::forward(const double* in, std::complex<double>* out) const {
    std::memcpy(impl_->rbuf, in, real_size() * sizeof(double));
    fftw_execute_dft_r2c(impl_->fwd, impl_->rbuf, reinterpret_cast<fftw_complex*>(out));
}

void Fft3d::inverse(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(impl_->inv, reinterpret_cast<fftw_complex*>(in), out);
    const double scale = 1.0 / static_cast<double>(real_size());
    const std::size_t n = real_size();
    for (std::size_t i = 0; i < n; ++i) out[i] *= scale;
}

double fft_freq(int i, int n, double voxel_mm) {
    const int s = (i <= n / 2) ? i : i - n;
    return static_cast<double>(s) / (static_cast<double>(n) * voxel_mm);
}

std::vector<double> laplacian_spectrum(const Dims& dims, const Vec3& voxel_mm) {
    const int hx = dims[0] / 2 + 1;
    std::vector<double> spec(static_cast<std::size_t>(hx) * dims[1] * dims[2]);
    const double c = -4.0 * M_PI * M_PI;
    std::size_t idx = 0;
    for (int kz = 0; kz < dims[2]; ++kz) {
        const double fz = fft_freq(kz, dims[2], voxel_mm[2]);
        for (int ky = 0; ky < dims[1]; ++ky) {
            const double fy = fft_freq(ky, dims[1], voxel_mm[1]);
            for (int kx = 0; kx < hx; ++kx, ++idx) {
                const double fx = fft_freq(kx, dims[0], voxel_mm[0]);
                spec[idx] = c * (fx * fx + fy * fy + fz * fz);
            }
        }
    }
    return spec;
}

std::vector<double> smv_spectrum(const Fft3d& fft, const Vec3& voxel_mm, double radius_mm) {
    const Dims& d = fft.dims();
    const int rx = static_cast<int>(std::ceil(radius_mm / voxel_mm[0]));
    const int ry = static_cast<int>(std::ceil(radius_mm / voxel_mm[1]));
    const int rz = static_cast<int>(std::ceil(radius_mm / voxel_mm[2]));
    if (2 * rx + 1 > d[0] || 2 * ry + 1 > d[1] || 2 * rz + 1 > d[2])
        throw std::runtime_error("smv_spectrum: kernel larger than grid");

    std::vector<double> ker(fft.real_size(), 0.0);
    const double r2 = radius_mm * radius_mm;
    double total = 0.0;
    for (int dz = -rz; dz <= rz; ++dz)
        for (int dy = -ry; dy <= ry; ++dy)
            for (int dx = -rx; dx <= rx; ++dx) {
                const double dd = dx * voxel_mm[0] * dx * voxel_mm[0] +
                                  dy * voxel_mm[1] * dy * voxel_mm[1] +
                                  dz * voxel_mm[2] * dz * voxel_mm[2];
                if (dd <= r2 + 1e-12) {
                    const int x = (dx % d[0] + d[0]) % d[0];
                    const int y = (dy % d[1] + d[1]) % d[1];
                    const int z = (dz % d[2] + d[2]) % d[2];
                    ker[static_cast<std::size_t>(x) +
                        static_cast<std::size_t>(d[0]) *
                            (y + static_cast<std::size_t>(d[1]) * z)] = 1.0;
                    total += 1.0;
                }
            }
    for (auto& v : ker) v /= total;

    std::vector<std::complex<double>> spec(fft.spec_size());
    fft.forward(ker.data(), spec.data());
    std::vector<double> out(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) out[i] = spec[i].real();
    return out;
}

Dims padded_dims(const Dims& dims, const Dims& extra_voxels) {
    Dims out{};
    for (int a = 0; a < 3; ++a) {
        int n = dims[a] + 2 * extra_voxels[a];
        if (n % 2 != 0) ++n;
        out[a] = n;
    }
    return out;
}

Dims scaled_dims(const Dims& dims, int factor) {
    return Dims{dims[0] * factor, dims[1] * factor, dims[2] * factor};
}

}  // namespace chisep
