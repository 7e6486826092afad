#include "chisep/dipole.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include "chisep/fft.hpp"

namespace chisep {

DipoleKernel make_dipole_kernel(const Dims& dims, const Vec3& voxel_mm, const Vec3& b0_dir) {
    const double norm =
        std::sqrt(b0_dir[0] * b0_dir[0] + b0_dir[1] * b0_dir[1] + b0_dir[2] * b0_dir[2]);
    if (!(norm > 0.0)) throw std::runtime_error("make_dipole_kernel: zero field direction");
    const Vec3 b{b0_dir[0] / norm, b0_dir[1] / norm, b0_dir[2] / norm};

    DipoleKernel k;
    k.dims = dims;
    k.voxel_mm = voxel_mm;
    k.b0_dir = b;
    const int hx = dims[0] / 2 + 1;
    k.spectrum.resize(static_cast<std::size_t>(hx) * dims[1] * dims[2]);

    std::size_t idx = 0;
    for (int kz = 0; kz < dims[2]; ++kz) {
        const double fz = fft_freq(kz, dims[2], voxel_mm[2]);
        for (int ky = 0; ky < dims[1]; ++ky) {
            const double fy = fft_freq(ky, dims[1], voxel_mm[1]);
            for (int kx = 0; kx < hx; ++kx, ++idx) {
                const double fx = fft_freq(kx, dims[0], voxel_mm[0]);
                const double k2 = fx * fx + fy * fy + fz * fz;
                if (k2 == 0.0) {
                    k.spectrum[idx] = 0.0;
                } else {
                    const double kb = fx * b[0] + fy * b[1] + fz * b[2];
                    k.spectrum[idx] = 1.0 / 3.0 - (kb * kb) / k2;
                }
            }
        }
    }
    return k;
}

ScalarVolume forward_field(const ScalarVolume& chi_ppb, const DipoleKernel& kernel,
                           double b0_tesla) {
    if (chi_ppb.unit != Unit::Ppb)
        throw std::runtime_error("forward_field: susceptibility input must be in ppb");
    if (!(b0_tesla > 0.0)) throw std::runtime_error("forward_field: field strength must be > 0");
    for (int a = 0; a < 3; ++a) {
        if (kernel.dims[a] < chi_ppb.dims[a])
            throw std::runtime_error("forward_field: kernel grid smaller than volume");
        if (std::abs(kernel.voxel_mm[a] - chi_ppb.voxel_mm[a]) > 1e-9)
            throw std::runtime_error("forward_field: kernel voxel size mismatch");
    }

    Fft3d fft(kernel.dims);
    std::vector<double> padded(fft.real_size(), 0.0);
    const Dims& d = chi_ppb.dims;
    const Dims& kd = kernel.dims;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y) {
            const std::size_t src = static_cast<std::size_t>(d[0]) * (y + static_cast<std::size_t>(d[1]) * z);
            const std::size_t dst = static_cast<std::size_t>(kd[0]) * (y + static_cast<std::size_t>(kd[1]) * z);
            for (int x = 0; x < d[0]; ++x) padded[dst + x] = chi_ppb.data[src + x];
        }

    std::vector<std::complex<double>> spec(fft.spec_size());
    fft.forward(padded.data(), spec.data());
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= kernel.spectrum[i];
    fft.inverse(spec.data(), padded.data());

    ScalarVolume out(chi_ppb.dims, chi_ppb.voxel_mm, Unit::Hz);
    const double scale = kGammaBarHzPerTesla * b0_tesla * 1e-9;  // ppb -> dimensionless
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y) {
            const std::size_t src = static_cast<std::size_t>(kd[0]) * (y + static_cast<std::size_t>(kd[1]) * z);
            const std::size_t dst = static_cast<std::size_t>(d[0]) * (y + static_cast<std::size_t>(d[1]) * z);
            for (int x = 0; x < d[0]; ++x) out.data[dst + x] = scale * padded[src + x];
        }
    return out;
}

ScalarVolume forward_r2prime(const ScalarVolume& chi_para_ppb, const ScalarVolume& chi_dia_ppb,
                             double dr_para, double dr_dia) {
    if (!chi_para_ppb.same_grid(chi_dia_ppb))
        throw std::runtime_error("forward_r2prime: component grids differ");
    if (chi_para_ppb.unit != Unit::Ppb || chi_dia_ppb.unit != Unit::Ppb)
        throw std::runtime_error("forward_r2prime: components must be in ppb");
    if (!(dr_para > 0.0) || !(dr_dia > 0.0))
        throw std::runtime_error("forward_r2prime: relaxometric constants must be > 0");

    ScalarVolume out(chi_para_ppb.dims, chi_para_ppb.voxel_mm, Unit::PerSecond);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double p = chi_para_ppb.data[i];
        const double n = chi_dia_ppb.data[i];
        if (p < 0.0) throw std::runtime_error("forward_r2prime: negative paramagnetic value");
        if (n > 0.0) throw std::runtime_error("forward_r2prime: positive diamagnetic value");
        out.data[i] = dr_para * 1e-3 * p + dr_dia * 1e-3 * (-n);
    }
    return out;
}

}  // namespace chisep
