// fft.hpp - double-precision real 3D FFT wrapper (FFTW) plus the k-space
// kernels used across the pipeline.
//
// Layout convention: spatial grids are x-fastest (index = x + nx*(y+ny*z)),
// matching ScalarVolume. Spectra use the r2c half grid with kx in
// [0, nx/2], stored kx-fastest: index = kx + (nx/2+1)*(ky + ny*kz).
// Frequencies are in cycles/mm derived from the voxel size. Plans use
// FFTW_ESTIMATE so plan selection (and hence round-off) is reproducible
// run to run.
#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "chisep/types.hpp"

namespace chisep {

class Fft3d {
public:
    explicit Fft3d(const Dims& dims);
    ~Fft3d();
    Fft3d(const Fft3d&) = delete;
    Fft3d& operator=(const Fft3d&) = delete;

    const Dims& dims() const { return dims_; }
    std::size_t real_size() const;
    std::size_t spec_size() const;  // (nx/2+1)*ny*nz

    // out-of-place transforms on caller buffers of real_size()/spec_size()
    void forward(const double* in, std::complex<double>* out) const;
    // normalized inverse (c2r scaled by 1/N); clobbers `in`
    void inverse(std::complex<double>* in, double* out) const;

private:
    struct Impl;
    Dims dims_;
    std::unique_ptr<Impl> impl_;
};

// Signed frequency (cycles/mm) for index i on an n-point axis with spacing
// voxel_mm.
double fft_freq(int i, int n, double voxel_mm);

// -(2*pi)^2 |k|^2 on the half grid; the k=0 entry is the symbol value 0.
std::vector<double> laplacian_spectrum(const Dims& dims, const Vec3& voxel_mm);

// Normalized spherical-mean kernel of the given radius, rasterized on the
// grid (wrapped around the origin), transformed to the half grid. The
// kernel is even so its spectrum is real.
std::vector<double> smv_spectrum(const Fft3d& fft, const Vec3& voxel_mm, double radius_mm);

// Smallest even dims >= dims[a] + 2*extra_voxels[a].
Dims padded_dims(const Dims& dims, const Dims& extra_voxels);
// dims scaled by an integral factor (even by construction for factor 2).
Dims scaled_dims(const Dims& dims, int factor);

}  // namespace chisep
