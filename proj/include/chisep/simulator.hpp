// Digital phantom rendering and multi-echo GRE forward simulation — the
// independent data source the pipeline tests run against.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chisep/types.hpp"

namespace chisep {

struct PhantomShape {
    enum class Geometry { Sphere, Box };
    Geometry geometry = Geometry::Sphere;
    Vec3 center_mm{};
    double radius_mm = 0.0;  // sphere only
    Vec3 half_size_mm{};     // box only
    double chi_para_ppb = 0.0;  // >= 0
    double chi_dia_ppb = 0.0;   // <= 0
};

struct BackgroundSpec {
    enum class Kind { None, ExternalDipole, Polynomial };
    Kind kind = Kind::None;
    // external_dipole: point source (may sit outside every shape/mask);
    // field = moment * (3 cos^2(theta) - 1) / r^3, theta against +z, r in mm.
    Vec3 position_mm{};
    double moment = 0.0;  // Hz * mm^3
    // polynomial: coefficients over {1, x, y, z, x^2, y^2, z^2, xy, xz, yz}
    // in grid-centered coordinates normalized to [-1, 1]; value in Hz.
    std::vector<double> coeffs;
};

struct PhantomSpec {
    Dims dims{};
    Vec3 voxel_size_mm{1.0, 1.0, 1.0};
    std::vector<PhantomShape> shapes;
    double s0 = 100.0;
    double r2_baseline_per_s = 10.0;
    double dr_para = 100.0;  // (1/s)/ppm, used for the simulated R2* uplift
    double dr_dia = 100.0;
    BackgroundSpec background;
    double noise_sigma = 0.0;  // Gaussian noise SD as a fraction of s0
    std::uint64_t seed = 0;
    double mask_margin_mm = 8.0;  // bounding-ellipsoid margin around shapes
    // Acquisition defaults consumed by the CLI simulate stage.
    std::vector<double> te_s{5.25e-3, 11.08e-3, 16.91e-3, 22.74e-3, 28.57e-3};
    double tr_s = 33e-3;
    double b0_tesla = 3.0;

    void validate() const;
};

PhantomSpec load_phantom_spec(const std::string& path);

struct Phantom {
    ScalarVolume chi_para;  // ppb
    ScalarVolume chi_dia;   // ppb
    BinaryMask mask;        // bounding ellipsoid of the shape union + margin
};

// Rasterizes shapes at voxel centers (coordinate of voxel i is i * voxel);
// later shapes overwrite earlier ones where they overlap. Shapes must lie
// fully inside the grid.
Phantom render_phantom(const PhantomSpec& spec);

// Forward model: field from dipole convolution of chi_para + chi_dia (run on
// a 2x zero-padded grid) plus the configured background; R2* = r2_baseline +
// relaxometric uplift; per echo,
//   magnitude = s0 * exp(-R2* * TE) + N(0, noise_sigma * s0),
//   phase     = wrap(2*pi * field * TE + N(0, noise_sigma * s0 / signal)).
// B0 is along +z. Fixed seed gives bit-identical output across runs.
MultiEchoGre simulate_gre(const ScalarVolume& chi_para, const ScalarVolume& chi_dia,
                          const PhantomSpec& spec, const std::vector<double>& te_s, double tr_s,
                          double b0_tesla);

}  // namespace chisep
