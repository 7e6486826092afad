#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "chisep/chi_separation.hpp"
#include "chisep/dipole.hpp"
#include "chisep/fft.hpp"
#include "chisep/simulator.hpp"
#include "chisep/types.hpp"

using namespace chisep;

namespace {

std::size_t spec_index(const Dims& d, int kx, int ky, int kz) {
    const std::size_t hx = static_cast<std::size_t>(d[0] / 2 + 1);
    return kx + hx * (ky + static_cast<std::size_t>(d[1]) * kz);
}

ScalarVolume random_ppb(const Dims& d, std::uint64_t seed) {
    ScalarVolume v(d, {1, 1, 1}, Unit::Ppb);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (auto& x : v.data) x = uni(rng);
    return v;
}

}  // namespace

TEST_CASE("dipole spectrum hits its analytic extremes") {
    const Dims d{8, 8, 8};
    const DipoleKernel k = make_dipole_kernel(d, {1, 1, 1}, {0, 0, 1});
    // pure axial frequency: 1/3 - 1 = -2/3
    CHECK(k.spectrum[spec_index(d, 0, 0, 1)] == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
    // in-plane frequency: 1/3
    CHECK(k.spectrum[spec_index(d, 1, 0, 0)] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(k.spectrum[spec_index(d, 0, 3, 0)] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // magic angle: equal frequency on all axes of a cubic grid
    CHECK(std::abs(k.spectrum[spec_index(d, 1, 1, 1)]) < 1e-12);
    // mean shift excluded
    CHECK(k.spectrum[spec_index(d, 0, 0, 0)] == 0.0);
    for (double v : k.spectrum) {
        CHECK(v >= -2.0 / 3.0 - 1e-12);
        CHECK(v <= 1.0 / 3.0 + 1e-12);
    }
}

TEST_CASE("field direction is normalized and may be oblique") {
    const Dims d{8, 8, 8};
    const DipoleKernel ky = make_dipole_kernel(d, {1, 1, 1}, {0, 1, 0});
    CHECK(ky.spectrum[spec_index(d, 0, 1, 0)] == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
    CHECK(ky.spectrum[spec_index(d, 0, 0, 1)] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    const DipoleKernel unit = make_dipole_kernel(d, {1, 1, 1}, {0, 0, 1});
    const DipoleKernel long_axis = make_dipole_kernel(d, {1, 1, 1}, {0, 0, 5});
    CHECK(unit.spectrum == long_axis.spectrum);

    CHECK_THROWS_AS(make_dipole_kernel(d, {1, 1, 1}, {0, 0, 0}), std::runtime_error);
}

TEST_CASE("anisotropic voxels scale the frequency axes") {
    const Dims d{8, 8, 8};
    const DipoleKernel k = make_dipole_kernel(d, {1, 1, 2}, {0, 0, 1});
    // axis-aligned samples are voxel-size independent
    CHECK(k.spectrum[spec_index(d, 0, 0, 2)] == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
    CHECK(k.spectrum[spec_index(d, 2, 0, 0)] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // fx = 1/8, fz = 1/16: kz^2/k^2 = 1/5, so 1/3 - 1/5 = 2/15
    CHECK(k.spectrum[spec_index(d, 1, 0, 1)] == doctest::Approx(2.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("sphere field matches the closed-form dipole pattern") {
    const int n = 64;
    const double R = 8.0, chi = 50.0, b0 = 3.0;
    const double c = 32.0;
    const Dims d{n, n, n};
    ScalarVolume x(d, {1, 1, 1}, Unit::Ppb);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int xx = 0; xx < n; ++xx) {
                const double dx = xx - c, dy = y - c, dz = z - c;
                if (dx * dx + dy * dy + dz * dz <= R * R)
                    x.data[x.index(xx, y, z)] = chi;
            }

    const DipoleKernel ker = make_dipole_kernel(scaled_dims(d, 2), {1, 1, 1}, {0, 0, 1});
    const ScalarVolume f = forward_field(x, ker, b0);

    const double scale = kGammaBarHzPerTesla * b0 * 1e-9;
    double sse = 0.0, ref = 0.0, in_sum = 0.0;
    std::size_t in_cnt = 0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int xx = 0; xx < n; ++xx) {
                const double dx = xx - c, dy = y - c, dz = z - c;
                const double r2 = dx * dx + dy * dy + dz * dz;
                const double r = std::sqrt(r2);
                const double fv = f.data[f.index(xx, y, z)];
                if (r > R + 2.0 && r < 24.0) {
                    const double a =
                        scale * chi * (R * R * R / 3.0) * (3.0 * dz * dz / r2 - 1.0) / (r2 * r);
                    sse += (fv - a) * (fv - a);
                    ref += a * a;
                } else if (r < R - 2.0) {
                    in_sum += fv;
                    ++in_cnt;
                }
            }
    const double rel_rmse = std::sqrt(sse / ref);
    CHECK(rel_rmse < 0.03);
    // Lorentz-corrected interior: zero shift, up to discretization leakage
    const double peak_ext = scale * chi * 2.0 / 3.0;
    CHECK(std::abs(in_sum / static_cast<double>(in_cnt)) < 0.02 * peak_ext);
}

TEST_CASE("field operator is self-adjoint") {
    const Dims d{16, 16, 16};
    const DipoleKernel ker = make_dipole_kernel(scaled_dims(d, 2), {1, 1, 1}, {0, 0, 1});
    const ScalarVolume a = random_ppb(d, 11);
    const ScalarVolume b = random_ppb(d, 12);
    const ScalarVolume fa = forward_field(a, ker, 3.0);
    const ScalarVolume fb = forward_field(b, ker, 3.0);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        lhs += fa.data[i] * b.data[i];
        rhs += a.data[i] * fb.data[i];
    }
    CHECK(std::abs(lhs - rhs) <= 1e-10 * (std::abs(lhs) + 1.0));
}

TEST_CASE("field operator is linear and annihilates zero") {
    const Dims d{12, 10, 14};
    const DipoleKernel ker = make_dipole_kernel(scaled_dims(d, 2), {1, 1, 1}, {0, 0, 1});

    const ScalarVolume zero(d, {1, 1, 1}, Unit::Ppb);
    const ScalarVolume fz = forward_field(zero, ker, 3.0);
    for (double v : fz.data) CHECK(v == 0.0);

    const ScalarVolume a = random_ppb(d, 21);
    const ScalarVolume b = random_ppb(d, 22);
    ScalarVolume combo(d, {1, 1, 1}, Unit::Ppb);
    for (std::size_t i = 0; i < combo.data.size(); ++i)
        combo.data[i] = 2.0 * a.data[i] - 3.0 * b.data[i];
    const ScalarVolume fc = forward_field(combo, ker, 3.0);
    const ScalarVolume fa = forward_field(a, ker, 3.0);
    const ScalarVolume fb = forward_field(b, ker, 3.0);
    double max_dev = 0.0, max_mag = 0.0;
    for (std::size_t i = 0; i < fc.data.size(); ++i) {
        max_dev = std::max(max_dev, std::abs(fc.data[i] - (2.0 * fa.data[i] - 3.0 * fb.data[i])));
        max_mag = std::max(max_mag, std::abs(fc.data[i]));
    }
    CHECK(max_dev <= 1e-10 * (max_mag + 1.0));
}

TEST_CASE("field output is mean-free on the convolution grid") {
    const Dims d{16, 16, 16};
    const DipoleKernel ker = make_dipole_kernel(d, {1, 1, 1}, {0, 0, 1});  // no padding
    ScalarVolume x = random_ppb(d, 31);
    for (auto& v : x.data) v = 50.0 * (v + 1.0);  // strictly positive load
    const ScalarVolume f = forward_field(x, ker, 3.0);
    double sum = 0.0;
    for (double v : f.data) sum += v;
    CHECK(std::abs(sum) < 1e-7);
}

TEST_CASE("field and kernel argument validation") {
    const Dims d{8, 8, 8};
    const DipoleKernel ker = make_dipole_kernel(d, {1, 1, 1}, {0, 0, 1});
    ScalarVolume wrong_unit(d, {1, 1, 1}, Unit::Hz);
    CHECK_THROWS_WITH_AS(forward_field(wrong_unit, ker, 3.0), doctest::Contains("ppb"),
                         std::runtime_error);
    ScalarVolume ok(d, {1, 1, 1}, Unit::Ppb);
    CHECK_THROWS_AS(forward_field(ok, ker, 0.0), std::runtime_error);
    ScalarVolume big({9, 8, 8}, {1, 1, 1}, Unit::Ppb);
    CHECK_THROWS_WITH_AS(forward_field(big, ker, 3.0), doctest::Contains("smaller"),
                         std::runtime_error);
    ScalarVolume coarse(d, {2, 1, 1}, Unit::Ppb);
    CHECK_THROWS_WITH_AS(forward_field(coarse, ker, 3.0), doctest::Contains("voxel"),
                         std::runtime_error);
}

TEST_CASE("reversible rate combines the components linearly") {
    const Dims d{3, 1, 1};
    ScalarVolume cp(d, {1, 1, 1}, Unit::Ppb);
    ScalarVolume cd(d, {1, 1, 1}, Unit::Ppb);
    cp.data = {0.0, 10.0, 1000.0};
    cd.data = {0.0, -20.0, -40.0};
    const ScalarVolume r2p = forward_r2prime(cp, cd, 150.0, 50.0);
    CHECK(r2p.unit == Unit::PerSecond);
    CHECK(r2p.data[0] == 0.0);
    CHECK(r2p.data[1] == doctest::Approx(1.5 + 1.0).epsilon(1e-12));
    CHECK(r2p.data[2] == doctest::Approx(150.0 + 2.0).epsilon(1e-12));
}

TEST_CASE("reversible rate rejects sign violations and bad grids") {
    const Dims d{2, 2, 2};
    ScalarVolume cp(d, {1, 1, 1}, Unit::Ppb, 1.0);
    ScalarVolume cd(d, {1, 1, 1}, Unit::Ppb, -1.0);
    CHECK_NOTHROW(forward_r2prime(cp, cd, 100.0, 100.0));

    ScalarVolume bad_p = cp;
    bad_p.data[3] = -0.5;
    CHECK_THROWS_WITH_AS(forward_r2prime(bad_p, cd, 100.0, 100.0),
                         doctest::Contains("paramagnetic"), std::runtime_error);
    ScalarVolume bad_d = cd;
    bad_d.data[5] = 0.5;
    CHECK_THROWS_WITH_AS(forward_r2prime(cp, bad_d, 100.0, 100.0),
                         doctest::Contains("diamagnetic"), std::runtime_error);
    ScalarVolume other({3, 2, 2}, {1, 1, 1}, Unit::Ppb);
    CHECK_THROWS_AS(forward_r2prime(cp, other, 100.0, 100.0), std::runtime_error);
    CHECK_THROWS_AS(forward_r2prime(cp, cd, 0.0, 100.0), std::runtime_error);
    ScalarVolume hz(d, {1, 1, 1}, Unit::Hz, 1.0);
    CHECK_THROWS_AS(forward_r2prime(hz, cd, 100.0, 100.0), std::runtime_error);
}

TEST_CASE("solver config validation") {
    SolverConfig good;
    CHECK_NOTHROW(good.validate());
    SolverConfig c = good;
    c.dr_para = 0.0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("relaxometric"), std::runtime_error);
    c = good;
    c.lambda_grad = -1e-9;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("negative"), std::runtime_error);
    c = good;
    c.max_iter = 0;
    CHECK_THROWS_AS(c.validate(), std::runtime_error);
    c = good;
    c.tol = 0.0;
    CHECK_THROWS_AS(c.validate(), std::runtime_error);
    c = good;
    c.step_safety = 1.5;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("step_safety"), std::runtime_error);
}

namespace {

struct SmallCase {
    Phantom ph;
    FieldMap field;
    ScalarVolume r2p;
    DipoleKernel ker;
};

// Noiseless two-component phantom pushed through the forward models.
SmallCase make_small_case() {
    PhantomSpec spec;
    spec.dims = {32, 32, 32};
    spec.voxel_size_mm = {1, 1, 1};
    spec.mask_margin_mm = 4.0;
    PhantomShape sph;
    sph.geometry = PhantomShape::Geometry::Sphere;
    sph.center_mm = {10, 16, 16};
    sph.radius_mm = 5;
    sph.chi_para_ppb = 80;
    PhantomShape box;
    box.geometry = PhantomShape::Geometry::Box;
    box.center_mm = {22, 16, 16};
    box.half_size_mm = {4, 4, 4};
    box.chi_dia_ppb = -30;
    spec.shapes = {sph, box};

    SmallCase sc;
    sc.ph = render_phantom(spec);
    sc.ker = make_dipole_kernel(scaled_dims(spec.dims, 2), spec.voxel_size_mm, {0, 0, 1});
    ScalarVolume total = sc.ph.chi_para;
    for (std::size_t i = 0; i < total.data.size(); ++i) total.data[i] += sc.ph.chi_dia.data[i];
    ScalarVolume f = forward_field(total, sc.ker, 3.0);
    for (std::size_t i = 0; i < f.data.size(); ++i)
        if (!sc.ph.mask.data[i]) f.data[i] = 0.0;
    sc.field.volume = std::move(f);
    sc.field.mask = sc.ph.mask;
    sc.r2p = forward_r2prime(sc.ph.chi_para, sc.ph.chi_dia, 100.0, 100.0);
    return sc;
}

}  // namespace

TEST_CASE("separation recovers a two-component phantom") {
    const SmallCase sc = make_small_case();
    SolverConfig cfg;
    const ChiSeparationResult res = separate(sc.field, sc.r2p, sc.ph.mask, sc.ker, 3.0, cfg);

    CHECK(res.converged);
    CHECK(res.iterations >= 1);
    CHECK(res.iterations <= cfg.max_iter);
    CHECK(std::isfinite(res.final_objective));
    CHECK(res.final_objective >= 0.0);

    // sign constraints hold exactly, not just approximately
    for (double v : res.chi_para.data) CHECK(v >= 0.0);
    for (double v : res.chi_dia.data) CHECK(v <= 0.0);
    // the combined map is the literal sum
    for (std::size_t i = 0; i < res.qsm.data.size(); ++i)
        CHECK(res.qsm.data[i] == res.chi_para.data[i] + res.chi_dia.data[i]);
    // nothing leaks outside the mask
    for (std::size_t i = 0; i < res.qsm.data.size(); ++i)
        if (!sc.ph.mask.data[i]) {
            CHECK(res.chi_para.data[i] == 0.0);
            CHECK(res.chi_dia.data[i] == 0.0);
        }

    double sp = 0.0, bd = 0.0, sp_d = 0.0, bd_p = 0.0;
    std::size_t nsp = 0, nbd = 0;
    for (std::size_t i = 0; i < res.qsm.data.size(); ++i) {
        if (sc.ph.chi_para.data[i] == 80.0) {
            sp += res.chi_para.data[i];
            sp_d += res.chi_dia.data[i];
            ++nsp;
        }
        if (sc.ph.chi_dia.data[i] == -30.0) {
            bd += res.chi_dia.data[i];
            bd_p += res.chi_para.data[i];
            ++nbd;
        }
    }
    sp /= nsp;
    bd /= nbd;
    sp_d /= nsp;
    bd_p /= nbd;
    CHECK(sp > 60.0);
    CHECK(sp < 96.0);
    CHECK(bd < -22.0);
    CHECK(bd > -36.0);
    // the wrong-sign component stays small inside single-source regions
    CHECK(std::abs(sp_d) < 8.0);
    CHECK(std::abs(bd_p) < 8.0);
}

TEST_CASE("separation is deterministic") {
    const SmallCase sc = make_small_case();
    SolverConfig cfg;
    const ChiSeparationResult a = separate(sc.field, sc.r2p, sc.ph.mask, sc.ker, 3.0, cfg);
    const ChiSeparationResult b = separate(sc.field, sc.r2p, sc.ph.mask, sc.ker, 3.0, cfg);
    CHECK(a.iterations == b.iterations);
    CHECK(a.chi_para.data == b.chi_para.data);
    CHECK(a.chi_dia.data == b.chi_dia.data);
    CHECK(a.final_objective == b.final_objective);
}

TEST_CASE("separation validates its inputs") {
    const Dims d{8, 8, 8};
    FieldMap field;
    field.volume = ScalarVolume(d, {1, 1, 1}, Unit::Hz);
    field.mask = BinaryMask(d, true);
    field.volume.data[10] = 1.0;
    ScalarVolume r2p(d, {1, 1, 1}, Unit::PerSecond, 0.5);
    BinaryMask mask(d, true);
    const DipoleKernel ker = make_dipole_kernel(d, {1, 1, 1}, {0, 0, 1});
    SolverConfig cfg;
    cfg.max_iter = 2;

    CHECK_NOTHROW(separate(field, r2p, mask, ker, 3.0, cfg));

    ScalarVolume r2p_bad_grid({9, 8, 8}, {1, 1, 1}, Unit::PerSecond, 0.5);
    CHECK_THROWS_WITH_AS(separate(field, r2p_bad_grid, mask, ker, 3.0, cfg),
                         doctest::Contains("r2prime"), std::runtime_error);
    ScalarVolume r2p_bad_unit(d, {1, 1, 1}, Unit::Hz, 0.5);
    CHECK_THROWS_WITH_AS(separate(field, r2p_bad_unit, mask, ker, 3.0, cfg),
                         doctest::Contains("rate"), std::runtime_error);
    BinaryMask bad_mask({8, 9, 8}, true);
    CHECK_THROWS_AS(separate(field, r2p, bad_mask, ker, 3.0, cfg), std::runtime_error);
    const DipoleKernel small_ker = make_dipole_kernel({4, 8, 8}, {1, 1, 1}, {0, 0, 1});
    CHECK_THROWS_WITH_AS(separate(field, r2p, mask, small_ker, 3.0, cfg),
                         doctest::Contains("kernel"), std::runtime_error);
    CHECK_THROWS_AS(separate(field, r2p, mask, ker, -3.0, cfg), std::runtime_error);
    SolverConfig bad_cfg;
    bad_cfg.tol = -1.0;
    CHECK_THROWS_AS(separate(field, r2p, mask, ker, 3.0, bad_cfg), std::runtime_error);

    // an all-false mask is rejected before any work happens
    FieldMap empty_field;
    empty_field.volume = ScalarVolume(d, {1, 1, 1}, Unit::Hz);
    empty_field.mask = BinaryMask(d, false);
    CHECK_THROWS_WITH_AS(separate(empty_field, r2p, BinaryMask(d, false), ker, 3.0, cfg),
                         doctest::Contains("empty"), std::runtime_error);
}
