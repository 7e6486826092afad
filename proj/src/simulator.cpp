#include "chisep/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "chisep/dipole.hpp"
#include "chisep/fft.hpp"

namespace chisep {

using nlohmann::json;

void PhantomSpec::validate() const {
    if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2)
        throw std::runtime_error("PhantomSpec: dims must be >= 2 per axis");
    for (double v : voxel_size_mm)
        if (!(v > 0.0)) throw std::runtime_error("PhantomSpec: voxel size must be > 0");
    if (!(s0 > 0.0)) throw std::runtime_error("PhantomSpec: s0 must be > 0");
    if (r2_baseline_per_s < 0.0) throw std::runtime_error("PhantomSpec: negative r2 baseline");
    if (!(dr_para > 0.0) || !(dr_dia > 0.0))
        throw std::runtime_error("PhantomSpec: relaxometric constants must be > 0");
    if (noise_sigma < 0.0) throw std::runtime_error("PhantomSpec: negative noise sigma");
    if (mask_margin_mm < 0.0) throw std::runtime_error("PhantomSpec: negative mask margin");
    for (const auto& s : shapes) {
        if (s.chi_para_ppb < 0.0)
            throw std::runtime_error("PhantomSpec: shape chi_para must be >= 0");
        if (s.chi_dia_ppb > 0.0)
            throw std::runtime_error("PhantomSpec: shape chi_dia must be <= 0");
        if (s.geometry == PhantomShape::Geometry::Sphere && !(s.radius_mm > 0.0))
            throw std::runtime_error("PhantomSpec: sphere radius must be > 0");
        if (s.geometry == PhantomShape::Geometry::Box)
            for (double h : s.half_size_mm)
                if (!(h > 0.0)) throw std::runtime_error("PhantomSpec: box half size must be > 0");
    }
    if (te_s.size() < 2) throw std::runtime_error("PhantomSpec: need at least 2 echo times");
    for (std::size_t i = 0; i + 1 < te_s.size(); ++i)
        if (!(te_s[i] < te_s[i + 1]))
            throw std::runtime_error("PhantomSpec: echo times must be strictly ascending");
    if (!(te_s.front() > 0.0)) throw std::runtime_error("PhantomSpec: echo times must be > 0");
    if (!(tr_s > te_s.back())) throw std::runtime_error("PhantomSpec: TR must exceed last TE");
    if (!(b0_tesla > 0.0)) throw std::runtime_error("PhantomSpec: field strength must be > 0");
}

namespace {

Vec3 read_vec3(const json& j, const char* key) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        throw std::runtime_error(std::string("phantom spec: '") + key + "' must have 3 entries");
    return Vec3{a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

}  // namespace

PhantomSpec load_phantom_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open phantom spec: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("phantom spec " + path + ": " + e.what());
    }

    PhantomSpec spec;
    const auto& jd = j.at("dims");
    if (!jd.is_array() || jd.size() != 3)
        throw std::runtime_error("phantom spec: 'dims' must have 3 entries");
    spec.dims = Dims{jd[0].get<int>(), jd[1].get<int>(), jd[2].get<int>()};
    spec.voxel_size_mm = read_vec3(j, "voxel_size_mm");
    spec.s0 = j.value("s0", spec.s0);
    spec.r2_baseline_per_s = j.value("r2_baseline_per_s", spec.r2_baseline_per_s);
    spec.dr_para = j.value("dr_para", spec.dr_para);
    spec.dr_dia = j.value("dr_dia", spec.dr_dia);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.seed = j.value("seed", spec.seed);
    spec.mask_margin_mm = j.value("mask_margin_mm", spec.mask_margin_mm);
    spec.tr_s = j.value("tr_ms", spec.tr_s * 1e3) * 1e-3;
    spec.b0_tesla = j.value("b0_tesla", spec.b0_tesla);
    if (j.contains("te_ms")) {
        spec.te_s.clear();
        for (const auto& t : j.at("te_ms")) spec.te_s.push_back(t.get<double>() * 1e-3);
    }

    for (const auto& js : j.value("shapes", json::array())) {
        PhantomShape s;
        const std::string g = js.at("geometry").get<std::string>();
        if (g == "sphere") {
            s.geometry = PhantomShape::Geometry::Sphere;
            s.radius_mm = js.at("radius_mm").get<double>();
        } else if (g == "box") {
            s.geometry = PhantomShape::Geometry::Box;
            s.half_size_mm = read_vec3(js, "half_size_mm");
        } else {
            throw std::runtime_error("phantom spec: unknown geometry '" + g + "'");
        }
        s.center_mm = read_vec3(js, "center_mm");
        s.chi_para_ppb = js.value("chi_para_ppb", 0.0);
        s.chi_dia_ppb = js.value("chi_dia_ppb", 0.0);
        spec.shapes.push_back(s);
    }

    if (j.contains("background")) {
        const auto& jb = j.at("background");
        const std::string kind = jb.value("kind", "none");
        if (kind == "none") {
            spec.background.kind = BackgroundSpec::Kind::None;
        } else if (kind == "external_dipole") {
            spec.background.kind = BackgroundSpec::Kind::ExternalDipole;
            spec.background.position_mm = read_vec3(jb, "position_mm");
            spec.background.moment = jb.at("moment").get<double>();
        } else if (kind == "polynomial") {
            spec.background.kind = BackgroundSpec::Kind::Polynomial;
            for (const auto& c : jb.at("coeffs")) spec.background.coeffs.push_back(c.get<double>());
            if (spec.background.coeffs.size() > 10)
                throw std::runtime_error("phantom spec: at most 10 polynomial coefficients");
        } else {
            throw std::runtime_error("phantom spec: unknown background kind '" + kind + "'");
        }
    }

    spec.validate();
    return spec;
}

Phantom render_phantom(const PhantomSpec& spec) {
    spec.validate();
    Phantom ph;
    ph.chi_para = ScalarVolume(spec.dims, spec.voxel_size_mm, Unit::Ppb);
    ph.chi_dia = ScalarVolume(spec.dims, spec.voxel_size_mm, Unit::Ppb);
    ph.mask = BinaryMask(spec.dims);

    const Dims& d = spec.dims;
    const Vec3& vox = spec.voxel_size_mm;
    for (const auto& s : spec.shapes) {
        Vec3 lo, hi;  // bounding box in mm
        for (int a = 0; a < 3; ++a) {
            const double ext = s.geometry == PhantomShape::Geometry::Sphere ? s.radius_mm
                                                                            : s.half_size_mm[a];
            lo[a] = s.center_mm[a] - ext;
            hi[a] = s.center_mm[a] + ext;
            if (lo[a] < -1e-9 || hi[a] > (d[a] - 1) * vox[a] + 1e-9)
                throw std::runtime_error("render_phantom: shape out of bounds");
        }
        int ilo[3], ihi[3];
        for (int a = 0; a < 3; ++a) {
            ilo[a] = std::max(0, static_cast<int>(std::floor(lo[a] / vox[a])));
            ihi[a] = std::min(d[a] - 1, static_cast<int>(std::ceil(hi[a] / vox[a])));
        }
        for (int z = ilo[2]; z <= ihi[2]; ++z)
            for (int y = ilo[1]; y <= ihi[1]; ++y)
                for (int x = ilo[0]; x <= ihi[0]; ++x) {
                    const double px = x * vox[0] - s.center_mm[0];
                    const double py = y * vox[1] - s.center_mm[1];
                    const double pz = z * vox[2] - s.center_mm[2];
                    bool inside;
                    if (s.geometry == PhantomShape::Geometry::Sphere) {
                        inside = px * px + py * py + pz * pz <= s.radius_mm * s.radius_mm;
                    } else {
                        inside = std::abs(px) <= s.half_size_mm[0] &&
                                 std::abs(py) <= s.half_size_mm[1] &&
                                 std::abs(pz) <= s.half_size_mm[2];
                    }
                    if (inside) {  // last writer wins
                        ph.chi_para.at(x, y, z) = s.chi_para_ppb;
                        ph.chi_dia.at(x, y, z) = s.chi_dia_ppb;
                    }
                }
    }

    if (spec.shapes.empty()) return ph;  // all-zero maps, empty mask

    // Bounding ellipsoid of the occupied voxels, expanded by the margin.
    int lo[3] = {d[0], d[1], d[2]}, hi[3] = {-1, -1, -1};
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x)
                if (ph.chi_para.at(x, y, z) != 0.0 || ph.chi_dia.at(x, y, z) != 0.0) {
                    lo[0] = std::min(lo[0], x);
                    lo[1] = std::min(lo[1], y);
                    lo[2] = std::min(lo[2], z);
                    hi[0] = std::max(hi[0], x);
                    hi[1] = std::max(hi[1], y);
                    hi[2] = std::max(hi[2], z);
                }
    if (hi[0] < 0) return ph;  // shapes rasterized to nothing

    double cen[3], semi[3];
    for (int a = 0; a < 3; ++a) {
        cen[a] = 0.5 * (lo[a] + hi[a]) * vox[a];
        semi[a] = 0.5 * (hi[a] - lo[a]) * vox[a] + spec.mask_margin_mm;
    }
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                const double ux = (x * vox[0] - cen[0]) / semi[0];
                const double uy = (y * vox[1] - cen[1]) / semi[1];
                const double uz = (z * vox[2] - cen[2]) / semi[2];
                if (ux * ux + uy * uy + uz * uz <= 1.0) ph.mask.set(x, y, z, true);
            }
    return ph;
}

namespace {

ScalarVolume background_field(const PhantomSpec& spec) {
    ScalarVolume bg(spec.dims, spec.voxel_size_mm, Unit::Hz);
    const Dims& d = spec.dims;
    const Vec3& vox = spec.voxel_size_mm;
    switch (spec.background.kind) {
        case BackgroundSpec::Kind::None:
            break;
        case BackgroundSpec::Kind::ExternalDipole: {
            const Vec3& p = spec.background.position_mm;
            for (int z = 0; z < d[2]; ++z)
                for (int y = 0; y < d[1]; ++y)
                    for (int x = 0; x < d[0]; ++x) {
                        const double dx = x * vox[0] - p[0];
                        const double dy = y * vox[1] - p[1];
                        const double dz = z * vox[2] - p[2];
                        const double r = std::max(std::sqrt(dx * dx + dy * dy + dz * dz), 1e-9);
                        const double c2 = (dz / r) * (dz / r);
                        bg.at(x, y, z) = spec.background.moment * (3.0 * c2 - 1.0) / (r * r * r);
                    }
            break;
        }
        case BackgroundSpec::Kind::Polynomial: {
            const auto& c = spec.background.coeffs;
            double cen[3], ext[3];
            for (int a = 0; a < 3; ++a) {
                cen[a] = 0.5 * (d[a] - 1) * vox[a];
                ext[a] = std::max(cen[a], 1e-9);
            }
            for (int z = 0; z < d[2]; ++z)
                for (int y = 0; y < d[1]; ++y)
                    for (int x = 0; x < d[0]; ++x) {
                        const double u = (x * vox[0] - cen[0]) / ext[0];
                        const double v = (y * vox[1] - cen[1]) / ext[1];
                        const double w = (z * vox[2] - cen[2]) / ext[2];
                        const double terms[10] = {1.0, u, v, w, u * u, v * v, w * w,
                                                  u * v, u * w, v * w};
                        double val = 0.0;
                        for (std::size_t t = 0; t < c.size(); ++t) val += c[t] * terms[t];
                        bg.at(x, y, z) = val;
                    }
            break;
        }
    }
    return bg;
}

}  // namespace

MultiEchoGre simulate_gre(const ScalarVolume& chi_para, const ScalarVolume& chi_dia,
                          const PhantomSpec& spec, const std::vector<double>& te_s, double tr_s,
                          double b0_tesla) {
    if (!chi_para.same_grid(chi_dia)) throw std::runtime_error("simulate_gre: grid mismatch");
    if (te_s.size() < 2) throw std::runtime_error("simulate_gre: need at least 2 echoes");
    for (std::size_t i = 0; i + 1 < te_s.size(); ++i)
        if (!(te_s[i] < te_s[i + 1]))
            throw std::runtime_error("simulate_gre: echo times must be ascending");

    ScalarVolume chi_sum(chi_para.dims, chi_para.voxel_mm, Unit::Ppb);
    for (std::size_t i = 0; i < chi_sum.data.size(); ++i)
        chi_sum.data[i] = chi_para.data[i] + chi_dia.data[i];

    const DipoleKernel kernel =
        make_dipole_kernel(scaled_dims(chi_para.dims, 2), chi_para.voxel_mm, Vec3{0.0, 0.0, 1.0});
    ScalarVolume field = forward_field(chi_sum, kernel, b0_tesla);
    {
        const ScalarVolume bg = background_field(spec);
        for (std::size_t i = 0; i < field.data.size(); ++i) field.data[i] += bg.data[i];
    }

    const ScalarVolume r2p = forward_r2prime(chi_para, chi_dia, spec.dr_para, spec.dr_dia);

    MultiEchoGre gre;
    gre.te_s = te_s;
    gre.tr_s = tr_s;
    gre.b0_tesla = b0_tesla;
    gre.b0_dir = Vec3{0.0, 0.0, 1.0};

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double noise_sd = spec.noise_sigma * spec.s0;
    const std::size_t n = chi_sum.data.size();
    const double two_pi = 2.0 * M_PI;

    for (double te : te_s) {
        ScalarVolume mag(chi_para.dims, chi_para.voxel_mm, Unit::Dimensionless);
        ScalarVolume phs(chi_para.dims, chi_para.voxel_mm, Unit::Radians);
        for (std::size_t i = 0; i < n; ++i) {
            const double decay =
                spec.s0 * std::exp(-(spec.r2_baseline_per_s + r2p.data[i]) * te);
            double m = decay;
            if (noise_sd > 0.0) m += noise_sd * gauss(rng);
            mag.data[i] = std::max(m, 0.0);  // magnitudes cannot go negative
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double decay =
                spec.s0 * std::exp(-(spec.r2_baseline_per_s + r2p.data[i]) * te);
            double p = two_pi * field.data[i] * te;
            if (noise_sd > 0.0) p += (noise_sd / std::max(decay, 1e-12)) * gauss(rng);
            phs.data[i] = std::remainder(p, two_pi);
        }
        gre.magnitude.push_back(std::move(mag));
        gre.phase.push_back(std::move(phs));
    }
    gre.validate();
    return gre;
}

}  // namespace chisep
