#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "chisep/mask_ops.hpp"
#include "chisep/types.hpp"
#include "chisep/volume_io.hpp"

using namespace chisep;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    const fs::path p = "tmp_volume_core";
    fs::create_directories(p);
    return p;
}

// Minimal NIfTI-1 writer driven by byte offsets, independent of the
// library's own serializer, for exercising the loader against foreign files.
struct RawNifti {
    std::vector<char> header = std::vector<char>(348, 0);
    std::vector<char> payload;

    template <typename T>
    void put(std::size_t off, T v) {
        std::memcpy(header.data() + off, &v, sizeof(T));
    }
    void set_dims(std::int16_t nx, std::int16_t ny, std::int16_t nz) {
        put<std::int16_t>(40, 3);
        put<std::int16_t>(42, nx);
        put<std::int16_t>(44, ny);
        put<std::int16_t>(46, nz);
    }
    void base(std::int16_t datatype, std::int16_t bitpix) {
        put<std::int32_t>(0, 348);
        put<std::int16_t>(70, datatype);
        put<std::int16_t>(72, bitpix);
        put<float>(80, 1.0f);
        put<float>(84, 1.0f);
        put<float>(88, 1.0f);
    }
    void magic(const char* m) { std::memcpy(header.data() + 344, m, 4); }

    void write_single(const fs::path& p) const {
        std::ofstream out(p, std::ios::binary);
        out.write(header.data(), 348);
        const char ext[4] = {0, 0, 0, 0};
        out.write(ext, 4);
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    }
    void write_pair(const fs::path& hdr, const fs::path& img) const {
        std::ofstream oh(hdr, std::ios::binary);
        oh.write(header.data(), 348);
        std::ofstream oi(img, std::ios::binary);
        oi.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    }
};

template <typename T>
void append(std::vector<char>& v, T x) {
    const char* p = reinterpret_cast<const char*>(&x);
    v.insert(v.end(), p, p + sizeof(T));
}

template <typename T>
T bswap(T v) {
    char* p = reinterpret_cast<char*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
    return v;
}

}  // namespace

TEST_CASE("scalar volume layout is x-fastest") {
    ScalarVolume v({3, 4, 5}, {1.0, 1.0, 1.0}, Unit::Ppb);
    CHECK(v.size() == 60);
    v.at(1, 2, 3) = 42.0;
    CHECK(v.data[1 + 3 * (2 + 4 * 3)] == 42.0);
    CHECK(v.index(2, 3, 4) == v.size() - 1);
}

TEST_CASE("volume constructor rejects degenerate grids") {
    CHECK_THROWS_AS(ScalarVolume({0, 4, 4}, {1, 1, 1}, Unit::Hz), std::runtime_error);
    CHECK_THROWS_AS(ScalarVolume({4, 4, 4}, {1, 0, 1}, Unit::Hz), std::runtime_error);
}

TEST_CASE("unit names round-trip and unknown names are rejected") {
    for (Unit u : {Unit::Hz, Unit::Ppb, Unit::PerSecond, Unit::Radians, Unit::Dimensionless})
        CHECK(unit_from_name(unit_name(u)) == u);
    CHECK(unit_from_name("1/s") == Unit::PerSecond);
    CHECK(unit_from_name("rad") == Unit::Radians);
    CHECK_THROWS_AS(unit_from_name("furlongs"), std::runtime_error);
}

TEST_CASE("require_finite names the offender") {
    ScalarVolume v({2, 2, 2}, {1, 1, 1}, Unit::Hz);
    v.data[5] = std::nan("");
    CHECK_THROWS_WITH_AS(v.require_finite("field"),
                         doctest::Contains("field"), std::runtime_error);
}

TEST_CASE("same_grid tolerates tiny voxel differences only") {
    ScalarVolume a({4, 4, 4}, {1.0, 1.0, 1.0}, Unit::Hz);
    ScalarVolume b({4, 4, 4}, {1.0 + 1e-12, 1.0, 1.0}, Unit::Ppb);  // unit is not grid
    ScalarVolume c({4, 4, 4}, {1.1, 1.0, 1.0}, Unit::Hz);
    CHECK(a.same_grid(b));
    CHECK_FALSE(a.same_grid(c));
}

TEST_CASE("nifti round-trip preserves grid, unit, and float32 values") {
    const fs::path p = work_dir() / "rt.nii";
    ScalarVolume v({5, 4, 3}, {0.8, 1.0, 1.2}, Unit::PerSecond);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(-100.0, 100.0);
    for (auto& x : v.data) x = uni(rng);

    save_volume(v, p.string());
    const ScalarVolume r = load_volume(p.string());
    CHECK(r.dims == v.dims);
    CHECK(r.unit == Unit::PerSecond);
    CHECK(r.voxel_mm[0] == doctest::Approx(0.8));
    CHECK(r.voxel_mm[2] == doctest::Approx(1.2));
    for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(r.data[i] == static_cast<double>(static_cast<float>(v.data[i])));
}

TEST_CASE("raw float32 + sidecar round-trip") {
    const fs::path p = work_dir() / "rt.f32";
    ScalarVolume v({4, 4, 4}, {1.5, 1.5, 2.0}, Unit::Hz);
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = static_cast<double>(i) * 0.25;

    save_volume(v, p.string());
    const ScalarVolume r = load_volume(p.string());
    CHECK(r.dims == v.dims);
    CHECK(r.unit == Unit::Hz);
    CHECK(r.voxel_mm[2] == 2.0);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(r.data[i] == v.data[i]);  // exact in f32
}

TEST_CASE("raw volume without its sidecar is an error") {
    const fs::path p = work_dir() / "lonely.f32";
    {
        std::ofstream out(p, std::ios::binary);
        const float z = 0.0f;
        out.write(reinterpret_cast<const char*>(&z), 4);
    }
    fs::remove(work_dir() / "lonely.json");
    CHECK_THROWS_AS(load_volume(p.string()), std::runtime_error);
}

TEST_CASE("unknown extensions and missing files are rejected") {
    CHECK_THROWS_AS(load_volume((work_dir() / "absent.nii").string()), std::runtime_error);
    ScalarVolume v({2, 2, 2}, {1, 1, 1}, Unit::Hz);
    CHECK_THROWS_AS(save_volume(v, (work_dir() / "out.dcm").string()), std::runtime_error);
}

TEST_CASE("foreign int16 nifti honors scl_slope and scl_inter") {
    // values 0.5*raw + 100, raw = -5..6  [hand-computed oracle]
    RawNifti n;
    n.base(4, 16);  // DT_INT16
    n.set_dims(3, 2, 2);
    n.put<float>(108, 352.0f);  // vox_offset
    n.put<float>(112, 0.5f);    // scl_slope
    n.put<float>(116, 100.0f);  // scl_inter
    n.magic("n+1");
    for (std::int16_t i = -5; i <= 6; ++i) append(n.payload, i);
    const fs::path p = work_dir() / "int16.nii";
    n.write_single(p);

    const ScalarVolume v = load_volume(p.string());
    CHECK(v.dims == Dims{3, 2, 2});
    for (int i = 0; i < 12; ++i) CHECK(v.data[i] == doctest::Approx(0.5 * (i - 5) + 100.0));
}

TEST_CASE("hdr/img pair loads through the .hdr entry point") {
    RawNifti n;
    n.base(16, 32);  // DT_FLOAT32
    n.set_dims(2, 2, 2);
    n.magic("ni1");
    for (int i = 0; i < 8; ++i) append(n.payload, static_cast<float>(i * 3));
    n.write_pair(work_dir() / "pair.hdr", work_dir() / "pair.img");

    const ScalarVolume v = load_volume((work_dir() / "pair.hdr").string());
    CHECK(v.dims == Dims{2, 2, 2});
    for (int i = 0; i < 8; ++i) CHECK(v.data[i] == i * 3.0);
}

TEST_CASE("byte-swapped nifti is detected via sizeof_hdr") {
    RawNifti n;
    n.put<std::int32_t>(0, bswap<std::int32_t>(348));
    n.put<std::int16_t>(40, bswap<std::int16_t>(3));
    n.put<std::int16_t>(42, bswap<std::int16_t>(2));
    n.put<std::int16_t>(44, bswap<std::int16_t>(2));
    n.put<std::int16_t>(46, bswap<std::int16_t>(1));
    n.put<std::int16_t>(70, bswap<std::int16_t>(4));   // DT_INT16
    n.put<std::int16_t>(72, bswap<std::int16_t>(16));
    n.put<float>(80, bswap(1.0f));
    n.put<float>(84, bswap(1.0f));
    n.put<float>(88, bswap(1.0f));
    n.put<float>(108, bswap(352.0f));
    n.magic("n+1");
    for (std::int16_t i = 0; i < 4; ++i) append(n.payload, bswap<std::int16_t>(i));
    const fs::path p = work_dir() / "swapped.nii";
    n.write_single(p);

    const ScalarVolume v = load_volume(p.string());
    CHECK(v.dims == Dims{2, 2, 1});
    for (int i = 0; i < 4; ++i) CHECK(v.data[i] == static_cast<double>(i));
}

TEST_CASE("malformed nifti headers are rejected with clear errors") {
    RawNifti good;
    good.base(16, 32);
    good.set_dims(2, 2, 2);
    good.put<float>(108, 352.0f);
    good.magic("n+1");
    for (int i = 0; i < 8; ++i) append(good.payload, 0.0f);

    RawNifti bad_magic = good;
    bad_magic.magic("xyz");
    bad_magic.write_single(work_dir() / "bad_magic.nii");
    CHECK_THROWS_WITH_AS(load_volume((work_dir() / "bad_magic.nii").string()),
                         doctest::Contains("magic"), std::runtime_error);

    RawNifti bad_dim = good;
    bad_dim.put<std::int16_t>(40, 4);  // 4D
    bad_dim.write_single(work_dir() / "bad_dim.nii");
    CHECK_THROWS_AS(load_volume((work_dir() / "bad_dim.nii").string()), std::runtime_error);

    RawNifti truncated = good;
    truncated.payload.resize(8);  // 2 of 8 floats
    truncated.write_single(work_dir() / "trunc.nii");
    CHECK_THROWS_WITH_AS(load_volume((work_dir() / "trunc.nii").string()),
                         doctest::Contains("shorter"), std::runtime_error);
}

TEST_CASE("foreign intent names fall back to dimensionless") {
    RawNifti n;
    n.base(16, 32);
    n.set_dims(2, 2, 1);
    n.put<float>(108, 352.0f);
    const char intent[16] = "FSL_something";
    std::memcpy(n.header.data() + 328, intent, 16);
    n.magic("n+1");
    for (int i = 0; i < 4; ++i) append(n.payload, 1.0f);
    n.write_single(work_dir() / "foreign.nii");
    CHECK(load_volume((work_dir() / "foreign.nii").string()).unit == Unit::Dimensionless);
}

TEST_CASE("mask save/load binarizes on nonzero") {
    BinaryMask m({4, 3, 2});
    m.set(0, 0, 0, true);
    m.set(3, 2, 1, true);
    const fs::path p = work_dir() / "mask.nii";
    save_mask(m, p.string(), {1, 1, 1});
    const BinaryMask r = load_mask(p.string());
    CHECK(r.dims == m.dims);
    CHECK(r.count_true() == 2);
    CHECK(r.at(0, 0, 0));
    CHECK(r.at(3, 2, 1));
    CHECK_FALSE(r.at(1, 1, 1));
}

TEST_CASE("labels round-trip with a name table and default names without one") {
    LabelVolume lab({3, 3, 3});
    lab.data[0] = 2;
    lab.data[13] = 7;
    lab.names = {{2, "caudate"}, {7, "putamen"}};
    const fs::path vol = work_dir() / "labels.nii";
    const fs::path names = work_dir() / "labels_names.json";
    save_labels(lab, vol.string(), {1, 1, 1}, names.string());

    const LabelVolume with = load_labels(vol.string(), names.string());
    CHECK(with.at(0, 0, 0) == 2);
    CHECK(with.names.at(2) == "caudate");
    CHECK(with.names.at(7) == "putamen");

    const LabelVolume without = load_labels(vol.string());
    CHECK(without.names.at(2) == "label_2");
    CHECK(without.names.at(7) == "label_7");
}

TEST_CASE("label volumes reject negative ids and unnamed labels") {
    ScalarVolume v({2, 2, 2}, {1, 1, 1}, Unit::Dimensionless);
    v.data[3] = -2.0;
    const fs::path p = work_dir() / "neg_label.nii";
    save_volume(v, p.string());
    CHECK_THROWS_WITH_AS(load_labels(p.string()), doctest::Contains("negative"),
                         std::runtime_error);

    LabelVolume lab({2, 2, 2});
    lab.data[0] = 5;  // no name entry
    CHECK_THROWS_AS(lab.validate(), std::runtime_error);
}

TEST_CASE("gre manifest round-trips echoes next to the manifest") {
    const fs::path dir = work_dir() / "gre";
    fs::create_directories(dir);
    MultiEchoGre g;
    g.te_s = {5e-3, 10e-3};
    g.tr_s = 30e-3;
    g.b0_tesla = 3.0;
    g.b0_dir = {0.0, 0.0, 1.0};
    for (int e = 0; e < 2; ++e) {
        ScalarVolume m({3, 3, 3}, {1, 1, 1}, Unit::Dimensionless);
        ScalarVolume p({3, 3, 3}, {1, 1, 1}, Unit::Radians);
        for (std::size_t i = 0; i < m.size(); ++i) {
            m.data[i] = 10.0 + e + static_cast<double>(i);
            p.data[i] = 0.1 * e;
        }
        g.magnitude.push_back(m);
        g.phase.push_back(p);
    }
    const fs::path man = dir / "gre.json";
    save_gre(g, man.string());
    CHECK(fs::exists(dir / "mag_e1.nii"));
    CHECK(fs::exists(dir / "phase_e2.nii"));

    const MultiEchoGre r = load_gre(man.string());
    CHECK(r.n_echoes() == 2);
    CHECK(r.te_s[1] == 10e-3);
    CHECK(r.b0_tesla == 3.0);
    CHECK(r.magnitude[1].data[4] == doctest::Approx(15.0));
}

TEST_CASE("phase at +-pi survives the float32 round trip") {
    // float32 rounds pi up to ~3.14159274; the validator must keep accepting
    // reloaded phases.
    const fs::path dir = work_dir() / "gre_pi";
    fs::create_directories(dir);
    MultiEchoGre g;
    g.te_s = {5e-3, 10e-3};
    g.tr_s = 30e-3;
    g.b0_tesla = 3.0;
    g.b0_dir = {0.0, 0.0, 1.0};
    for (int e = 0; e < 2; ++e) {
        ScalarVolume m({2, 2, 2}, {1, 1, 1}, Unit::Dimensionless, 1.0);
        ScalarVolume p({2, 2, 2}, {1, 1, 1}, Unit::Radians);
        p.data[0] = 3.14159265358979;
        p.data[1] = -3.14159265358979;
        g.magnitude.push_back(m);
        g.phase.push_back(p);
    }
    const fs::path man = dir / "gre.json";
    save_gre(g, man.string());
    CHECK_NOTHROW(load_gre(man.string()));
}

TEST_CASE("gre validation rejects broken acquisitions") {
    MultiEchoGre g;
    g.te_s = {10e-3, 5e-3};  // descending
    g.tr_s = 30e-3;
    g.b0_tesla = 3.0;
    g.b0_dir = {0.0, 0.0, 1.0};
    for (int e = 0; e < 2; ++e) {
        g.magnitude.emplace_back(Dims{2, 2, 2}, Vec3{1, 1, 1}, Unit::Dimensionless);
        g.phase.emplace_back(Dims{2, 2, 2}, Vec3{1, 1, 1}, Unit::Radians);
    }
    CHECK_THROWS_AS(g.validate(), std::runtime_error);
    g.te_s = {5e-3, 10e-3};
    CHECK_NOTHROW(g.validate());
    g.b0_dir = {0.0, 0.0, 2.0};  // not unit length
    CHECK_THROWS_AS(g.validate(), std::runtime_error);
    g.b0_dir = {0.0, 0.0, 1.0};
    g.tr_s = 8e-3;  // below last TE
    CHECK_THROWS_AS(g.validate(), std::runtime_error);
}

TEST_CASE("distance transform matches brute force on anisotropic grids") {
    const Dims d{8, 7, 6};
    const Vec3 vox{1.0, 1.5, 2.0};
    std::mt19937_64 rng(3);
    BinaryMask m(d);
    for (auto& b : m.data) b = (rng() % 3) != 0;  // ~2/3 true
    m.data[0] = 0;                                // at least one false voxel

    const std::vector<double> dt = distance_sq_to_false(m, vox);

    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                double best = 1e300;
                for (int k = 0; k < d[2]; ++k)
                    for (int j = 0; j < d[1]; ++j)
                        for (int i = 0; i < d[0]; ++i) {
                            if (m.at(i, j, k)) continue;
                            const double dx = (i - x) * vox[0];
                            const double dy = (j - y) * vox[1];
                            const double dz = (k - z) * vox[2];
                            best = std::min(best, dx * dx + dy * dy + dz * dz);
                        }
                if (!m.at(x, y, z)) best = 0.0;
                const double got = dt[x + d[0] * (y + d[1] * z)];
                CHECK(got == doctest::Approx(best).epsilon(1e-12));
            }
}

TEST_CASE("eroding a 9-cube by 1 mm keeps the 343-voxel core") {
    // 9x9x9 solid cube inside an 11-cube grid; erosion by one voxel leaves
    // 7x7x7 = 343  [hand-counted oracle]
    BinaryMask m({11, 11, 11});
    for (int z = 1; z <= 9; ++z)
        for (int y = 1; y <= 9; ++y)
            for (int x = 1; x <= 9; ++x) m.set(x, y, z, true);
    const BinaryMask e = erode_mask(m, 1.0, {1.0, 1.0, 1.0});
    CHECK(e.count_true() == 343);
    CHECK(e.at(5, 5, 5));
    CHECK_FALSE(e.at(1, 1, 1));
}

TEST_CASE("zero-radius erosion is the identity") {
    std::mt19937_64 rng(8);
    BinaryMask m({6, 6, 6});
    for (auto& b : m.data) b = rng() % 2;
    const BinaryMask e = erode_mask(m, 0.0, {1.0, 1.0, 1.0});
    CHECK(e.data == m.data);
}

TEST_CASE("erosion matches its closed-ball definition on random masks") {
    const Dims d{9, 8, 7};
    const Vec3 vox{1.0, 1.2, 0.9};
    const double r = 1.8;
    std::mt19937_64 rng(21);
    BinaryMask m(d);
    for (auto& b : m.data) b = (rng() % 4) != 0;

    const BinaryMask e = erode_mask(m, r, vox);
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                bool keep = m.at(x, y, z);
                for (int k = 0; keep && k < d[2]; ++k)
                    for (int j = 0; keep && j < d[1]; ++j)
                        for (int i = 0; keep && i < d[0]; ++i) {
                            const double dx = (i - x) * vox[0];
                            const double dy = (j - y) * vox[1];
                            const double dz = (k - z) * vox[2];
                            if (dx * dx + dy * dy + dz * dz <= r * r && !m.at(i, j, k))
                                keep = false;
                        }
                CHECK(e.at(x, y, z) == keep);
            }
}
