#include "chisep/types.hpp"

#include <cmath>
#include <stdexcept>

namespace chisep {

const char* unit_name(Unit u) {
    switch (u) {
        case Unit::Hz: return "Hz";
        case Unit::Ppb: return "ppb";
        case Unit::PerSecond: return "per_second";
        case Unit::Radians: return "radians";
        case Unit::Dimensionless: return "dimensionless";
    }
    return "dimensionless";
}

Unit unit_from_name(const std::string& name) {
    if (name == "Hz" || name == "hz") return Unit::Hz;
    if (name == "ppb") return Unit::Ppb;
    if (name == "per_second" || name == "1/s" || name == "s^-1") return Unit::PerSecond;
    if (name == "radians" || name == "rad") return Unit::Radians;
    if (name == "dimensionless" || name.empty()) return Unit::Dimensionless;
    throw std::runtime_error("unknown unit name: '" + name + "'");
}

std::size_t grid_size(const Dims& d) {
    return static_cast<std::size_t>(d[0]) * static_cast<std::size_t>(d[1]) *
           static_cast<std::size_t>(d[2]);
}

static void check_dims_positive(const Dims& d, const char* what) {
    if (d[0] <= 0 || d[1] <= 0 || d[2] <= 0)
        throw std::runtime_error(std::string(what) + ": dims must be positive");
}

ScalarVolume::ScalarVolume(const Dims& d, const Vec3& vox, Unit u, double fill)
    : dims(d), voxel_mm(vox), unit(u) {
    check_dims_positive(d, "ScalarVolume");
    if (vox[0] <= 0.0 || vox[1] <= 0.0 || vox[2] <= 0.0)
        throw std::runtime_error("ScalarVolume: voxel size must be positive");
    data.assign(grid_size(d), fill);
}

bool ScalarVolume::same_grid(const ScalarVolume& other) const {
    if (dims != other.dims) return false;
    for (int a = 0; a < 3; ++a)
        if (std::abs(voxel_mm[a] - other.voxel_mm[a]) > 1e-9 * voxel_mm[a]) return false;
    return true;
}

void ScalarVolume::require_finite(const std::string& what) const {
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i]))
            throw std::runtime_error(what + ": non-finite value at linear index " +
                                     std::to_string(i));
    }
}

BinaryMask::BinaryMask(const Dims& d, bool fill) : dims(d) {
    check_dims_positive(d, "BinaryMask");
    data.assign(grid_size(d), fill ? 1 : 0);
}

std::size_t BinaryMask::count_true() const {
    std::size_t n = 0;
    for (auto v : data) n += (v != 0);
    return n;
}

void MultiEchoGre::validate() const {
    const int n = n_echoes();
    if (n < 2) throw std::runtime_error("MultiEchoGre: need at least 2 echoes");
    for (int i = 1; i < n; ++i)
        if (!(te_s[i] > te_s[i - 1]))
            throw std::runtime_error("MultiEchoGre: te_s must be strictly increasing");
    if (!(te_s[0] > 0.0)) throw std::runtime_error("MultiEchoGre: te_s must be positive");
    if (!(te_s.back() < tr_s))
        throw std::runtime_error("MultiEchoGre: last TE must be below TR");
    if (!(b0_tesla > 0.0)) throw std::runtime_error("MultiEchoGre: b0_tesla must be positive");
    const double bn = std::sqrt(b0_dir[0] * b0_dir[0] + b0_dir[1] * b0_dir[1] +
                                b0_dir[2] * b0_dir[2]);
    if (std::abs(bn - 1.0) > 1e-6)
        throw std::runtime_error("MultiEchoGre: b0_dir must be a unit vector");
    if (static_cast<int>(magnitude.size()) != n || static_cast<int>(phase.size()) != n)
        throw std::runtime_error("MultiEchoGre: echo volume count mismatch");
    for (int i = 0; i < n; ++i) {
        if (!magnitude[i].same_grid(magnitude[0]) || !phase[i].same_grid(magnitude[0]))
            throw std::runtime_error("MultiEchoGre: all echo volumes must share the grid");
        // [-pi, pi] with headroom for float32 round-off from on-disk storage
        // (the nearest float above pi is ~3.14159274).
        constexpr double lim = 3.14159265358979 + 1e-6;
        for (double p : phase[i].data) {
            if (!(p >= -lim && p <= lim))
                throw std::runtime_error("MultiEchoGre: phase outside [-pi, pi]");
        }
    }
}

LabelVolume::LabelVolume(const Dims& d) : dims(d) {
    check_dims_positive(d, "LabelVolume");
    data.assign(grid_size(d), 0);
}

void LabelVolume::validate() const {
    if (data.size() != grid_size(dims))
        throw std::runtime_error("LabelVolume: data length does not match dims");
    for (auto v : data) {
        if (v < 0) throw std::runtime_error("LabelVolume: negative label value");
        if (v != 0 && names.find(v) == names.end())
            throw std::runtime_error("LabelVolume: label " + std::to_string(v) +
                                     " missing from the name table");
    }
}

void FieldMap::validate() const {
    if (volume.dims != mask.dims)
        throw std::runtime_error("FieldMap: volume/mask dims mismatch");
    const std::size_t n = volume.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (mask.data[i]) {
            if (!std::isfinite(volume.data[i]))
                throw std::runtime_error("FieldMap: non-finite value inside mask");
        } else if (volume.data[i] != 0.0) {
            throw std::runtime_error("FieldMap: nonzero value outside mask");
        }
    }
}

}  // namespace chisep
