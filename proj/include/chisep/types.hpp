// types.hpp - volumetric containers and unit bookkeeping shared by all pipeline stages.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace chisep {

// Physical unit carried by a ScalarVolume. Conversions between units are
// explicit in the operations that perform them (e.g. the dipole forward
// model converts ppb -> Hz through f0 * 1e-9).
enum class Unit { Hz, Ppb, PerSecond, Radians, Dimensionless };

const char* unit_name(Unit u);
Unit unit_from_name(const std::string& name);

using Dims = std::array<int, 3>;
using Vec3 = std::array<double, 3>;

std::size_t grid_size(const Dims& d);

// 3D scalar grid, x-fastest storage: index = x + nx*(y + ny*z).
// Data is double in memory; file formats store float32 (see volume_io).
struct ScalarVolume {
    Dims dims{0, 0, 0};
    Vec3 voxel_mm{1.0, 1.0, 1.0};
    Unit unit{Unit::Dimensionless};
    std::vector<double> data;

    ScalarVolume() = default;
    ScalarVolume(const Dims& d, const Vec3& vox, Unit u, double fill = 0.0);

    std::size_t size() const { return data.size(); }
    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
    }
    double& at(int x, int y, int z) { return data[index(x, y, z)]; }
    double at(int x, int y, int z) const { return data[index(x, y, z)]; }

    bool same_dims(const Dims& other) const { return dims == other; }
    bool same_grid(const ScalarVolume& other) const;

    // Throws if any value is NaN or Inf. `what` names the offending volume
    // in the message.
    void require_finite(const std::string& what) const;
};

struct BinaryMask {
    Dims dims{0, 0, 0};
    std::vector<std::uint8_t> data;  // 0 or 1

    BinaryMask() = default;
    BinaryMask(const Dims& d, bool fill = false);

    std::size_t size() const { return data.size(); }
    bool at(int x, int y, int z) const {
        return data[static_cast<std::size_t>(x) +
                    static_cast<std::size_t>(dims[0]) *
                        (static_cast<std::size_t>(y) +
                         static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z))] != 0;
    }
    void set(int x, int y, int z, bool v) {
        data[static_cast<std::size_t>(x) +
             static_cast<std::size_t>(dims[0]) *
                 (static_cast<std::size_t>(y) +
                  static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z))] = v ? 1 : 0;
    }
    std::size_t count_true() const;
};

// Multi-echo gradient-echo acquisition: per-echo magnitude (dimensionless)
// and phase (radians, in [-pi, pi] on load).
struct MultiEchoGre {
    std::vector<double> te_s;  // strictly ascending, last < tr_s
    double tr_s{0.0};
    double b0_tesla{0.0};
    Vec3 b0_dir{0.0, 0.0, 1.0};
    std::vector<ScalarVolume> magnitude;
    std::vector<ScalarVolume> phase;

    int n_echoes() const { return static_cast<int>(te_s.size()); }
    void validate() const;  // throws std::runtime_error on invariant violation
};

// Integer ROI labels; 0 is background. Every nonzero label must appear in
// `names`.
struct LabelVolume {
    Dims dims{0, 0, 0};
    std::vector<std::int32_t> data;
    std::map<std::int32_t, std::string> names;

    LabelVolume() = default;
    LabelVolume(const Dims& d);

    std::size_t size() const { return data.size(); }
    std::int32_t at(int x, int y, int z) const {
        return data[static_cast<std::size_t>(x) +
                    static_cast<std::size_t>(dims[0]) *
                        (static_cast<std::size_t>(y) +
                         static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z))];
    }
    void validate() const;
};

// Field map in Hz with its validity region. Values are zero outside the
// mask and finite inside.
struct FieldMap {
    ScalarVolume volume;  // Unit::Hz
    BinaryMask mask;

    void validate() const;
};

}  // namespace chisep
