// NIfTI-1 reader/writer. Header layout follows the nifti1.h standard; only
// the fields this pipeline uses are interpreted.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "chisep/types.hpp"
#include "chisep/volume_io.hpp"

namespace chisep {

namespace {

#pragma pack(push, 1)
struct Nifti1Header {
    std::int32_t sizeof_hdr;    // must be 348
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)

static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

template <typename T>
T bswap(T v) {
    char* p = reinterpret_cast<char*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
    return v;
}

void swap_header(Nifti1Header& h) {
    h.sizeof_hdr = bswap(h.sizeof_hdr);
    for (auto& d : h.dim) d = bswap(d);
    h.intent_code = bswap(h.intent_code);
    h.datatype = bswap(h.datatype);
    h.bitpix = bswap(h.bitpix);
    for (auto& p : h.pixdim) p = bswap(p);
    h.vox_offset = bswap(h.vox_offset);
    h.scl_slope = bswap(h.scl_slope);
    h.scl_inter = bswap(h.scl_inter);
    h.qform_code = bswap(h.qform_code);
    h.sform_code = bswap(h.sform_code);
}

std::string strip_img_ext(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".hdr") == 0)
        return path.substr(0, path.size() - 4) + ".img";
    return path;
}

}  // namespace

ScalarVolume load_nifti(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open NIfTI file: " + path);

    Nifti1Header h{};
    in.read(reinterpret_cast<char*>(&h), sizeof(h));
    if (!in) throw std::runtime_error("truncated NIfTI header: " + path);

    bool swapped = false;
    if (h.sizeof_hdr != 348) {
        if (bswap(h.sizeof_hdr) == 348) {
            swap_header(h);
            swapped = true;
        } else {
            throw std::runtime_error("malformed NIfTI header (sizeof_hdr): " + path);
        }
    }

    const bool single = std::strncmp(h.magic, "n+1", 3) == 0;
    const bool pair = std::strncmp(h.magic, "ni1", 3) == 0;
    if (!single && !pair)
        throw std::runtime_error("malformed NIfTI header (magic): " + path);

    if (h.dim[0] != 3) throw std::runtime_error("non-3D image: " + path);
    const Dims dims{h.dim[1], h.dim[2], h.dim[3]};
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
        throw std::runtime_error("malformed NIfTI header (dim): " + path);

    Vec3 vox{h.pixdim[1], h.pixdim[2], h.pixdim[3]};
    for (auto& v : vox) v = std::abs(v) > 0.0 ? std::abs(v) : 1.0;

    Unit unit = Unit::Dimensionless;
    {
        char buf[17] = {0};
        std::memcpy(buf, h.intent_name, 16);
        try {
            unit = unit_from_name(buf);
        } catch (const std::runtime_error&) {
            unit = Unit::Dimensionless;  // foreign files carry arbitrary intent names
        }
    }

    const std::size_t n = grid_size(dims);
    std::vector<char> payload;
    if (single) {
        const std::size_t off = static_cast<std::size_t>(h.vox_offset);
        if (off < 348) throw std::runtime_error("malformed NIfTI header (vox_offset): " + path);
        in.seekg(static_cast<std::streamoff>(off), std::ios::beg);
    } else {
        in.close();
        in.open(strip_img_ext(path), std::ios::binary);
        if (!in) throw std::runtime_error("cannot open NIfTI .img payload for: " + path);
    }

    ScalarVolume vol(dims, vox, unit);
    const double slope = (h.scl_slope == 0.0f) ? 1.0 : static_cast<double>(h.scl_slope);
    const double inter = static_cast<double>(h.scl_inter);

    if (h.datatype == kDtFloat32) {
        std::vector<float> raw(n);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4));
        if (!in) throw std::runtime_error("payload shorter than header dims: " + path);
        for (std::size_t i = 0; i < n; ++i) {
            float v = swapped ? bswap(raw[i]) : raw[i];
            vol.data[i] = slope * static_cast<double>(v) + inter;
        }
    } else if (h.datatype == kDtInt16) {
        std::vector<std::int16_t> raw(n);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
        if (!in) throw std::runtime_error("payload shorter than header dims: " + path);
        for (std::size_t i = 0; i < n; ++i) {
            std::int16_t v = swapped ? bswap(raw[i]) : raw[i];
            vol.data[i] = slope * static_cast<double>(v) + inter;
        }
    } else {
        throw std::runtime_error("unsupported NIfTI datatype " + std::to_string(h.datatype) +
                                 ": " + path);
    }
    return vol;
}

void save_nifti(const ScalarVolume& vol, const std::string& path) {
    Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(vol.dims[0]);
    h.dim[2] = static_cast<std::int16_t>(vol.dims[1]);
    h.dim[3] = static_cast<std::int16_t>(vol.dims[2]);
    h.dim[4] = h.dim[5] = h.dim[6] = h.dim[7] = 1;
    h.datatype = kDtFloat32;
    h.bitpix = 32;
    h.pixdim[0] = 1.0f;
    h.pixdim[1] = static_cast<float>(vol.voxel_mm[0]);
    h.pixdim[2] = static_cast<float>(vol.voxel_mm[1]);
    h.pixdim[3] = static_cast<float>(vol.voxel_mm[2]);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2;  // NIFTI_UNITS_MM
    std::snprintf(h.descrip, sizeof(h.descrip), "chisep");
    h.sform_code = 1;
    h.srow_x[0] = static_cast<float>(vol.voxel_mm[0]);
    h.srow_y[1] = static_cast<float>(vol.voxel_mm[1]);
    h.srow_z[2] = static_cast<float>(vol.voxel_mm[2]);
    std::snprintf(h.intent_name, sizeof(h.intent_name), "%s", unit_name(vol.unit));
    std::memcpy(h.magic, "n+1", 4);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(&h), sizeof(h));
    const char ext[4] = {0, 0, 0, 0};  // no header extensions
    out.write(ext, 4);

    std::vector<float> raw(vol.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(vol.data[i]);
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * 4));
    if (!out) throw std::runtime_error("I/O failure writing: " + path);
}

}  // namespace chisep
