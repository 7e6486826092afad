// Raw float32 + JSON sidecar format, format dispatch, and the multi-echo
// GRE dataset manifest.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "chisep/types.hpp"
#include "chisep/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace chisep {

namespace {

bool has_ext(const std::string& path, const char* ext) {
    const std::string e(ext);
    return path.size() >= e.size() &&
           path.compare(path.size() - e.size(), e.size(), e) == 0;
}

std::string sidecar_path(const std::string& path_f32) {
    return path_f32.substr(0, path_f32.size() - 4) + ".json";
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    json j;
    in >> j;
    return j;
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("I/O failure writing: " + path);
}

}  // namespace

ScalarVolume load_raw(const std::string& path_f32) {
    const json sc = read_json_file(sidecar_path(path_f32));
    Dims dims{};
    Vec3 vox{};
    for (int a = 0; a < 3; ++a) {
        dims[a] = sc.at("dims").at(a).get<int>();
        vox[a] = sc.at("voxel_size_mm").at(a).get<double>();
    }
    const Unit unit = unit_from_name(sc.value("unit", "dimensionless"));

    ScalarVolume vol(dims, vox, unit);
    std::ifstream in(path_f32, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path_f32);
    std::vector<float> raw(vol.size());
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * 4));
    if (!in) throw std::runtime_error("payload shorter than sidecar dims: " + path_f32);
    for (std::size_t i = 0; i < raw.size(); ++i) vol.data[i] = raw[i];
    return vol;
}

void save_raw(const ScalarVolume& vol, const std::string& path_f32) {
    json sc;
    sc["dims"] = vol.dims;
    sc["voxel_size_mm"] = vol.voxel_mm;
    sc["unit"] = unit_name(vol.unit);
    write_json_file(sc, sidecar_path(path_f32));

    std::ofstream out(path_f32, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path_f32);
    std::vector<float> raw(vol.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(vol.data[i]);
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * 4));
    if (!out) throw std::runtime_error("I/O failure writing: " + path_f32);
}

ScalarVolume load_volume(const std::string& path) {
    if (!fs::exists(path)) throw std::runtime_error("file does not exist: " + path);
    if (has_ext(path, ".nii") || has_ext(path, ".hdr")) return load_nifti(path);
    if (has_ext(path, ".f32")) return load_raw(path);
    throw std::runtime_error("unknown volume format (expect .nii/.hdr/.f32): " + path);
}

void save_volume(const ScalarVolume& vol, const std::string& path) {
    if (has_ext(path, ".nii")) return save_nifti(vol, path);
    if (has_ext(path, ".f32")) return save_raw(vol, path);
    throw std::runtime_error("unknown volume format (expect .nii/.f32): " + path);
}

BinaryMask load_mask(const std::string& path) {
    const ScalarVolume vol = load_volume(path);
    BinaryMask m(vol.dims);
    for (std::size_t i = 0; i < vol.size(); ++i) m.data[i] = vol.data[i] != 0.0 ? 1 : 0;
    return m;
}

void save_mask(const BinaryMask& mask, const std::string& path, const Vec3& voxel_mm) {
    ScalarVolume vol(mask.dims, voxel_mm, Unit::Dimensionless);
    for (std::size_t i = 0; i < vol.size(); ++i) vol.data[i] = mask.data[i] ? 1.0 : 0.0;
    save_volume(vol, path);
}

LabelVolume load_labels(const std::string& path, const std::string& names_json) {
    const ScalarVolume vol = load_volume(path);
    LabelVolume lab(vol.dims);
    for (std::size_t i = 0; i < vol.size(); ++i) {
        const double v = std::round(vol.data[i]);
        if (v < 0.0) throw std::runtime_error("negative label value in " + path);
        lab.data[i] = static_cast<std::int32_t>(v);
    }
    if (!names_json.empty()) {
        const json j = read_json_file(names_json);
        for (auto it = j.begin(); it != j.end(); ++it)
            lab.names[std::stoi(it.key())] = it.value().get<std::string>();
    }
    for (auto v : lab.data)
        if (v != 0 && lab.names.find(v) == lab.names.end())
            lab.names[v] = "label_" + std::to_string(v);
    lab.validate();
    return lab;
}

void save_labels(const LabelVolume& labels, const std::string& path, const Vec3& voxel_mm,
                 const std::string& names_json) {
    ScalarVolume vol(labels.dims, voxel_mm, Unit::Dimensionless);
    for (std::size_t i = 0; i < vol.size(); ++i)
        vol.data[i] = static_cast<double>(labels.data[i]);
    save_volume(vol, path);
    if (!names_json.empty()) {
        json j = json::object();
        for (const auto& [id, name] : labels.names) j[std::to_string(id)] = name;
        write_json_file(j, names_json);
    }
}

MultiEchoGre load_gre(const std::string& manifest_path) {
    const json j = read_json_file(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    MultiEchoGre gre;
    gre.te_s = j.at("te_s").get<std::vector<double>>();
    gre.tr_s = j.at("tr_s").get<double>();
    gre.b0_tesla = j.at("b0_tesla").get<double>();
    for (int a = 0; a < 3; ++a) gre.b0_dir[a] = j.at("b0_dir").at(a).get<double>();

    for (const auto& e : j.at("echoes")) {
        gre.magnitude.push_back(load_volume((base / e.at("magnitude").get<std::string>()).string()));
        gre.phase.push_back(load_volume((base / e.at("phase").get<std::string>()).string()));
    }
    gre.validate();
    return gre;
}

void save_gre(const MultiEchoGre& gre, const std::string& manifest_path) {
    const fs::path base = fs::path(manifest_path).parent_path();
    json j;
    j["te_s"] = gre.te_s;
    j["tr_s"] = gre.tr_s;
    j["b0_tesla"] = gre.b0_tesla;
    j["b0_dir"] = gre.b0_dir;
    json echoes = json::array();
    for (int i = 0; i < gre.n_echoes(); ++i) {
        const std::string mag = "mag_e" + std::to_string(i + 1) + ".nii";
        const std::string ph = "phase_e" + std::to_string(i + 1) + ".nii";
        save_volume(gre.magnitude[i], (base / mag).string());
        save_volume(gre.phase[i], (base / ph).string());
        echoes.push_back({{"magnitude", mag}, {"phase", ph}});
    }
    j["echoes"] = echoes;
    write_json_file(j, manifest_path);
}

}  // namespace chisep
