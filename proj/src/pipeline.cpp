#include "chisep/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "chisep/atlas.hpp"
#include "chisep/fft.hpp"
#include "chisep/phase_pipeline.hpp"
#include "chisep/relaxometry.hpp"
#include "chisep/roi_stats.hpp"
#include "chisep/simulator.hpp"
#include "chisep/volume_io.hpp"

namespace chisep {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void take(const json& section, const char* key, double& into) {
    if (section.contains(key)) into = section.at(key).get<double>();
}

void take(const json& section, const char* key, int& into) {
    if (section.contains(key)) into = section.at(key).get<int>();
}

void reject_unknown(const json& section, std::initializer_list<const char*> known,
                    const std::string& where) {
    for (const auto& [key, value] : section.items()) {
        bool ok = false;
        for (const char* k : known)
            if (key == k) {
                ok = true;
                break;
            }
        if (!ok) throw std::runtime_error("config: unknown key '" + key + "' in " + where);
    }
}

}  // namespace

void PipelineConfig::apply_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path + ": " + e.what());
    }
    reject_unknown(j, {"unwrap_combine", "vsharp", "r2star", "chisep"}, "top level");
    if (j.contains("unwrap_combine")) {
        const auto& s = j.at("unwrap_combine");
        reject_unknown(s, {"phase_sign"}, "unwrap_combine");
        take(s, "phase_sign", phase_sign);
    }
    if (j.contains("vsharp")) {
        const auto& s = j.at("vsharp");
        reject_unknown(s, {"r_max_mm", "r_min_mm", "tsvd_threshold"}, "vsharp");
        take(s, "r_max_mm", vsharp_r_max_mm);
        take(s, "r_min_mm", vsharp_r_min_mm);
        take(s, "tsvd_threshold", vsharp_tsvd);
    }
    if (j.contains("r2star")) {
        const auto& s = j.at("r2star");
        reject_unknown(s, {"r2_baseline_per_s"}, "r2star");
        take(s, "r2_baseline_per_s", r2_baseline_per_s);
    }
    if (j.contains("chisep")) {
        const auto& s = j.at("chisep");
        reject_unknown(s,
                       {"dr_para", "dr_dia", "lambda_r2p", "lambda_grad", "max_iter", "tol",
                        "step_safety", "pad_factor", "b0_tesla"},
                       "chisep");
        take(s, "dr_para", solver.dr_para);
        take(s, "dr_dia", solver.dr_dia);
        take(s, "lambda_r2p", solver.lambda_r2p);
        take(s, "lambda_grad", solver.lambda_grad);
        take(s, "max_iter", solver.max_iter);
        take(s, "tol", solver.tol);
        take(s, "step_safety", solver.step_safety);
        take(s, "pad_factor", pad_factor);
        take(s, "b0_tesla", b0_tesla);
    }
    if (std::abs(phase_sign) != 1.0)
        throw std::runtime_error("config: phase_sign must be +1 or -1");
    if (pad_factor < 1) throw std::runtime_error("config: pad_factor must be >= 1");
    if (!(b0_tesla > 0.0)) throw std::runtime_error("config: b0_tesla must be > 0");
}

std::string PipelineConfig::to_json() const {
    json j;
    j["unwrap_combine"] = {{"phase_sign", phase_sign}};
    j["vsharp"] = {{"r_max_mm", vsharp_r_max_mm},
                   {"r_min_mm", vsharp_r_min_mm},
                   {"tsvd_threshold", vsharp_tsvd}};
    j["r2star"] = {{"r2_baseline_per_s", r2_baseline_per_s}};
    j["chisep"] = {{"dr_para", solver.dr_para},     {"dr_dia", solver.dr_dia},
                   {"lambda_r2p", solver.lambda_r2p}, {"lambda_grad", solver.lambda_grad},
                   {"max_iter", solver.max_iter},   {"tol", solver.tol},
                   {"step_safety", solver.step_safety}, {"pad_factor", pad_factor},
                   {"b0_tesla", b0_tesla}};
    return j.dump(2);
}

std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for hashing: " + path);
    std::uint64_t h = 14695981039346656037ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    char out[32];
    std::snprintf(out, sizeof(out), "fnv1a:%016llx", static_cast<unsigned long long>(h));
    return out;
}

namespace {

class StageRecorder {
public:
    StageRecorder(std::string stage, const PipelineConfig& cfg, std::string out_dir)
        : stage_(std::move(stage)),
          out_dir_(std::move(out_dir)),
          start_(std::chrono::steady_clock::now()) {
        fs::create_directories(out_dir_);
        config_ = json::parse(cfg.to_json());
    }

    void input(const std::string& path) { inputs_[path] = hash_file(path); }
    void output(const std::string& path) { outputs_.push_back(path); }

    std::string out_path(const std::string& name) const {
        return (fs::path(out_dir_) / name).string();
    }

    // writes provenance_<stage>.json and returns all written paths
    std::vector<std::string> finish() {
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start_)
                                 .count();
        json prov;
        prov["stage"] = stage_;
        prov["version"] = kPipelineVersion;
        prov["config"] = config_;
        prov["config_hash"] = hash_string(config_.dump());
        prov["inputs"] = inputs_;
        json outs = json::object();
        for (const auto& p : outputs_) outs[p] = hash_file(p);
        prov["outputs"] = outs;
        prov["elapsed_ms"] = elapsed;
        const std::string prov_path = out_path("provenance_" + stage_ + ".json");
        std::ofstream out(prov_path);
        if (!out) throw std::runtime_error("cannot write provenance: " + prov_path);
        out << prov.dump(2) << "\n";
        std::vector<std::string> all = outputs_;
        all.push_back(prov_path);
        return all;
    }

private:
    static std::string hash_string(const std::string& s) {
        std::uint64_t h = 14695981039346656037ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        char out[32];
        std::snprintf(out, sizeof(out), "fnv1a:%016llx", static_cast<unsigned long long>(h));
        return out;
    }

    std::string stage_;
    std::string out_dir_;
    std::chrono::steady_clock::time_point start_;
    json config_;
    json inputs_;
    std::vector<std::string> outputs_;
};

[[noreturn]] void rethrow_with_stage(const std::string& stage, const std::exception& e) {
    throw std::runtime_error(stage + ": " + e.what());
}

double pick_r_min(const PipelineConfig& cfg, const Vec3& voxel_mm) {
    if (cfg.vsharp_r_min_mm > 0.0) return cfg.vsharp_r_min_mm;
    return std::max({voxel_mm[0], voxel_mm[1], voxel_mm[2]});
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open CSV: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            const auto b = cell.find_first_not_of(" \t");
            const auto e = cell.find_last_not_of(" \t");
            cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

bool is_number(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

std::string resolve_relative(const std::string& base_file, const std::string& p) {
    const fs::path q(p);
    if (q.is_absolute()) return p;
    return (fs::path(base_file).parent_path() / q).string();
}

}  // namespace

std::vector<std::string> run_simulate(const PipelineConfig& cfg, const std::string& phantom_json,
                                      const std::string& out_dir) {
    try {
        StageRecorder rec("simulate", cfg, out_dir);
        rec.input(phantom_json);
        const PhantomSpec spec = load_phantom_spec(phantom_json);
        const Phantom ph = render_phantom(spec);
        const MultiEchoGre gre =
            simulate_gre(ph.chi_para, ph.chi_dia, spec, spec.te_s, spec.tr_s, spec.b0_tesla);

        const std::string gre_path = rec.out_path("gre.json");
        save_gre(gre, gre_path);
        rec.output(gre_path);
        for (int e = 1; e <= gre.n_echoes(); ++e) {
            rec.output(rec.out_path("mag_e" + std::to_string(e) + ".nii"));
            rec.output(rec.out_path("phase_e" + std::to_string(e) + ".nii"));
        }
        save_volume(ph.chi_para, rec.out_path("chi_para_truth.nii"));
        rec.output(rec.out_path("chi_para_truth.nii"));
        save_volume(ph.chi_dia, rec.out_path("chi_dia_truth.nii"));
        rec.output(rec.out_path("chi_dia_truth.nii"));
        save_mask(ph.mask, rec.out_path("mask.nii"), spec.voxel_size_mm);
        rec.output(rec.out_path("mask.nii"));
        return rec.finish();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("simulate: ") + e.what());
    } catch (const std::runtime_error& e) {
        rethrow_with_stage("simulate", e);
    }
}

std::vector<std::string> run_unwrap_combine(const PipelineConfig& cfg,
                                            const std::string& gre_manifest,
                                            const std::string& out_dir) {
    try {
        StageRecorder rec("unwrap-combine", cfg, out_dir);
        rec.input(gre_manifest);
        MultiEchoGre gre = load_gre(gre_manifest);
        std::vector<ScalarVolume> unwrapped;
        unwrapped.reserve(gre.phase.size());
        for (auto& ph : gre.phase) {
            if (cfg.phase_sign < 0.0)
                for (auto& v : ph.data) v = -v;
            unwrapped.push_back(laplacian_unwrap(ph));
        }
        const FieldMap fm = combine_echoes(gre, unwrapped);
        save_volume(fm.volume, rec.out_path("field.nii"));
        rec.output(rec.out_path("field.nii"));
        save_mask(fm.mask, rec.out_path("field_mask.nii"), fm.volume.voxel_mm);
        rec.output(rec.out_path("field_mask.nii"));
        return rec.finish();
    } catch (const std::runtime_error& e) {
        rethrow_with_stage("unwrap-combine", e);
    }
}

std::vector<std::string> run_vsharp(const PipelineConfig& cfg, const std::string& field_path,
                                    const std::string& mask_path, const std::string& out_dir) {
    try {
        StageRecorder rec("vsharp", cfg, out_dir);
        rec.input(field_path);
        rec.input(mask_path);
        ScalarVolume field = load_volume(field_path);
        const BinaryMask mask = load_mask(mask_path);
        if (mask.dims != field.dims)
            throw std::runtime_error("mask grid does not match field grid");
        FieldMap fm;
        for (std::size_t i = 0; i < field.data.size(); ++i)
            if (!mask.data[i]) field.data[i] = 0.0;
        field.unit = Unit::Hz;
        fm.volume = std::move(field);
        fm.mask = mask;
        const FieldMap tissue =
            vsharp(fm, mask, cfg.vsharp_r_max_mm, pick_r_min(cfg, fm.volume.voxel_mm),
                   cfg.vsharp_tsvd);
        save_volume(tissue.volume, rec.out_path("tissue_field.nii"));
        rec.output(rec.out_path("tissue_field.nii"));
        save_mask(tissue.mask, rec.out_path("vsharp_mask.nii"), tissue.volume.voxel_mm);
        rec.output(rec.out_path("vsharp_mask.nii"));
        return rec.finish();
    } catch (const std::runtime_error& e) {
        rethrow_with_stage("vsharp", e);
    }
}

std::vector<std::string> run_r2star(const PipelineConfig& cfg, const std::string& gre_manifest,
                                    const std::string& mask_path, const std::string& out_dir) {
    try {
        StageRecorder rec("r2star", cfg, out_dir);
        rec.input(gre_manifest);
        rec.input(mask_path);
        const MultiEchoGre gre = load_gre(gre_manifest);
        const BinaryMask mask = load_mask(mask_path);
        const R2StarFit fit = fit_r2star(gre, mask);
        save_volume(fit.r2star, rec.out_path("r2star.nii"));
        rec.output(rec.out_path("r2star.nii"));
        save_volume(fit.s0, rec.out_path("s0.nii"));
        rec.output(rec.out_path("s0.nii"));
        save_volume(fit.residual_rms, rec.out_path("r2star_residual.nii"));
        rec.output(rec.out_path("r2star_residual.nii"));
        save_mask(fit.valid, rec.out_path("r2star_valid.nii"), fit.r2star.voxel_mm);
        rec.output(rec.out_path("r2star_valid.nii"));
        return rec.finish();
    } catch (const std::runtime_error& e) {
        rethrow_with_stage("r2star", e);
    }
}

std::vector<std::string> run_chisep(const PipelineConfig& cfg, const std::string& field_path,
                                    const std::string& mask_path, const std::string& r2star_path,
                                    const std::string& out_dir) {
    try {
        StageRecorder rec("chisep", cfg, out_dir);
        rec.input(field_path);
        rec.input(mask_path);
        rec.input(r2star_path);
        ScalarVolume field = load_volume(field_path);
        const BinaryMask mask = load_mask(mask_path);
        ScalarVolume r2star = load_volume(r2star_path);
        if (mask.dims != field.dims)
            throw std::runtime_error("mask grid does not match field grid");
        for (std::size_t i = 0; i < field.data.size(); ++i)
            if (!mask.data[i]) field.data[i] = 0.0;
        field.unit = Unit::Hz;
        r2star.unit = Unit::PerSecond;
        FieldMap fm;
        fm.volume = std::move(field);
        fm.mask = mask;
        const ScalarVolume r2p = r2prime_from_r2star(r2star, cfg.r2_baseline_per_s);

        // Stage inputs are bare volumes, so the field strength rides in the
        // config rather than in a header tag.
        const DipoleKernel kernel =
            make_dipole_kernel(scaled_dims(fm.volume.dims, cfg.pad_factor), fm.volume.voxel_mm,
                               Vec3{0.0, 0.0, 1.0});
        const ChiSeparationResult res =
            separate(fm, r2p, mask, kernel, cfg.b0_tesla, cfg.solver);

        save_volume(res.chi_para, rec.out_path("chi_para.nii"));
        rec.output(rec.out_path("chi_para.nii"));
        save_volume(res.chi_dia, rec.out_path("chi_dia.nii"));
        rec.output(rec.out_path("chi_dia.nii"));
        save_volume(res.qsm, rec.out_path("qsm.nii"));
        rec.output(rec.out_path("qsm.nii"));

        json stats;
        stats["iterations"] = res.iterations;
        stats["converged"] = res.converged;
        stats["final_objective"] = res.final_objective;
        stats["b0_tesla"] = cfg.b0_tesla;
        const std::string stats_path = rec.out_path("chisep_stats.json");
        std::ofstream out(stats_path);
        out << stats.dump(2) << "\n";
        rec.output(stats_path);
        return rec.finish();
    } catch (const std::runtime_error& e) {
        rethrow_with_stage("chisep", e);
    }
}

std::vector<std::string> run_hybrid(const PipelineConfig& cfg, const std::string& t1_path,
                                    const std::string& qsm_path, const std::string& out_dir,
                                    bool scale_t1) {
    try {
        StageRecorder rec("hybrid", cfg, out_dir);
        rec.input(t1_path);
        rec.input(qsm_path);
        ScalarVolume t1 = load_volume(t1_path);
        const ScalarVolume qsm = load_volume(qsm_path);
        if (scale_t1) t1 = scale_to_range(t1, 0.0, 255.0);
        const ScalarVolume hybrid = hybrid_image(t1, qsm);
        save_volume(hybrid, rec.out_path("hybrid.nii"));
        rec.output(rec.out_path("hybrid.nii"));
        return rec.finish();
    } catch (const std::runtime_error& e) {
        rethrow_with_stage("hybrid", e);
    }
}

std::vector<std::string> run_atlas(const PipelineConfig& cfg, const std::string& manifest_csv,
                                   const std::string& mask_path, const std::string& out_dir,
                                   bool normalize_to_cohort_deciles) {
    try {
        StageRecorder rec("atlas", cfg, out_dir);
        rec.input(manifest_csv);
        rec.input(mask_path);
        const BinaryMask mask = load_mask(mask_path);

        auto rows = read_csv(manifest_csv);
        if (!rows.empty() && rows[0].size() >= 2 && rows[0][0] == "id") rows.erase(rows.begin());
        std::vector<ScalarVolume> maps;
        for (const auto& row : rows) {
            if (row.size() < 2)
                throw std::runtime_error("manifest rows need at least id,path columns");
            const std::string path = resolve_relative(manifest_csv, row[1]);
            rec.input(path);
            maps.push_back(load_volume(path));
        }
        if (maps.size() < 2) throw std::runtime_error("need at least 2 subjects");

        if (normalize_to_cohort_deciles) {
            std::array<double, 11> target{};
            for (const auto& m : maps) {
                const auto q = masked_deciles(m, mask);
                for (int p = 0; p <= 10; ++p) target[p] += q[p];
            }
            for (auto& t : target) t /= static_cast<double>(maps.size());
            for (auto& m : maps) m = normalize_deciles(m, mask, target);
        }

        const AtlasBundle atlas = aggregate(maps, mask);
        save_volume(atlas.mean, rec.out_path("atlas_mean.nii"));
        rec.output(rec.out_path("atlas_mean.nii"));
        save_volume(atlas.per_voxel_sd, rec.out_path("atlas_sd.nii"));
        rec.output(rec.out_path("atlas_sd.nii"));
        save_volume(atlas.rsd, rec.out_path("atlas_rsd.nii"));
        rec.output(rec.out_path("atlas_rsd.nii"));
        save_mask(atlas.rsd_defined, rec.out_path("atlas_rsd_defined.nii"),
                  atlas.mean.voxel_mm);
        rec.output(rec.out_path("atlas_rsd_defined.nii"));
        return rec.finish();
    } catch (const std::runtime_error& e) {
        rethrow_with_stage("atlas", e);
    }
}

std::vector<std::string> run_roi(const PipelineConfig& cfg, const std::string& manifest_csv,
                                 const std::vector<std::string>& label_paths,
                                 const std::vector<std::string>& label_name_jsons,
                                 const std::string& out_dir) {
    try {
        StageRecorder rec("roi", cfg, out_dir);
        rec.input(manifest_csv);
        if (label_paths.empty()) throw std::runtime_error("need at least one label volume");

        std::vector<LabelVolume> label_sets;
        for (std::size_t i = 0; i < label_paths.size(); ++i) {
            rec.input(label_paths[i]);
            const std::string names =
                i < label_name_jsons.size() ? label_name_jsons[i] : std::string();
            if (!names.empty()) rec.input(names);
            label_sets.push_back(load_labels(label_paths[i], names));
        }
        const LabelVolume labels =
            label_sets.size() == 1 ? std::move(label_sets[0]) : make_exclusive(label_sets);

        std::vector<std::int32_t> roi_ids;
        std::vector<std::string> roi_names;
        for (const auto& [id, name] : labels.names) {
            bool present = false;
            for (const auto v : labels.data)
                if (v == id) {
                    present = true;
                    break;
                }
            if (present) {
                roi_ids.push_back(id);
                roi_names.push_back(name);
            }
        }
        if (roi_ids.empty()) throw std::runtime_error("no nonempty ROI in label volume");

        auto rows = read_csv(manifest_csv);
        if (!rows.empty() && rows[0].size() >= 4 && rows[0][0] == "id") rows.erase(rows.begin());
        std::vector<std::vector<double>> med_para, med_dia, med_qsm;
        for (const auto& row : rows) {
            if (row.size() < 4)
                throw std::runtime_error(
                    "manifest rows need id,chi_para_path,chi_dia_path,qsm_path");
            ScalarVolume maps[3];
            std::vector<double> med[3];
            for (int m = 0; m < 3; ++m) {
                const std::string path = resolve_relative(manifest_csv, row[m + 1]);
                rec.input(path);
                maps[m] = load_volume(path);
                for (const auto id : roi_ids) med[m].push_back(roi_median(maps[m], labels, id));
            }
            med_para.push_back(std::move(med[0]));
            med_dia.push_back(std::move(med[1]));
            med_qsm.push_back(std::move(med[2]));
        }

        const RoiTable table = population_stats(roi_names, med_para, med_dia, med_qsm);
        const std::string csv_path = rec.out_path("roi_table.csv");
        std::ofstream out(csv_path);
        if (!out) throw std::runtime_error("cannot write " + csv_path);
        out << "roi_name,n_subjects,chi_para_mean,chi_para_sd,chi_dia_mean,chi_dia_sd,"
               "qsm_mean,qsm_sd\n";
        char buf[64];
        auto num = [&](double v) {
            std::snprintf(buf, sizeof(buf), "%.10g", v);
            return std::string(buf);
        };
        for (const auto& r : table)
            out << r.roi_name << ',' << r.n_subjects << ',' << num(r.chi_para_mean) << ','
                << num(r.chi_para_sd) << ',' << num(r.chi_dia_mean) << ',' << num(r.chi_dia_sd)
                << ',' << num(r.qsm_mean) << ',' << num(r.qsm_sd) << "\n";
        out.close();
        rec.output(csv_path);
        return rec.finish();
    } catch (const std::runtime_error& e) {
        rethrow_with_stage("roi", e);
    }
}

std::vector<std::string> run_regress(const PipelineConfig& cfg, const std::string& csv_path,
                                     const std::string& out_dir) {
    try {
        StageRecorder rec("regress", cfg, out_dir);
        rec.input(csv_path);
        auto rows = read_csv(csv_path);
        std::vector<double> x, y;
        for (const auto& row : rows) {
            if (row.size() < 2) throw std::runtime_error("regression CSV needs two columns");
            if (!is_number(row[0])) continue;  // header
            x.push_back(std::strtod(row[0].c_str(), nullptr));
            y.push_back(std::strtod(row[1].c_str(), nullptr));
        }
        const RegressionResult res = fit_regression(x, y);
        json j;
        j["n"] = x.size();
        j["slope"] = res.slope;
        j["intercept"] = res.intercept;
        j["r_squared"] = res.r_squared;
        j["ci95_slope"] = res.ci95_slope;
        j["ci95_intercept"] = res.ci95_intercept;
        j["p_slope"] = res.p_slope;
        j["p_intercept"] = res.p_intercept;
        const std::string out_path = rec.out_path("regression.json");
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        out << j.dump(2) << "\n";
        out.close();
        rec.output(out_path);
        return rec.finish();
    } catch (const std::runtime_error& e) {
        rethrow_with_stage("regress", e);
    }
}

std::vector<std::string> run_all(const PipelineConfig& cfg, const std::string& phantom_json,
                                 const std::string& out_dir) {
    std::vector<std::string> all;
    auto append = [&](std::vector<std::string> v) {
        all.insert(all.end(), v.begin(), v.end());
    };
    append(run_simulate(cfg, phantom_json, out_dir));
    const fs::path d(out_dir);
    append(run_unwrap_combine(cfg, (d / "gre.json").string(), out_dir));
    append(run_vsharp(cfg, (d / "field.nii").string(), (d / "mask.nii").string(), out_dir));
    append(run_r2star(cfg, (d / "gre.json").string(), (d / "mask.nii").string(), out_dir));
    append(run_chisep(cfg, (d / "tissue_field.nii").string(), (d / "vsharp_mask.nii").string(),
                      (d / "r2star.nii").string(), out_dir));
    return all;
}

}  // namespace chisep
