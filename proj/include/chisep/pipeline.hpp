// Stage orchestration for the command-line tool: configuration with
// file + flag layering, stage runners that work purely from on-disk
// artifacts, and provenance records (config, input/output hashes, timings).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chisep/chi_separation.hpp"

namespace chisep {

inline constexpr const char* kPipelineVersion = "1.0.0";

struct PipelineConfig {
    // unwrap-combine: some scanners store phase with the opposite sign
    // convention; -1 flips it before unwrapping.
    double phase_sign = 1.0;

    // vsharp
    double vsharp_r_max_mm = 12.0;
    double vsharp_r_min_mm = 0.0;  // 0 -> one voxel (largest voxel dimension)
    double vsharp_tsvd = 0.05;

    // relaxometry: scalar R2 baseline subtracted from R2* to form R2'
    double r2_baseline_per_s = 10.0;

    // chi separation
    SolverConfig solver;
    int pad_factor = 2;      // dipole kernel grid = pad_factor * volume dims
    double b0_tesla = 3.0;   // field strength for stages fed by bare volumes

    // Overlay values from a JSON config file with per-stage sections
    // (unknown keys are an error so typos do not pass silently).
    void apply_json_file(const std::string& path);
    std::string to_json() const;
};

// 64-bit FNV-1a over the file's bytes, as "fnv1a:<hex>".
std::string hash_file(const std::string& path);

// Each runner reads its inputs from disk, writes its outputs plus a
// provenance_<stage>.json into out_dir, and returns the paths written
// (provenance last). Errors are prefixed with the stage name.
std::vector<std::string> run_simulate(const PipelineConfig& cfg, const std::string& phantom_json,
                                      const std::string& out_dir);
std::vector<std::string> run_unwrap_combine(const PipelineConfig& cfg,
                                            const std::string& gre_manifest,
                                            const std::string& out_dir);
std::vector<std::string> run_vsharp(const PipelineConfig& cfg, const std::string& field_path,
                                    const std::string& mask_path, const std::string& out_dir);
std::vector<std::string> run_r2star(const PipelineConfig& cfg, const std::string& gre_manifest,
                                    const std::string& mask_path, const std::string& out_dir);
std::vector<std::string> run_chisep(const PipelineConfig& cfg, const std::string& field_path,
                                    const std::string& mask_path, const std::string& r2star_path,
                                    const std::string& out_dir);
std::vector<std::string> run_hybrid(const PipelineConfig& cfg, const std::string& t1_path,
                                    const std::string& qsm_path, const std::string& out_dir,
                                    bool scale_t1);
// manifest: CSV of id,path[,age,sex,site]; optional decile normalization
// onto the cohort-average deciles before aggregation.
std::vector<std::string> run_atlas(const PipelineConfig& cfg, const std::string& manifest_csv,
                                   const std::string& mask_path, const std::string& out_dir,
                                   bool normalize_to_cohort_deciles);
// manifest: CSV of id,chi_para_path,chi_dia_path,qsm_path; labels merged
// with make_exclusive when more than one volume is given.
std::vector<std::string> run_roi(const PipelineConfig& cfg, const std::string& manifest_csv,
                                 const std::vector<std::string>& label_paths,
                                 const std::vector<std::string>& label_name_jsons,
                                 const std::string& out_dir);
// csv: two columns iron,chi_para (header optional).
std::vector<std::string> run_regress(const PipelineConfig& cfg, const std::string& csv_path,
                                     const std::string& out_dir);
// simulate -> unwrap-combine -> vsharp -> r2star -> chisep, chained on disk.
std::vector<std::string> run_all(const PipelineConfig& cfg, const std::string& phantom_json,
                                 const std::string& out_dir);

}  // namespace chisep
