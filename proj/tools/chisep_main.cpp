// Command-line front end: one subcommand per pipeline stage, a JSON config
// file with per-stage sections, and flags that override file values.
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chisep/pipeline.hpp"

namespace {

// The same logical flag can live on several subcommands (e.g. --phase-sign
// on unwrap-combine and run-all), so each override tracks every Option that
// binds to it; whichever subcommand parsed supplies the value.
struct FlagOverrides {
    std::vector<CLI::Option*> phase_sign, r_max, r_min, tsvd, r2_baseline;
    std::vector<CLI::Option*> dr_para, dr_dia, lambda_r2p, lambda_grad;
    std::vector<CLI::Option*> max_iter, tol, step_safety, pad_factor, b0;

    double v_phase_sign = 1.0, v_r_max = 12.0, v_r_min = 0.0, v_tsvd = 0.05;
    double v_r2_baseline = 10.0, v_dr_para = 100.0, v_dr_dia = 100.0;
    double v_lambda_r2p = 1.0, v_lambda_grad = 3e-4, v_tol = 1e-8, v_step_safety = 0.9;
    double v_b0 = 3.0;
    int v_max_iter = 500, v_pad_factor = 2;
};

void add_vsharp_flags(CLI::App* cmd, FlagOverrides& f) {
    f.r_max.push_back(cmd->add_option("--r-max", f.v_r_max, "largest kernel radius, mm"));
    f.r_min.push_back(
        cmd->add_option("--r-min", f.v_r_min, "smallest kernel radius, mm (0 = one voxel)"));
    f.tsvd.push_back(
        cmd->add_option("--tsvd", f.v_tsvd, "deconvolution truncation threshold"));
}

void add_solver_flags(CLI::App* cmd, FlagOverrides& f) {
    f.dr_para.push_back(cmd->add_option("--dr-para", f.v_dr_para,
                                        "paramagnetic relaxometric constant, (1/s)/ppm"));
    f.dr_dia.push_back(cmd->add_option("--dr-dia", f.v_dr_dia,
                                       "diamagnetic relaxometric constant, (1/s)/ppm"));
    f.lambda_r2p.push_back(
        cmd->add_option("--lambda-r2p", f.v_lambda_r2p, "R2' data-term weight"));
    f.lambda_grad.push_back(
        cmd->add_option("--lambda-grad", f.v_lambda_grad, "gradient regularization weight"));
    f.max_iter.push_back(cmd->add_option("--max-iter", f.v_max_iter, "iteration cap"));
    f.tol.push_back(cmd->add_option("--tol", f.v_tol, "relative objective tolerance"));
    f.step_safety.push_back(cmd->add_option("--step-safety", f.v_step_safety,
                                            "fraction of the safe gradient step"));
    f.pad_factor.push_back(cmd->add_option("--pad-factor", f.v_pad_factor,
                                           "dipole kernel grid = factor * volume dims"));
    f.b0.push_back(cmd->add_option("--b0", f.v_b0, "field strength in tesla"));
    f.r2_baseline.push_back(cmd->add_option("--r2-baseline", f.v_r2_baseline,
                                            "scalar R2 subtracted from R2* (1/s)"));
}

chisep::PipelineConfig build_config(const std::string& config_path, const FlagOverrides& f) {
    chisep::PipelineConfig cfg;
    if (!config_path.empty()) cfg.apply_json_file(config_path);
    auto set = [](const std::vector<CLI::Option*>& opts, auto& dst, const auto& src) {
        for (const CLI::Option* o : opts)
            if (o->count() > 0) {
                dst = src;
                return;
            }
    };
    set(f.phase_sign, cfg.phase_sign, f.v_phase_sign);
    set(f.r_max, cfg.vsharp_r_max_mm, f.v_r_max);
    set(f.r_min, cfg.vsharp_r_min_mm, f.v_r_min);
    set(f.tsvd, cfg.vsharp_tsvd, f.v_tsvd);
    set(f.r2_baseline, cfg.r2_baseline_per_s, f.v_r2_baseline);
    set(f.dr_para, cfg.solver.dr_para, f.v_dr_para);
    set(f.dr_dia, cfg.solver.dr_dia, f.v_dr_dia);
    set(f.lambda_r2p, cfg.solver.lambda_r2p, f.v_lambda_r2p);
    set(f.lambda_grad, cfg.solver.lambda_grad, f.v_lambda_grad);
    set(f.max_iter, cfg.solver.max_iter, f.v_max_iter);
    set(f.tol, cfg.solver.tol, f.v_tol);
    set(f.step_safety, cfg.solver.step_safety, f.v_step_safety);
    set(f.pad_factor, cfg.pad_factor, f.v_pad_factor);
    set(f.b0, cfg.b0_tesla, f.v_b0);
    return cfg;
}

void report(const std::vector<std::string>& written) {
    for (const auto& p : written) std::printf("wrote %s\n", p.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"susceptibility source separation pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::string phantom_json, gre_manifest, field_path, mask_path, r2star_path;
    std::string t1_path, qsm_path, manifest_csv, regress_csv;
    std::vector<std::string> label_paths, label_names;
    bool no_scale = false, normalize_deciles_flag = false;
    FlagOverrides f;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        cmd->add_option("--out", out_dir, "output directory")->required();
    };

    auto* sim = app.add_subcommand("simulate", "render a phantom and synthesize GRE echoes");
    add_common(sim);
    sim->add_option("--spec", phantom_json, "phantom spec JSON")
        ->required()
        ->check(CLI::ExistingFile);

    auto* unwrap = app.add_subcommand("unwrap-combine",
                                      "unwrap echo phases and combine into a field map");
    add_common(unwrap);
    unwrap->add_option("--gre", gre_manifest, "GRE manifest JSON")
        ->required()
        ->check(CLI::ExistingFile);
    f.phase_sign.push_back(unwrap->add_option("--phase-sign", f.v_phase_sign, "+1 or -1"));

    auto* vs = app.add_subcommand("vsharp", "remove background field");
    add_common(vs);
    vs->add_option("--field", field_path, "combined field map")->required()
        ->check(CLI::ExistingFile);
    vs->add_option("--mask", mask_path, "brain/phantom mask")->required()
        ->check(CLI::ExistingFile);
    add_vsharp_flags(vs, f);

    auto* r2 = app.add_subcommand("r2star", "fit mono-exponential decay");
    add_common(r2);
    r2->add_option("--gre", gre_manifest, "GRE manifest JSON")->required()
        ->check(CLI::ExistingFile);
    r2->add_option("--mask", mask_path, "fit mask")->required()->check(CLI::ExistingFile);

    auto* cs = app.add_subcommand("chisep", "separate para/diamagnetic susceptibility");
    add_common(cs);
    cs->add_option("--field", field_path, "tissue field map")->required()
        ->check(CLI::ExistingFile);
    cs->add_option("--mask", mask_path, "solver mask")->required()->check(CLI::ExistingFile);
    cs->add_option("--r2star", r2star_path, "R2* map")->required()->check(CLI::ExistingFile);
    add_solver_flags(cs, f);

    auto* hy = app.add_subcommand("hybrid", "build the T1 - 0.8*QSM contrast");
    add_common(hy);
    hy->add_option("--t1", t1_path, "T1-weighted volume")->required()->check(CLI::ExistingFile);
    hy->add_option("--qsm", qsm_path, "QSM volume (ppb)")->required()->check(CLI::ExistingFile);
    hy->add_flag("--no-scale", no_scale, "skip rescaling T1 to [0,255]");

    auto* at = app.add_subcommand("atlas", "aggregate co-registered subject maps");
    add_common(at);
    at->add_option("--manifest", manifest_csv, "CSV of id,path[,age,sex,site]")
        ->required()
        ->check(CLI::ExistingFile);
    at->add_option("--mask", mask_path, "common mask")->required()->check(CLI::ExistingFile);
    at->add_flag("--normalize-deciles", normalize_deciles_flag,
                 "standardize each map onto the cohort-average deciles first");

    auto* roi = app.add_subcommand("roi", "per-ROI median table across subjects");
    add_common(roi);
    roi->add_option("--manifest", manifest_csv, "CSV of id,chi_para,chi_dia,qsm paths")
        ->required()
        ->check(CLI::ExistingFile);
    roi->add_option("--labels", label_paths, "label volume (repeat for multiple sets)")
        ->required()
        ->check(CLI::ExistingFile);
    roi->add_option("--label-names", label_names, "JSON name table per label volume");

    auto* rg = app.add_subcommand("regress", "fit susceptibility against iron content");
    add_common(rg);
    rg->add_option("--csv", regress_csv, "two-column CSV: iron,chi_para")
        ->required()
        ->check(CLI::ExistingFile);

    auto* ra = app.add_subcommand("run-all", "simulate and run the full chain");
    add_common(ra);
    ra->add_option("--spec", phantom_json, "phantom spec JSON")
        ->required()
        ->check(CLI::ExistingFile);
    f.phase_sign.push_back(ra->add_option("--phase-sign", f.v_phase_sign, "+1 or -1"));
    add_vsharp_flags(ra, f);
    add_solver_flags(ra, f);

    CLI11_PARSE(app, argc, argv);

    try {
        const chisep::PipelineConfig cfg = build_config(config_path, f);
        if (sim->parsed()) report(chisep::run_simulate(cfg, phantom_json, out_dir));
        if (unwrap->parsed()) report(chisep::run_unwrap_combine(cfg, gre_manifest, out_dir));
        if (vs->parsed()) report(chisep::run_vsharp(cfg, field_path, mask_path, out_dir));
        if (r2->parsed()) report(chisep::run_r2star(cfg, gre_manifest, mask_path, out_dir));
        if (cs->parsed())
            report(chisep::run_chisep(cfg, field_path, mask_path, r2star_path, out_dir));
        if (hy->parsed()) report(chisep::run_hybrid(cfg, t1_path, qsm_path, out_dir, !no_scale));
        if (at->parsed())
            report(chisep::run_atlas(cfg, manifest_csv, mask_path, out_dir,
                                     normalize_deciles_flag));
        if (roi->parsed())
            report(chisep::run_roi(cfg, manifest_csv, label_paths, label_names, out_dir));
        if (rg->parsed()) report(chisep::run_regress(cfg, regress_csv, out_dir));
        if (ra->parsed()) report(chisep::run_all(cfg, phantom_json, out_dir));
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
