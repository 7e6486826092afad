// Label handling, robust ROI extraction, population tables, and the
// susceptibility-vs-iron regression.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "chisep/types.hpp"

namespace chisep {

struct RoiRow {
    std::string roi_name;
    int n_subjects = 0;
    double chi_para_mean = 0.0, chi_para_sd = 0.0;
    double chi_dia_mean = 0.0, chi_dia_sd = 0.0;
    double qsm_mean = 0.0, qsm_sd = 0.0;
};
using RoiTable = std::vector<RoiRow>;

struct RegressionResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::array<double, 2> ci95_slope{};      // two-sided 95% interval
    std::array<double, 2> ci95_intercept{};
    double p_slope = 1.0;      // two-sided t-test, n-2 dof
    double p_intercept = 1.0;
};

// Merges several label volumes into one, giving every (source, label) pair a
// fresh id. Voxels claimed by more than one source volume are contested and
// become background in the output — removed from all claimants, not awarded
// by priority.
LabelVolume make_exclusive(const std::vector<LabelVolume>& labels);

// Exact median of the map values under the given label (mean of the two
// middle values for even counts). Empty ROI is an error.
double roi_median(const ScalarVolume& map, const LabelVolume& labels, std::int32_t roi);

// Per-ROI population mean and sample SD of per-subject medians. Each matrix
// is indexed [subject][roi] and must be rectangular with >= 2 subjects.
RoiTable population_stats(const std::vector<std::string>& roi_names,
                          const std::vector<std::vector<double>>& chi_para_medians,
                          const std::vector<std::vector<double>>& chi_dia_medians,
                          const std::vector<std::vector<double>>& qsm_medians);

// Ordinary least squares y ~ slope*x + intercept with R^2, 95% confidence
// intervals, and two-sided t-tests on both coefficients (n-2 dof).
// Needs >= 3 points and a non-constant regressor.
RegressionResult fit_regression(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace chisep
