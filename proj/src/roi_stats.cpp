#include "chisep/roi_stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace chisep {

LabelVolume make_exclusive(const std::vector<LabelVolume>& labels) {
    if (labels.empty()) throw std::runtime_error("make_exclusive: no label volumes");
    for (const auto& l : labels) {
        l.validate();
        if (l.dims != labels[0].dims)
            throw std::runtime_error("make_exclusive: dimension mismatch");
    }

    LabelVolume out;
    out.dims = labels[0].dims;
    out.data.assign(grid_size(out.dims), 0);

    std::map<std::pair<std::size_t, std::int32_t>, std::int32_t> remap;
    std::int32_t next_id = 1;
    for (std::size_t s = 0; s < labels.size(); ++s)
        for (const auto& [id, name] : labels[s].names) {
            const std::int32_t fresh = next_id++;
            remap[{s, id}] = fresh;
            std::string out_name = name;
            // keep names unique across sources
            for (const auto& [eid, ename] : out.names)
                if (ename == out_name) {
                    out_name += "_" + std::to_string(s + 1);
                    break;
                }
            out.names[fresh] = out_name;
        }

    for (std::size_t v = 0; v < out.data.size(); ++v) {
        int claimants = 0;
        std::int32_t value = 0;
        for (std::size_t s = 0; s < labels.size(); ++s) {
            const std::int32_t id = labels[s].data[v];
            if (id == 0) continue;
            ++claimants;
            const auto it = remap.find({s, id});
            if (it == remap.end())
                throw std::runtime_error("make_exclusive: unnamed label id " + std::to_string(id));
            value = it->second;
        }
        out.data[v] = claimants == 1 ? value : 0;  // contested voxels excluded
    }
    return out;
}

double roi_median(const ScalarVolume& map, const LabelVolume& labels, std::int32_t roi) {
    if (labels.dims != map.dims) throw std::runtime_error("roi_median: label grid mismatch");
    std::vector<double> vals;
    for (std::size_t i = 0; i < map.data.size(); ++i)
        if (labels.data[i] == roi) vals.push_back(map.data[i]);
    if (vals.empty())
        throw std::runtime_error("roi_median: empty ROI " + std::to_string(roi));
    const std::size_t n = vals.size();
    const std::size_t mid = n / 2;
    std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
    const double upper = vals[mid];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(vals.begin(), vals.begin() + mid);
    return 0.5 * (lower + upper);
}

namespace {

std::pair<double, double> mean_sample_sd(const std::vector<std::vector<double>>& medians,
                                         std::size_t roi) {
    const double n = static_cast<double>(medians.size());
    double s = 0.0;
    for (const auto& subj : medians) s += subj[roi];
    const double mean = s / n;
    double ss = 0.0;
    for (const auto& subj : medians) {
        const double d = subj[roi] - mean;
        ss += d * d;
    }
    return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

RoiTable population_stats(const std::vector<std::string>& roi_names,
                          const std::vector<std::vector<double>>& chi_para_medians,
                          const std::vector<std::vector<double>>& chi_dia_medians,
                          const std::vector<std::vector<double>>& qsm_medians) {
    const std::size_t n_subj = chi_para_medians.size();
    if (n_subj < 2) throw std::runtime_error("population_stats: need at least 2 subjects");
    if (chi_dia_medians.size() != n_subj || qsm_medians.size() != n_subj)
        throw std::runtime_error("population_stats: subject count mismatch");
    const std::size_t n_roi = roi_names.size();
    for (const auto* mat : {&chi_para_medians, &chi_dia_medians, &qsm_medians})
        for (const auto& row : *mat)
            if (row.size() != n_roi) throw std::runtime_error("population_stats: ragged input");

    RoiTable table;
    table.reserve(n_roi);
    for (std::size_t r = 0; r < n_roi; ++r) {
        RoiRow row;
        row.roi_name = roi_names[r];
        row.n_subjects = static_cast<int>(n_subj);
        std::tie(row.chi_para_mean, row.chi_para_sd) = mean_sample_sd(chi_para_medians, r);
        std::tie(row.chi_dia_mean, row.chi_dia_sd) = mean_sample_sd(chi_dia_medians, r);
        std::tie(row.qsm_mean, row.qsm_sd) = mean_sample_sd(qsm_medians, r);
        table.push_back(std::move(row));
    }
    return table;
}

RegressionResult fit_regression(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 3) throw std::runtime_error("fit_regression: need at least 3 points");
    if (y.size() != n) throw std::runtime_error("fit_regression: x/y length mismatch");

    const double nd = static_cast<double>(n);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= nd;
    my /= nd;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw std::runtime_error("fit_regression: degenerate regressor");

    RegressionResult res;
    res.slope = sxy / sxx;
    res.intercept = my - res.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - (res.slope * x[i] + res.intercept);
        ss_res += e * e;
    }
    res.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;

    const double dof = nd - 2.0;
    const double s2 = ss_res / dof;
    const double se_slope = std::sqrt(s2 / sxx);
    const double se_int = std::sqrt(s2 * (1.0 / nd + mx * mx / sxx));

    const boost::math::students_t dist(dof);
    auto two_sided_p = [&](double t) {
        return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    };
    // exact fits have zero standard error; report p = 0 rather than NaN
    res.p_slope = se_slope > 0.0 ? two_sided_p(res.slope / se_slope) : 0.0;
    res.p_intercept = se_int > 0.0 ? two_sided_p(res.intercept / se_int)
                                   : (res.intercept == 0.0 ? 1.0 : 0.0);
    const double tcrit = boost::math::quantile(dist, 0.975);
    res.ci95_slope = {res.slope - tcrit * se_slope, res.slope + tcrit * se_slope};
    res.ci95_intercept = {res.intercept - tcrit * se_int, res.intercept + tcrit * se_int};
    return res;
}

}  // namespace chisep
