#include "chisep/relaxometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace chisep {

namespace {

constexpr double kR2StarMax = 2000.0;
constexpr int kMaxIter = 50;
constexpr double kRelTol = 1e-8;

double sum_sq_residual(const std::vector<double>& te, const std::vector<double>& m, double s0,
                       double r2) {
    double sse = 0.0;
    for (std::size_t i = 0; i < te.size(); ++i) {
        const double r = s0 * std::exp(-r2 * te[i]) - m[i];
        sse += r * r;
    }
    return sse;
}

}  // namespace

R2StarFit fit_r2star(const MultiEchoGre& gre, const BinaryMask& mask) {
    gre.validate();
    const std::size_t ne = gre.te_s.size();
    if (ne < 3) throw std::runtime_error("fit_r2star: need at least 3 echoes");
    const ScalarVolume& ref = gre.magnitude[0];
    if (mask.dims != ref.dims) throw std::runtime_error("fit_r2star: mask grid mismatch");

    R2StarFit fit;
    fit.r2star = ScalarVolume(ref.dims, ref.voxel_mm, Unit::PerSecond);
    fit.s0 = ScalarVolume(ref.dims, ref.voxel_mm, Unit::Dimensionless);
    fit.residual_rms = ScalarVolume(ref.dims, ref.voxel_mm, Unit::Dimensionless);
    fit.valid = BinaryMask(ref.dims);

    const std::vector<double>& te = gre.te_s;
    std::vector<double> m(ne);
    const std::size_t nvox = ref.data.size();
    for (std::size_t v = 0; v < nvox; ++v) {
        if (!mask.data[v]) continue;
        int n_pos = 0;
        double m_max = 0.0;
        for (std::size_t e = 0; e < ne; ++e) {
            m[e] = gre.magnitude[e].data[v];
            if (m[e] > 0.0) ++n_pos;
            m_max = std::max(m_max, m[e]);
        }
        if (n_pos < 2) continue;  // underdetermined decay; leave voxel invalid

        // Log-linear start, floored so ln() stays defined on nonpositive echoes.
        const double eps = 1e-6 * m_max;
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        for (std::size_t e = 0; e < ne; ++e) {
            const double y = std::log(std::max(m[e], eps));
            sx += te[e];
            sy += y;
            sxx += te[e] * te[e];
            sxy += te[e] * y;
        }
        const double denom = ne * sxx - sx * sx;
        double r2 = std::clamp(-(ne * sxy - sx * sy) / denom, 0.0, kR2StarMax);
        double s0 = std::max(std::exp((sy + r2 * sx) / ne), 0.0);

        double sse = sum_sq_residual(te, m, s0, r2);
        for (int it = 0; it < kMaxIter; ++it) {
            // Normal equations of the 2-parameter Gauss-Newton step.
            double a11 = 0.0, a12 = 0.0, a22 = 0.0, b1 = 0.0, b2 = 0.0;
            for (std::size_t e = 0; e < ne; ++e) {
                const double ex = std::exp(-r2 * te[e]);
                const double res = s0 * ex - m[e];
                const double j1 = ex;            // d/dS0
                const double j2 = -s0 * te[e] * ex;  // d/dR2*
                a11 += j1 * j1;
                a12 += j1 * j2;
                a22 += j2 * j2;
                b1 -= j1 * res;
                b2 -= j2 * res;
            }
            const double det = a11 * a22 - a12 * a12;
            if (!(std::abs(det) > 1e-300)) break;
            double ds0 = (a22 * b1 - a12 * b2) / det;
            double dr2 = (a11 * b2 - a12 * b1) / det;

            double s0_new = s0, r2_new = r2, sse_new = sse;
            double damp = 1.0;
            bool accepted = false;
            for (int h = 0; h < 30; ++h, damp *= 0.5) {
                const double s0_try = std::max(s0 + damp * ds0, 0.0);
                const double r2_try = std::clamp(r2 + damp * dr2, 0.0, kR2StarMax);
                const double sse_try = sum_sq_residual(te, m, s0_try, r2_try);
                if (sse_try <= sse) {
                    s0_new = s0_try;
                    r2_new = r2_try;
                    sse_new = sse_try;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
            const double rel = (std::abs(s0_new - s0) + std::abs(r2_new - r2)) /
                               (std::abs(s0) + std::abs(r2) + 1e-30);
            s0 = s0_new;
            r2 = r2_new;
            sse = sse_new;
            if (rel < kRelTol) break;
        }

        fit.r2star.data[v] = r2;
        fit.s0.data[v] = s0;
        fit.residual_rms.data[v] = std::sqrt(sse / static_cast<double>(ne));
        fit.valid.data[v] = 1;
    }
    return fit;
}

ScalarVolume r2prime_from_r2star(const ScalarVolume& r2star, double r2_baseline) {
    if (r2star.unit != Unit::PerSecond)
        throw std::runtime_error("r2prime_from_r2star: input must be a rate map (1/s)");
    if (r2_baseline < 0.0) throw std::runtime_error("r2prime_from_r2star: negative baseline");
    ScalarVolume out(r2star.dims, r2star.voxel_mm, Unit::PerSecond);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = std::max(r2star.data[i] - r2_baseline, 0.0);
    return out;
}

}  // namespace chisep
