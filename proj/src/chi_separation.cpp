#include "chisep/chi_separation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <vector>

#include "chisep/fft.hpp"

namespace chisep {

void SolverConfig::validate() const {
    if (!(dr_para > 0.0) || !(dr_dia > 0.0))
        throw std::runtime_error("SolverConfig: relaxometric constants must be > 0");
    if (lambda_r2p < 0.0 || lambda_grad < 0.0)
        throw std::runtime_error("SolverConfig: negative regularization weight");
    if (max_iter < 1) throw std::runtime_error("SolverConfig: max_iter must be >= 1");
    if (!(tol > 0.0)) throw std::runtime_error("SolverConfig: tol must be > 0");
    if (!(step_safety > 0.0 && step_safety <= 1.0))
        throw std::runtime_error("SolverConfig: step_safety must be in (0,1]");
}

namespace {

// Dipole field operator on the kernel's grid with embed/crop to the volume
// grid. Real even spectrum + adjoint embed/crop pair make it self-adjoint.
class FieldOp {
public:
    FieldOp(const DipoleKernel& kernel, const Dims& vol_dims, double b0_tesla)
        : ker_(kernel),
          vd_(vol_dims),
          fft_(kernel.dims),
          scale_(kGammaBarHzPerTesla * b0_tesla * 1e-9),
          rbuf_(fft_.real_size()),
          cbuf_(fft_.spec_size()) {}

    double scale() const { return scale_; }

    // y = scale * crop(IFFT(D .* FFT(embed(x)))); safe to pass y == x.
    void apply(const std::vector<double>& x, std::vector<double>& y) {
        embed(x);
        fft_.forward(rbuf_.data(), cbuf_.data());
        for (std::size_t i = 0; i < cbuf_.size(); ++i) cbuf_[i] *= ker_.spectrum[i];
        fft_.inverse(cbuf_.data(), rbuf_.data());
        crop(y, scale_);
    }

    // Thresholded k-space division: x = crop(IFFT(FFT(embed(f/scale)) / D))
    // where |D| > thresh, zero elsewhere.
    void tkd(const std::vector<double>& f, std::vector<double>& x, double thresh) {
        embed(f);
        fft_.forward(rbuf_.data(), cbuf_.data());
        for (std::size_t i = 0; i < cbuf_.size(); ++i) {
            const double d = ker_.spectrum[i];
            cbuf_[i] = std::abs(d) > thresh ? cbuf_[i] / d : 0.0;
        }
        fft_.inverse(cbuf_.data(), rbuf_.data());
        crop(x, 1.0 / scale_);
    }

private:
    void embed(const std::vector<double>& x) {
        std::fill(rbuf_.begin(), rbuf_.end(), 0.0);
        const Dims& kd = ker_.dims;
        for (int z = 0; z < vd_[2]; ++z)
            for (int y = 0; y < vd_[1]; ++y) {
                const std::size_t src =
                    static_cast<std::size_t>(vd_[0]) * (y + static_cast<std::size_t>(vd_[1]) * z);
                const std::size_t dst =
                    static_cast<std::size_t>(kd[0]) * (y + static_cast<std::size_t>(kd[1]) * z);
                for (int i = 0; i < vd_[0]; ++i) rbuf_[dst + i] = x[src + i];
            }
    }

    void crop(std::vector<double>& out, double s) {
        const Dims& kd = ker_.dims;
        for (int z = 0; z < vd_[2]; ++z)
            for (int y = 0; y < vd_[1]; ++y) {
                const std::size_t src =
                    static_cast<std::size_t>(kd[0]) * (y + static_cast<std::size_t>(kd[1]) * z);
                const std::size_t dst =
                    static_cast<std::size_t>(vd_[0]) * (y + static_cast<std::size_t>(vd_[1]) * z);
                for (int i = 0; i < vd_[0]; ++i) out[dst + i] = s * rbuf_[src + i];
            }
    }

    const DipoleKernel& ker_;
    Dims vd_;
    Fft3d fft_;
    double scale_;
    std::vector<double> rbuf_;
    std::vector<std::complex<double>> cbuf_;
};

// out += lap_weight * grad^T grad x (forward differences, Neumann far edge).
void add_grad_sq(const std::vector<double>& x, const Dims& d, const Vec3& vox, double w,
                 std::vector<double>& out) {
    if (w == 0.0) return;
    auto idx = [&](int i, int j, int k) {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(d[0]) * (j + static_cast<std::size_t>(d[1]) * k);
    };
    const int strides[3] = {1, d[0], d[0] * d[1]};
    for (int ax = 0; ax < 3; ++ax) {
        const double iv2 = w / (vox[ax] * vox[ax]);
        const int n = d[ax];
        const std::size_t s = static_cast<std::size_t>(strides[ax]);
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i) {
                    const int p = ax == 0 ? i : (ax == 1 ? j : k);
                    const std::size_t c = idx(i, j, k);
                    const double fwd = p + 1 < n ? x[c + s] - x[c] : 0.0;
                    const double bwd = p > 0 ? x[c] - x[c - s] : 0.0;
                    out[c] += iv2 * (bwd - fwd);
                }
    }
}

double grad_energy(const std::vector<double>& x, const Dims& d, const Vec3& vox) {
    auto idx = [&](int i, int j, int k) {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(d[0]) * (j + static_cast<std::size_t>(d[1]) * k);
    };
    const int strides[3] = {1, d[0], d[0] * d[1]};
    double e = 0.0;
    for (int ax = 0; ax < 3; ++ax) {
        const double iv2 = 1.0 / (vox[ax] * vox[ax]);
        const int n = d[ax];
        const std::size_t s = static_cast<std::size_t>(strides[ax]);
        for (int k = 0; k < d[2]; ++k)
            for (int j = 0; j < d[1]; ++j)
                for (int i = 0; i < d[0]; ++i) {
                    const int p = ax == 0 ? i : (ax == 1 ? j : k);
                    if (p + 1 >= n) continue;
                    const std::size_t c = idx(i, j, k);
                    const double df = x[c + s] - x[c];
                    e += iv2 * df * df;
                }
    }
    return e;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

ChiSeparationResult separate(const FieldMap& field, const ScalarVolume& r2prime,
                             const BinaryMask& mask, const DipoleKernel& kernel,
                             double b0_tesla, const SolverConfig& cfg) {
    cfg.validate();
    field.validate();
    const ScalarVolume& f = field.volume;
    if (!r2prime.same_grid(f)) throw std::runtime_error("separate: r2prime grid mismatch");
    if (r2prime.unit != Unit::PerSecond)
        throw std::runtime_error("separate: r2prime must be a rate map (1/s)");
    if (mask.dims != f.dims) throw std::runtime_error("separate: mask grid mismatch");
    if (mask.count_true() == 0) throw std::runtime_error("separate: empty mask");
    for (int a = 0; a < 3; ++a)
        if (kernel.dims[a] < f.dims[a])
            throw std::runtime_error("separate: kernel grid smaller than volume");
    if (!(b0_tesla > 0.0)) throw std::runtime_error("separate: field strength must be > 0");

    const Dims d = f.dims;
    const Vec3 vox = f.voxel_mm;
    const std::size_t n = f.data.size();
    const double a_p = cfg.dr_para * 1e-3;  // (1/s) per ppb
    const double a_d = cfg.dr_dia * 1e-3;

    std::vector<double> m(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m[i] = mask.data[i] ? 1.0 : 0.0;

    // Normalize each data term by the RMS of its masked measurements.
    double sf2 = 0.0, sr2 = 0.0;
    {
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!mask.data[i]) continue;
            sf2 += f.data[i] * f.data[i];
            sr2 += r2prime.data[i] * r2prime.data[i];
            ++cnt;
        }
        sf2 = std::max(sf2 / cnt, 1e-24);
        sr2 = std::max(sr2 / cnt, 1e-24);
    }

    FieldOp op(kernel, d, b0_tesla);

    std::vector<double> cp(n), cd(n);
    {
        std::vector<double> chi0(n);
        op.tkd(f.data, chi0, 0.1);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = chi0[i] * m[i];
            cp[i] = std::max(v, 0.0);
            cd[i] = std::min(v, 0.0);
        }
    }

    // Largest curvature of the (quadratic) objective by power iteration on
    // its Hessian; the safe step is step_safety / L.
    double L;
    {
        std::mt19937_64 rng(7);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<double> xp(n), xd(n), yp(n), yd(n), fs(n), u(n);
        for (std::size_t i = 0; i < n; ++i) xp[i] = gauss(rng);
        for (std::size_t i = 0; i < n; ++i) xd[i] = gauss(rng);
        L = 1.0;
        for (int it = 0; it < 20; ++it) {
            const double nrm = std::sqrt(dot(xp, xp) + dot(xd, xd));
            for (std::size_t i = 0; i < n; ++i) {
                xp[i] /= nrm;
                xd[i] /= nrm;
            }
            for (std::size_t i = 0; i < n; ++i) fs[i] = xp[i] + xd[i];
            op.apply(fs, fs);
            for (std::size_t i = 0; i < n; ++i) fs[i] *= m[i];
            op.apply(fs, fs);
            for (std::size_t i = 0; i < n; ++i) {
                const double h = 2.0 * fs[i] / sf2;
                u[i] = (a_p * xp[i] - a_d * xd[i]) * m[i];
                yp[i] = h + 2.0 * cfg.lambda_r2p * a_p * u[i] / sr2;
                yd[i] = h - 2.0 * cfg.lambda_r2p * a_d * u[i] / sr2;
            }
            add_grad_sq(xp, d, vox, 2.0 * cfg.lambda_grad, yp);
            add_grad_sq(xd, d, vox, 2.0 * cfg.lambda_grad, yd);
            L = dot(xp, yp) + dot(xd, yd);
            xp.swap(yp);
            xd.swap(yd);
        }
        if (!(L > 0.0)) throw std::runtime_error("separate: degenerate operator norm");
    }
    const double step0 = cfg.step_safety / L;

    std::vector<double> rf(n), rr(n), fwd(n);
    auto objective = [&](const std::vector<double>& xp, const std::vector<double>& xd,
                         std::vector<double>& out_rf, std::vector<double>& out_rr) {
        for (std::size_t i = 0; i < n; ++i) fwd[i] = xp[i] + xd[i];
        op.apply(fwd, fwd);
        double jf = 0.0, jr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            out_rf[i] = (fwd[i] - f.data[i]) * m[i];
            out_rr[i] = (a_p * xp[i] - a_d * xd[i] - r2prime.data[i]) * m[i];
            jf += out_rf[i] * out_rf[i];
            jr += out_rr[i] * out_rr[i];
        }
        double j = jf / sf2 + cfg.lambda_r2p * jr / sr2;
        if (cfg.lambda_grad > 0.0)
            j += cfg.lambda_grad * (grad_energy(xp, d, vox) + grad_energy(xd, d, vox));
        return j;
    };

    double obj = objective(cp, cd, rf, rr);
    std::vector<double> gp(n), gd(n), tp(n), td(n), trf(n), trr(n);
    ChiSeparationResult res;
    res.converged = false;
    int iters = 0;
    while (iters < cfg.max_iter) {
        op.apply(rf, gp);  // self-adjoint field operator
        for (std::size_t i = 0; i < n; ++i) {
            const double h = 2.0 * gp[i] / sf2;
            const double r = 2.0 * cfg.lambda_r2p * rr[i] / sr2;
            gp[i] = h + a_p * r;
            gd[i] = h - a_d * r;
        }
        add_grad_sq(cp, d, vox, 2.0 * cfg.lambda_grad, gp);
        add_grad_sq(cd, d, vox, 2.0 * cfg.lambda_grad, gd);

        double s = step0;
        double obj_new = obj;
        bool accepted = false;
        for (int h = 0; h < 30; ++h, s *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) {
                tp[i] = std::max(cp[i] - s * gp[i], 0.0) * m[i];
                td[i] = std::min(cd[i] - s * gd[i], 0.0) * m[i];
            }
            obj_new = objective(tp, td, trf, trr);
            if (obj_new <= obj) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.converged = true;  // no feasible descent direction left
            break;
        }
        const double rel = std::abs(obj - obj_new) / std::max(obj, 1e-30);
        cp.swap(tp);
        cd.swap(td);
        rf.swap(trf);
        rr.swap(trr);
        obj = obj_new;
        ++iters;
        if (rel < cfg.tol) {
            res.converged = true;
            break;
        }
    }

    res.chi_para = ScalarVolume(d, vox, Unit::Ppb);
    res.chi_dia = ScalarVolume(d, vox, Unit::Ppb);
    res.qsm = ScalarVolume(d, vox, Unit::Ppb);
    res.chi_para.data = std::move(cp);
    res.chi_dia.data = std::move(cd);
    for (std::size_t i = 0; i < n; ++i)
        res.qsm.data[i] = res.chi_para.data[i] + res.chi_dia.data[i];
    res.iterations = iters;
    res.final_objective = obj;
    return res;
}

}  // namespace chisep
