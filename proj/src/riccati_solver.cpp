#include "dlq/riccati_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dlq/errors.hpp"

namespace dlq {

void SolveConfig::validate() const {
    if (!(tol > 0.0) || !std::isfinite(tol)) {
        throw ParameterError("solver tol must be > 0");
    }
    if (max_iter < 1) {
        throw ParameterError("solver max_iter must be >= 1");
    }
    if (positivity_floor && !(*positivity_floor >= 0.0)) {
        throw ParameterError("positivity_floor must be >= 0");
    }
}

void TwoAssetParams::validate() const {
    for (double v : {sigma1, sigma2, lambda1, lambda2, rho, d, T}) {
        if (!std::isfinite(v)) {
            throw ParameterError("two-asset parameters must be finite");
        }
    }
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) {
        throw ParameterError("sigma1 and sigma2 must be > 0");
    }
    if (!(std::abs(rho) < 1.0)) {
        throw ParameterError("correlation must satisfy |rho| < 1");
    }
    if (d < 0.0 || !(T > 0.0)) {
        throw ParameterError("need d >= 0 and T > 0");
    }
}

double TwoAssetParams::effective_drift() const { return sigma2 * (lambda2 - rho * lambda1); }

double TwoAssetParams::effective_sigma() const { return sigma2 * std::sqrt(1.0 - rho * rho); }

ModelParams TwoAssetParams::effective_model() const {
    return ModelParams{effective_drift(), effective_sigma(), d, T};
}

double ResidualReport::max() const {
    return std::max({p11, p12, p22, boundary12, boundary22, terminal});
}

namespace {

struct Coefficients {
    double b = 0.0;
    double sigma2 = 1.0;
    double lambda_sq = 0.0;
};

/// Picard iteration of the characteristic integral equations on rows
/// [lo, hi) of one slice, row `hi` being already known.
///
/// One sweep freezes the source terms at the previous iterate and integrates
/// them backward along the characteristics (t + x, s - x, r - x) with the
/// composite trapezoid rule. The linear lambda^2 terms are carried by an
/// exact integrating factor. Exit values come from the boundary s = -d (built
/// from the P11 / P12 of the same sweep) or from the known row `hi`.
class SliceMarcher {
public:
    SliceMarcher(KernelGrid& grid, Coefficients coeffs, double tol, int max_iter, double floor)
        : grid_(grid),
          c_(coeffs),
          tol_(tol),
          max_iter_(max_iter),
          floor_(floor),
          m_(grid.spec().m),
          w_(static_cast<std::size_t>(grid.spec().m + 1)),
          h_(grid.spec().h),
          scale_(std::max({1.0, std::abs(coeffs.b), coeffs.b * coeffs.b})) {}

    /// Solves rows [lo, hi), bisecting on non-convergence.
    void solve(int slice, int lo, int hi, bool quotient_active, SliceDiagnostics& diag) {
        const bool first = diag.iterations == 0 && diag.residual_history.empty();
        double residual = 0.0;
        int iterations = 0;
        const bool ok = picard(lo, hi, quotient_active, residual, iterations,
                               first ? &diag.residual_history : nullptr);
        diag.iterations += iterations;
        if (ok) {
            diag.residual = std::max(diag.residual, residual);
            return;
        }
        if (hi - lo <= 1) {
            std::ostringstream msg;
            msg << "Picard iteration did not converge on slice " << slice << " at t = "
                << grid_.spec().t(lo) << " (relative residual " << residual << " after "
                << iterations << " sweeps)";
            throw ConvergenceError(slice, residual, msg.str());
        }
        ++diag.bisections;
        const int mid = lo + (hi - lo) / 2;
        solve(slice, mid, hi, quotient_active, diag);
        solve(slice, lo, mid, quotient_active, diag);
    }

private:
    std::size_t rows_of(int lo, int hi) const { return static_cast<std::size_t>(hi - lo + 1); }

    bool picard(int lo, int hi, bool active, double& residual, int& iterations,
                std::vector<double>* history) {
        initial_iterate(lo, hi);
        const std::size_t rows = rows_of(lo, hi);
        n11_.assign(rows, 0.0);
        n12_.assign(rows * w_, 0.0);
        n22_.assign(rows * w_ * w_, 0.0);
        s11_.assign(rows, 0.0);
        s12_.assign(rows * w_, 0.0);
        s22_.assign(rows * w_ * w_, 0.0);

        residual = std::numeric_limits<double>::infinity();
        for (iterations = 1; iterations <= max_iter_; ++iterations) {
            sources(lo, hi, active);
            march(lo, hi);
            residual = commit(lo, hi) / scale_;
            if (history) {
                history->push_back(residual);
            }
            if (!std::isfinite(residual)) {
                return false;
            }
            if (residual <= tol_) {
                return true;
            }
        }
        iterations = max_iter_;
        return false;
    }

    void initial_iterate(int lo, int hi) {
        const double top11 = grid_.p11(hi);
        const auto top12 = grid_.p12_row(hi);
        const auto top22 = grid_.p22_row(hi);
        for (int k = lo; k < hi; ++k) {
            grid_.p11_data()[static_cast<std::size_t>(k)] = top11;
            std::copy(top12.begin(), top12.end(), grid_.p12_row(k).begin());
            std::copy(top22.begin(), top22.end(), grid_.p22_row(k).begin());
        }
    }

    void sources(int lo, int hi, bool active) {
        for (int k = lo; k <= hi; ++k) {
            const auto i = static_cast<std::size_t>(k - lo);
            const auto p12 = grid_.p12_row(k);
            const auto p22 = grid_.p22_row(k);
            double* s12 = s12_.data() + i * w_;
            double* s22 = s22_.data() + i * w_ * w_;

            // Convention 0^2/0 = 0: no quotient where P2hat2(t,0) vanishes.
            double inv_hat = 0.0;
            if (active) {
                const double hat = c_.sigma2 * grid_.p11(k + m_);
                inv_hat = hat > 0.0 ? 1.0 / hat : 0.0;
            }
            const double p12_0 = p12[static_cast<std::size_t>(m_)];
            s11_[i] = p12_0 * p12_0 * inv_hat;

            // Column s = 0 of P22, i.e. P22(t, j, 0) = P22(t, 0, j) by symmetry.
            const double* col0 = p22.data() + static_cast<std::size_t>(m_) * w_;
            for (std::size_t j = 0; j < w_; ++j) {
                s12[j] = p12_0 * col0[j] * inv_hat;
            }

            double lin = 0.0;
            if (c_.lambda_sq != 0.0) {
                const double p11 = grid_.p11(k);
                if (!(p11 > floor_)) {
                    throw PositivityError(grid_.spec().slice_of_step(std::min(k, grid_.spec().n_t - 1)),
                                          "P11 reached the positivity floor at t = " +
                                              std::to_string(grid_.spec().t(k)));
                }
                lin = c_.lambda_sq / p11;
            }
            for (std::size_t j = 0; j < w_; ++j) {
                const double qj = col0[j] * inv_hat;
                const double pj = lin * p12[j];
                double* out = s22 + j * w_;
                for (std::size_t l = 0; l < w_; ++l) {
                    out[l] = qj * col0[l] + pj * p12[l];
                }
            }
        }
    }

    void march(int lo, int hi) {
        const std::size_t top = rows_of(lo, hi) - 1;
        const double b = c_.b;
        const double decay = std::exp(-c_.lambda_sq * h_);
        const double half = 0.5 * h_;

        n11_[top] = grid_.p11(hi);
        std::copy_n(grid_.p12_row(hi).begin(), w_, n12_.begin() + static_cast<std::ptrdiff_t>(top * w_));
        std::copy_n(grid_.p22_row(hi).begin(), w_ * w_,
                    n22_.begin() + static_cast<std::ptrdiff_t>(top * w_ * w_));

        for (std::size_t i = top; i-- > 0;) {
            const std::size_t up = i + 1;
            n11_[i] = decay * n11_[up] - half * (s11_[i] + decay * s11_[up]);

            double* n12 = n12_.data() + i * w_;
            const double* n12_up = n12_.data() + up * w_;
            const double* s12 = s12_.data() + i * w_;
            const double* s12_up = s12_.data() + up * w_;
            n12[0] = b * n11_[i];
            for (std::size_t j = 1; j < w_; ++j) {
                n12[j] = decay * n12_up[j - 1] - half * (s12[j] + decay * s12_up[j - 1]);
            }

            double* n22 = n22_.data() + i * w_ * w_;
            const double* n22_up = n22_.data() + up * w_ * w_;
            const double* s22 = s22_.data() + i * w_ * w_;
            const double* s22_up = s22_.data() + up * w_ * w_;
            for (std::size_t l = 0; l < w_; ++l) {
                n22[l] = b * n12[l];
                n22[l * w_] = b * n12[l];
            }
            for (std::size_t j = 1; j < w_; ++j) {
                const double* from = n22_up + (j - 1) * w_ - 1;
                const double* src = s22 + j * w_;
                const double* src_up = s22_up + (j - 1) * w_ - 1;
                double* out = n22 + j * w_;
                for (std::size_t l = j; l < w_; ++l) {
                    out[l] = from[l] - half * (src[l] + src_up[l]);
                }
                for (std::size_t l = j + 1; l < w_; ++l) {
                    n22[l * w_ + j] = out[l];
                }
            }
        }
    }

    /// Writes the new iterate into the grid and returns the sup-norm change.
    double commit(int lo, int hi) {
        double change = 0.0;
        auto track = [&change](double a, double b) {
            const double diff = std::abs(a - b);
            if (!(diff <= change)) {
                change = std::isnan(diff) ? std::numeric_limits<double>::infinity() : diff;
            }
        };
        for (int k = lo; k < hi; ++k) {
            const auto i = static_cast<std::size_t>(k - lo);
            double& p11 = grid_.p11_data()[static_cast<std::size_t>(k)];
            track(p11, n11_[i]);
            p11 = n11_[i];
            auto p12 = grid_.p12_row(k);
            const double* n12 = n12_.data() + i * w_;
            for (std::size_t j = 0; j < w_; ++j) {
                track(p12[j], n12[j]);
                p12[j] = n12[j];
            }
            auto p22 = grid_.p22_row(k);
            const double* n22 = n22_.data() + i * w_ * w_;
            for (std::size_t q = 0; q < w_ * w_; ++q) {
                track(p22[q], n22[q]);
                p22[q] = n22[q];
            }
        }
        return change;
    }

    KernelGrid& grid_;
    Coefficients c_;
    double tol_;
    int max_iter_;
    double floor_;
    int m_;
    std::size_t w_;
    double h_;
    double scale_;
    std::vector<double> n11_, n12_, n22_;
    std::vector<double> s11_, s12_, s22_;
};

/// Terminal row t = T with the boundary corner values b P11(T), b P12(T,-d).
void set_terminal_row(KernelGrid& grid, double b) {
    const int n_t = grid.spec().n_t;
    grid.p11_data()[static_cast<std::size_t>(n_t)] = 1.0;
    auto p12 = grid.p12_row(n_t);
    auto p22 = grid.p22_row(n_t);
    std::fill(p12.begin(), p12.end(), 0.0);
    std::fill(p22.begin(), p22.end(), 0.0);
    p12[0] = b;
    p22[0] = b * b;
    grid.mark_solved(n_t, n_t);
}

void check_spec(double d, double T, const GridSpec& spec) {
    if (std::abs(spec.d - d) > 1e-12 * std::max(1.0, d)) {
        throw ParameterError("grid spec delay does not match the model delay");
    }
    if (std::abs(spec.T_requested - T) > 1e-12 * std::max(1.0, T)) {
        throw ParameterError("grid spec horizon does not match the model horizon");
    }
}

SliceDiagnostics top_slice_diagnostics(const KernelGrid& grid) {
    const GridSpec& spec = grid.spec();
    SliceDiagnostics diag;
    diag.slice = 0;
    diag.lo = spec.slices[0].lo;
    diag.hi = spec.slices[0].hi;
    diag.lower_bound = std::numeric_limits<double>::quiet_NaN();
    diag.min_p11 = std::numeric_limits<double>::infinity();
    for (int k = diag.lo; k <= diag.hi; ++k) {
        diag.min_p11 = std::min(diag.min_p11, grid.p11(k));
    }
    return diag;
}

/// Runs slices 1.. of `grid` (top slice already filled) and fills the
/// diagnostics. `feasible` carries the lower-bound sequence when the
/// sufficient condition is known to hold.
void run_slices(KernelGrid& grid, const Coefficients& coeffs, const SolveConfig& cfg,
                double floor, const FeasibilityReport* feasible, SolveDiagnostics& diag) {
    const GridSpec& spec = grid.spec();
    const int m = spec.m;
    const int n_t = spec.n_t;
    const double slack = std::max(1e-9, 10.0 * cfg.tol);
    SliceMarcher marcher(grid, coeffs, cfg.tol, cfg.max_iter, floor);

    for (std::size_t n = 1; n < spec.slices.size(); ++n) {
        const SliceBounds bounds = spec.slices[n];
        const int slice = static_cast<int>(n);
        SliceDiagnostics sd;
        sd.slice = slice;
        sd.lo = bounds.lo;
        sd.hi = bounds.hi;
        marcher.solve(slice, bounds.lo, bounds.hi, true, sd);
        grid.mark_solved(bounds.lo, bounds.hi);

        sd.min_p11 = std::numeric_limits<double>::infinity();
        for (int k = bounds.lo; k <= bounds.hi; ++k) {
            sd.min_p11 = std::min(sd.min_p11, grid.p11(k));
        }
        sd.lower_bound = std::numeric_limits<double>::quiet_NaN();
        if (feasible) {
            sd.lower_bound = feasible->a(slice + 1);
        }
        diag.slices.push_back(sd);

        // P2hat2(t,0) = sigma^2 P11(t+d) for t < T-d reads P11 on [d, T).
        for (int k = std::max(bounds.lo, m); k <= std::min(bounds.hi, n_t - 1); ++k) {
            const double hat = grid.sigma2() * grid.p11(k);
            if (!(hat > floor)) {
                diag.positivity_ok = false;
                std::ostringstream msg;
                msg << "P2hat2(t,0) = " << hat << " <= floor " << floor << " at t = "
                    << spec.t(k - m) << " (slice " << slice << ")";
                throw PositivityError(slice, msg.str());
            }
        }
        if (feasible && sd.min_p11 < sd.lower_bound - slack) {
            std::ostringstream msg;
            msg << "P11 = " << sd.min_p11 << " undercuts its lower bound a_" << slice + 1 << " = "
                << sd.lower_bound << " on slice " << slice;
            throw PositivityError(slice, msg.str());
        }
    }

    diag.min_p11 = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= n_t; ++k) {
        diag.min_p11 = std::min(diag.min_p11, grid.p11(k));
    }
    diag.min_p2hat2 = std::numeric_limits<double>::infinity();
    for (int k = m; k < n_t; ++k) {
        diag.min_p2hat2 = std::min(diag.min_p2hat2, grid.sigma2() * grid.p11(k));
    }
    diag.positivity_ok = diag.min_p2hat2 > floor;
}

}  // namespace

SolveResult solve_single(const ModelParams& params, const GridSpec& spec, const SolveConfig& cfg) {
    params.validate();
    cfg.validate();
    check_spec(params.d, params.T, spec);

    const double floor = cfg.positivity_floor.value_or(1e-10 * params.sigma * params.sigma);
    const int cap = std::max(default_feasibility_cap(params), static_cast<int>(spec.slices.size()) + 1);
    const FeasibilityReport report = feasibility(params, cap);

    SolveResult result{init_top_slice(params, spec), {}};
    result.diagnostics.tol = cfg.tol;
    result.diagnostics.positivity_floor = floor;
    result.diagnostics.sufficient_holds = report.sufficient_holds;
    result.diagnostics.slices.push_back(top_slice_diagnostics(result.grid));

    const Coefficients coeffs{params.b, params.sigma * params.sigma, 0.0};
    run_slices(result.grid, coeffs, cfg, floor, report.sufficient_holds ? &report : nullptr,
               result.diagnostics);
    return result;
}

SolveResult solve_two_asset(const TwoAssetParams& params, const GridSpec& spec,
                            const SolveConfig& cfg) {
    params.validate();
    cfg.validate();
    check_spec(params.d, params.T, spec);

    const ModelParams effective = params.effective_model();
    const double lambda_sq = params.lambda1 * params.lambda1;
    const double sigma2 = effective.sigma * effective.sigma;
    const double floor = cfg.positivity_floor.value_or(1e-10 * sigma2);
    const Coefficients coeffs{effective.b, sigma2, lambda_sq};

    SolveResult result{KernelGrid(effective, spec, lambda_sq), {}};
    result.diagnostics.tol = cfg.tol;
    result.diagnostics.positivity_floor = floor;

    if (lambda_sq == 0.0) {
        result.grid = init_top_slice(effective, spec);
        result.diagnostics.slices.push_back(top_slice_diagnostics(result.grid));
    } else {
        // On the top slice P2hat2(t,0) = 0, so only the undelayed-asset terms act.
        set_terminal_row(result.grid, effective.b);
        SliceDiagnostics top;
        top.slice = 0;
        top.lo = spec.slices[0].lo;
        top.hi = spec.slices[0].hi;
        top.lower_bound = std::numeric_limits<double>::quiet_NaN();
        SliceMarcher marcher(result.grid, coeffs, cfg.tol, cfg.max_iter, floor);
        marcher.solve(0, top.lo, top.hi, false, top);
        result.grid.mark_solved(top.lo, top.hi);
        top.min_p11 = std::numeric_limits<double>::infinity();
        for (int k = top.lo; k <= top.hi; ++k) {
            top.min_p11 = std::min(top.min_p11, result.grid.p11(k));
        }
        result.diagnostics.slices.push_back(top);
    }
    // The a_n bounds are specific to the single-asset system.
    result.diagnostics.sufficient_holds = false;
    run_slices(result.grid, coeffs, cfg, floor, nullptr, result.diagnostics);
    return result;
}

ResidualReport residual_report(const KernelGrid& grid) {
    const GridSpec& spec = grid.spec();
    const int m = spec.m;
    const int n_t = spec.n_t;
    const double h = spec.h;
    const double b = grid.params().b;
    const double lambda_sq = grid.undelayed_rate();
    ResidualReport rep;

    for (int k = 0; k < n_t; ++k) {
        if (!grid.row_solved(k) || !grid.row_solved(k + 1)) {
            continue;
        }
        // Steps inside the top slice see P2hat2(t,0) = 0.
        const bool active = spec.slice_of_step(k) > 0;
        double inv_hat = 0.0;
        if (active) {
            const double hat = grid.p2hat2(k, m);
            inv_hat = hat > 0.0 ? 1.0 / hat : 0.0;
        }
        const double p12_0 = grid.p12(k, m);
        const double lin = lambda_sq != 0.0 ? lambda_sq / grid.p11(k) : 0.0;

        const double d11 = (grid.p11(k + 1) - grid.p11(k)) / h;
        rep.p11 = std::max(rep.p11, std::abs(d11 - lambda_sq * grid.p11(k) - p12_0 * p12_0 * inv_hat));

        for (int j = 1; j <= m; ++j) {
            const double d12 = (grid.p12(k + 1, j - 1) - grid.p12(k, j)) / h;
            const double rhs = lambda_sq * grid.p12(k, j) + p12_0 * grid.p22(k, j, m) * inv_hat;
            rep.p12 = std::max(rep.p12, std::abs(d12 - rhs));
            for (int l = 1; l <= m; ++l) {
                const double d22 = (grid.p22(k + 1, j - 1, l - 1) - grid.p22(k, j, l)) / h;
                const double rhs22 = grid.p22(k, j, m) * grid.p22(k, m, l) * inv_hat +
                                     lin * grid.p12(k, j) * grid.p12(k, l);
                rep.p22 = std::max(rep.p22, std::abs(d22 - rhs22));
            }
        }
    }

    for (int k = 0; k <= n_t - m; ++k) {
        if (k < 0 || !grid.row_solved(k)) {
            continue;
        }
        rep.boundary12 = std::max(rep.boundary12, std::abs(grid.p12(k, 0) - b * grid.p11(k)));
        for (int j = 0; j <= m; ++j) {
            rep.boundary22 = std::max(rep.boundary22, std::abs(grid.p22(k, j, 0) - b * grid.p12(k, j)));
            rep.boundary22 = std::max(rep.boundary22, std::abs(grid.p22(k, 0, j) - b * grid.p12(k, j)));
        }
    }

    if (grid.row_solved(n_t)) {
        rep.terminal = std::abs(grid.p11(n_t) - 1.0);
        for (int j = 1; j <= m; ++j) {
            rep.terminal = std::max(rep.terminal, std::abs(grid.p12(n_t, j)));
        }
        for (int j = 0; j <= m; ++j) {
            for (int l = 0; l <= m; ++l) {
                if (j == 0 && l == 0) continue;
                rep.terminal = std::max(rep.terminal, std::abs(grid.p22(n_t, j, l)));
            }
        }
    }
    return rep;
}

}  // namespace dlq
