#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dlq/kernel_grid.hpp"
#include "dlq/model.hpp"

namespace dlq {

struct SolveConfig {
    /// Sup-norm Picard tolerance relative to max(1, |b|, b^2).
    double tol = 1e-12;
    /// Picard sweeps allowed on one (sub-)slice before it is bisected.
    int max_iter = 100;
    /// Minimum admissible P2hat2(t,0) for t < T-d. Defaults to 1e-10 sigma^2.
    std::optional<double> positivity_floor;

    void validate() const;
};

/// Two-asset market: one asset traded immediately, one with execution delay.
struct TwoAssetParams {
    double sigma1 = 1.0;
    double sigma2 = 1.0;
    double lambda1 = 0.0;  ///< risk premium of the undelayed asset
    double lambda2 = 0.0;  ///< risk premium of the delayed asset
    double rho = 0.0;      ///< Brownian correlation, |rho| < 1
    double d = 0.0;
    double T = 1.0;

    void validate() const;
    /// sigma2 (lambda2 - rho lambda1): boundary drift of the delayed asset.
    double effective_drift() const;
    /// sigma2 sqrt(1 - rho^2): residual volatility of the delayed asset.
    double effective_sigma() const;
    /// Single-asset parameters carrying the effective boundary coefficients.
    ModelParams effective_model() const;
};

struct SliceDiagnostics {
    int slice = 0;
    int lo = 0;
    int hi = 0;
    int iterations = 0;       ///< Picard sweeps over all sub-slices
    int bisections = 0;
    double residual = 0.0;    ///< largest final sweep change, relative
    double min_p11 = 0.0;
    double lower_bound = 0.0; ///< a_{n+1} when the sufficient condition holds, else NaN
    std::vector<double> residual_history;  ///< sweep changes of the first attempt
};

struct SolveDiagnostics {
    std::vector<SliceDiagnostics> slices;
    double min_p2hat2 = 0.0;  ///< min over t < T-d of P2hat2(t,0); +inf if no such t
    double min_p11 = 0.0;
    bool positivity_ok = true;
    bool sufficient_holds = false;
    double positivity_floor = 0.0;
    double tol = 0.0;
};

struct SolveResult {
    KernelGrid grid;
    SolveDiagnostics diagnostics;
};

/// Backward slice-by-slice Picard solve of the single-asset Riccati system.
///
/// Throws ConvergenceError when even a single-step sub-slice fails to
/// converge and PositivityError when P2hat2(t,0) drops to the floor for some
/// t < T-d (or P11 undercuts its proven lower bound a_{n+1}).
SolveResult solve_single(const ModelParams& params, const GridSpec& spec, const SolveConfig& cfg);

/// Same machinery with the undelayed-asset source terms and effective
/// boundary coefficients of the two-asset problem.
SolveResult solve_two_asset(const TwoAssetParams& params, const GridSpec& spec,
                            const SolveConfig& cfg);

/// Sup-norm finite-difference residuals of each equation of the system.
struct ResidualReport {
    double p11 = 0.0;         ///< P11' - lambda^2 P11 - P12(t,0)^2 / P2hat2(t,0)
    double p12 = 0.0;         ///< (d_t - d_s) P12 - ...
    double p22 = 0.0;         ///< (d_t - d_s - d_r) P22 - ...
    double boundary12 = 0.0;  ///< P12(t,-d) - b P11(t), t <= T-d
    double boundary22 = 0.0;  ///< P22(t,s,-d) - b P12(t,s), t <= T-d
    double terminal = 0.0;    ///< P11(T) - 1, P12(T,s), P22(T,s,r) for s,r > -d

    double max() const;
};

/// Forward differences along characteristics within each slice, with the
/// sources taken at the base node and the convention 0^2/0 = 0.
ResidualReport residual_report(const KernelGrid& grid);

}  // namespace dlq
