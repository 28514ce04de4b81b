#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dlq/kernel_grid.hpp"
#include "dlq/riccati_solver.hpp"

namespace dlq {

/// Control applied on [-d, 0] before the controller takes over.
class InitialSegment {
public:
    static InitialSegment constant(double value);
    /// Values on the s-grid -d, -d + h, ..., 0 (m + 1 entries).
    static InitialSegment table(std::vector<double> values);

    bool is_constant() const { return values_.empty(); }
    double constant_value() const { return constant_; }
    const std::vector<double>& values() const { return values_; }

    /// Node values for a grid with `m` steps per delay. Throws
    /// ParameterError when a table has the wrong length.
    std::vector<double> sample(int m) const;

private:
    double constant_ = 0.0;
    std::vector<double> values_;
};

struct SimConfig {
    int n_paths = 1;
    std::uint64_t master_seed = 0;
    double x0 = 0.0;
    /// Time step. Must match the kernel grid step when set.
    std::optional<double> h_sim;
    /// Replace every Gaussian increment by 0.
    bool zero_noise = false;
    /// Worker threads; 0 picks the hardware concurrency.
    unsigned threads = 0;

    void validate(const GridSpec& spec) const;
};

/// One Euler path on the solve grid. Node k of the state sits at t = k h;
/// `alpha[i]` is the control at t = (i - m) h, so the first m entries are
/// the initial segment and X[k+1] - X[k] = alpha[k] (b h + sigma dW[k]).
struct SimulatedPath {
    int m = 0;
    std::vector<double> t;
    std::vector<double> X;
    std::vector<double> alpha;
    std::vector<double> dW;

    double control(int k) const { return alpha[static_cast<std::size_t>(k + m)]; }
};

struct MCStats {
    double mean = 0.0;
    double variance = 0.0;  ///< unbiased sample variance
    double std_error = 0.0;
    int n_paths = 0;
};

MCStats mc_stats(std::span<const double> samples);

/// Trapezoid weights on the m + 1 nodes of a delay window.
std::vector<double> window_weights(const GridSpec& spec);

/// Node index of a time on the grid; throws DomainError off the nodes.
int time_node(const GridSpec& spec, double t);

/// Optimal delayed feedback at node k given the m previous controls
/// alpha_{k-m}, ..., alpha_{k-1}.
///
/// The window integral includes alpha_k itself through its trapezoid end
/// weight, so the law is solved for alpha_k (it is linear in it). Returns 0
/// once t > T - d. Throws DegeneracyError if P2hat2(t,0) <= 0 there.
double feedback_single(const KernelGrid& grid, int k, double x, std::span<const double> past,
                       double xi);
double feedback_single(const KernelGrid& grid, double t, double x, std::span<const double> past,
                       double xi);

/// Right-hand side of the feedback law for a full window alpha_{k-m..k}.
/// A control is optimal exactly when it is a fixed point of this map.
double feedback_map(const KernelGrid& grid, int k, double x, std::span<const double> window,
                    double xi);

struct TwoAssetControl {
    double alpha = 0.0;  ///< undelayed asset
    double beta = 0.0;   ///< delayed asset
};

/// Optimal pair at node k for the two-asset market. `past_beta` holds
/// beta_{k-m}, ..., beta_{k-1}; beta_{k-m} is the delayed position now
/// taking effect. Throws DegeneracyError if P11(t) <= 0.
TwoAssetControl feedback_two_asset(const KernelGrid& grid, const TwoAssetParams& params, int k,
                                   double x, std::span<const double> past_beta, double xi);

struct ControlContext {
    int k = 0;
    double t = 0.0;
    double x = 0.0;
    std::span<const double> past;  ///< alpha_{k-m}, ..., alpha_{k-1}
};

using Strategy = std::function<double(const ControlContext&)>;

Strategy optimal_strategy(const KernelGrid& grid, double xi);

/// Simulates cfg.n_paths paths of dX = alpha_{t-d} (b dt + sigma dW).
/// Path i draws from a generator keyed by (master_seed, i) only, so the
/// output does not depend on the thread count.
/// Throws SimulationError on a non-finite state.
std::vector<SimulatedPath> simulate(const KernelGrid& grid, const InitialSegment& gamma,
                                    const SimConfig& cfg, const Strategy& strategy);

/// Reduces each path to one number without keeping the paths.
using PathFunctional = std::function<double(const SimulatedPath&)>;
std::vector<double> simulate_reduce(const KernelGrid& grid, const InitialSegment& gamma,
                                    const SimConfig& cfg, const Strategy& strategy,
                                    const PathFunctional& reduce);

/// Terminal states X_T of all paths.
std::vector<double> simulate_terminal(const KernelGrid& grid, const InitialSegment& gamma,
                                      const SimConfig& cfg, const Strategy& strategy);

/// V(x, gamma) = P11(0) x^2 + 2 x <P12(0,.), gamma> + <P2hat2(0,.), gamma^2>
///             + <P22(0,.,.) gamma, gamma>, trapezoid rule in s and r.
double value_of(const KernelGrid& grid, double x, const InitialSegment& gamma);

/// Everything in the running value except P11(t) y^2:
/// 2 y <P12(t,.), a> + <P2hat2(t,.), a^2> + <P22(t,.,.) a, a>.
double window_cost(const KernelGrid& grid, int k, double y, std::span<const double> window);

/// Same quadratic form at row k with y = X_t - xi and the control window
/// alpha_{k-m}, ..., alpha_k.
double running_value(const KernelGrid& grid, int k, double y, std::span<const double> window);

/// Per-step residuals V_{k+1} - V_k - P2hat2(t_k,0) (alpha_k - feedback_map_k)^2 h
/// along a path. The terminal value is (X_T - xi)^2. Their sum has mean 0
/// for any strategy (up to O(h)); with zero noise each step carries the
/// missing quadratic-variation term -sigma^2 P11(t) alpha_{t-d}^2 h.
std::vector<double> martingale_residual(const KernelGrid& grid, const SimulatedPath& path,
                                        double xi);

struct TwoAssetPath {
    int m = 0;
    std::vector<double> t;
    std::vector<double> X;
    std::vector<double> alpha;  ///< undelayed control at nodes 0..n_t-1
    std::vector<double> beta;   ///< delayed control, offset by m like SimulatedPath::alpha
    std::vector<double> dW1;
    std::vector<double> dW2;    ///< rho dW1 + sqrt(1 - rho^2) dB
};

std::vector<TwoAssetPath> simulate_two_asset(const KernelGrid& grid, const TwoAssetParams& params,
                                             const InitialSegment& gamma, const SimConfig& cfg,
                                             double xi);
std::vector<double> simulate_two_asset_terminal(const KernelGrid& grid,
                                                const TwoAssetParams& params,
                                                const InitialSegment& gamma, const SimConfig& cfg,
                                                double xi);

/// `path_id,t,X,alpha`; rows before t = 0 carry the initial segment with an
/// empty X field.
void export_paths_csv(std::span<const SimulatedPath> paths, const std::filesystem::path& file);
/// `path_id,t,X,alpha,beta` with alpha the undelayed and beta the delayed control.
void export_paths_csv(std::span<const TwoAssetPath> paths, const std::filesystem::path& file);

}  // namespace dlq
