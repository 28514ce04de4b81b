#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dlq/delay_sim.hpp"
#include "dlq/kernel_grid.hpp"
#include "dlq/model.hpp"

namespace dlq {

/// Single risky asset dS = S (sigma lambda dt + sigma dW) traded with delay d.
struct MarketParams {
    double lambda = 0.0;  ///< risk premium
    double sigma = 1.0;
    double d = 0.0;
    double T = 1.0;
    double x0 = 0.0;      ///< initial wealth
    double c = 0.0;       ///< target mean of X_T

    void validate() const;
    double drift() const { return sigma * lambda; }
    /// Delayed LQ parameters with b = sigma lambda.
    ModelParams model() const;
};

struct FrontierPoint {
    double c = 0.0;
    double eta_star = 0.0;
    double xi_star = 0.0;  ///< c - eta_star
    double variance = 0.0;
};

/// min E[(X_T - xi)^2] = P11(0)(x0 - xi)^2 + R(x0 - xi, gamma).
/// Bitwise equal to value_of(grid, x0 - xi, gamma).
double inner_value(const KernelGrid& grid, double x0, const InitialSegment& gamma, double xi);

/// V0(c - eta) - eta^2, the concave outer objective in the multiplier.
double outer_objective(const KernelGrid& grid, double x0, double c, const InitialSegment& gamma,
                       double eta);

/// K(gamma) = int gamma_s P12(0,s) ds.
double segment_drift(const KernelGrid& grid, const InitialSegment& gamma);

struct Multiplier {
    double eta_star = 0.0;
    double xi_star = 0.0;
};

/// eta* = (K(gamma) + P11(0)(x0 - c)) / (1 - P11(0)), xi* = c - eta*.
/// Throws DegenerateFrontierError when P11(0) >= 1 - 1e-12.
Multiplier eta_star(const KernelGrid& grid, double x0, double c, const InitialSegment& gamma);

/// Minimal variance for target mean c, the maximum of the outer objective:
///   (x0 - c + K)^2 / (1 - P11(0)) - (x0 - c)^2 + R(0, gamma).
/// With gamma = 0 this is P11(0) / (1 - P11(0)) (x0 - c)^2.
FrontierPoint frontier_point(const KernelGrid& grid, double x0, double c,
                             const InitialSegment& gamma);
std::vector<FrontierPoint> frontier(const KernelGrid& grid, double x0, const InitialSegment& gamma,
                                    std::span<const double> c_list);

/// Same formulas on a two-asset grid; gamma is the pre-investment in the
/// delayed asset.
std::vector<FrontierPoint> two_asset_frontier(const KernelGrid& grid2, double x0,
                                              const InitialSegment& gamma,
                                              std::span<const double> c_list);

/// `c,eta_star,xi_star,variance`
void export_frontier_csv(std::span<const FrontierPoint> points, const std::filesystem::path& file);

}  // namespace dlq
