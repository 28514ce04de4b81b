#include "dlq/markowitz.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include "dlq/errors.hpp"

namespace dlq {

void MarketParams::validate() const {
    for (double v : {lambda, sigma, d, T, x0, c}) {
        if (!std::isfinite(v)) {
            throw ParameterError("market parameters must be finite");
        }
    }
    if (!(sigma > 0.0)) {
        throw ParameterError("sigma must be > 0");
    }
    model().validate();
}

ModelParams MarketParams::model() const { return ModelParams{drift(), sigma, d, T}; }

double inner_value(const KernelGrid& grid, double x0, const InitialSegment& gamma, double xi) {
    const double y = x0 - xi;
    const std::vector<double> nodes = gamma.sample(grid.spec().m);
    const double cost = window_cost(grid, 0, y, nodes);
    return grid.p11(0) * y * y + cost;
}

double outer_objective(const KernelGrid& grid, double x0, double c, const InitialSegment& gamma,
                       double eta) {
    return inner_value(grid, x0, gamma, c - eta) - eta * eta;
}

double segment_drift(const KernelGrid& grid, const InitialSegment& gamma) {
    const std::vector<double> nodes = gamma.sample(grid.spec().m);
    const std::vector<double> w = window_weights(grid.spec());
    double k = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        k += w[j] * nodes[j] * grid.p12(0, static_cast<int>(j));
    }
    return k;
}

namespace {

double concavity_gap(const KernelGrid& grid) {
    const double p11 = grid.p11(0);
    if (!(p11 < 1.0 - 1e-12)) {
        throw DegenerateFrontierError("P11(0) = " + std::to_string(p11) +
                                      " leaves no concavity in the outer problem");
    }
    return 1.0 - p11;
}

}  // namespace

Multiplier eta_star(const KernelGrid& grid, double x0, double c, const InitialSegment& gamma) {
    const double gap = concavity_gap(grid);
    const double k = segment_drift(grid, gamma);
    Multiplier out;
    out.eta_star = (k + grid.p11(0) * (x0 - c)) / gap;
    out.xi_star = c - out.eta_star;
    return out;
}

FrontierPoint frontier_point(const KernelGrid& grid, double x0, double c,
                             const InitialSegment& gamma) {
    const double gap = concavity_gap(grid);
    const double k = segment_drift(grid, gamma);
    const double a = x0 - c;
    const double segment = window_cost(grid, 0, 0.0, gamma.sample(grid.spec().m));

    FrontierPoint p;
    p.c = c;
    p.eta_star = (k + grid.p11(0) * a) / gap;
    p.xi_star = c - p.eta_star;
    p.variance = (a + k) * (a + k) / gap - a * a + segment;
    return p;
}

std::vector<FrontierPoint> frontier(const KernelGrid& grid, double x0, const InitialSegment& gamma,
                                    std::span<const double> c_list) {
    std::vector<FrontierPoint> out;
    out.reserve(c_list.size());
    for (double c : c_list) {
        out.push_back(frontier_point(grid, x0, c, gamma));
    }
    return out;
}

std::vector<FrontierPoint> two_asset_frontier(const KernelGrid& grid2, double x0,
                                              const InitialSegment& gamma,
                                              std::span<const double> c_list) {
    return frontier(grid2, x0, gamma, c_list);
}

void export_frontier_csv(std::span<const FrontierPoint> points, const std::filesystem::path& file) {
    struct Closer {
        void operator()(std::FILE* f) const { std::fclose(f); }
    };
    std::unique_ptr<std::FILE, Closer> f(std::fopen(file.string().c_str(), "w"));
    if (!f) {
        throw ParameterError("cannot open " + file.string() + " for writing");
    }
    std::fputs("c,eta_star,xi_star,variance\n", f.get());
    for (const FrontierPoint& p : points) {
        std::fprintf(f.get(), "%.17g,%.17g,%.17g,%.17g\n", p.c, p.eta_star, p.xi_star, p.variance);
    }
    if (std::ferror(f.get())) {
        throw ParameterError("write failed for " + file.string());
    }
}

}  // namespace dlq
