#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dlq/errors.hpp"
#include "dlq/riccati_solver.hpp"
#include "oracles/first_slice_oracle.hpp"

using dlq::GridSpec;
using dlq::KernelGrid;
using dlq::ModelParams;
using dlq::SolveConfig;
using dlq::TwoAssetParams;

namespace {

dlq::SolveResult solve(double b, double sigma, double d, double T, int m, SolveConfig cfg = {}) {
    return dlq::solve_single(ModelParams{b, sigma, d, T}, GridSpec::make(d, T, m), cfg);
}

double max_kernel_diff(const KernelGrid& a, const KernelGrid& b) {
    double out = 0.0;
    for (dlq::KernelId id : {dlq::KernelId::P11, dlq::KernelId::P12, dlq::KernelId::P22}) {
        out = std::max(out, dlq::max_abs_diff(a, b, id).value);
    }
    return out;
}

}  // namespace

TEST_CASE("zero drift keeps the kernels at their terminal values") {
    const auto res = solve(0.0, 1.0, 0.5, 2.0, 8);
    const KernelGrid& g = res.grid;
    CHECK(g.fully_solved());
    for (int k = 0; k <= g.spec().n_t; ++k) {
        CHECK(g.p11(k) == 1.0);
        for (int j = 0; j <= 8; ++j) {
            CHECK(g.p12(k, j) == 0.0);
            for (int l = 0; l <= 8; ++l) CHECK(g.p22(k, j, l) == 0.0);
        }
    }
}

TEST_CASE("top slice equals its closed form") {
    const GridSpec spec = GridSpec::make(0.5, 1.5, 8);
    const ModelParams p{0.5, 1.0, 0.5, 1.5};
    const auto res = dlq::solve_single(p, spec, {});
    const KernelGrid top = dlq::init_top_slice(p, spec);
    for (int k = spec.top_lo(); k <= spec.n_t; ++k) {
        CHECK(res.grid.p11(k) == top.p11(k));
        for (int j = 0; j <= 8; ++j) {
            CHECK(res.grid.p12(k, j) == top.p12(k, j));
            for (int l = 0; l <= 8; ++l) CHECK(res.grid.p22(k, j, l) == top.p22(k, j, l));
        }
    }
}

TEST_CASE("boundary and terminal identities hold to rounding") {
    for (double b : {0.5, -0.8, 1.2}) {
        CAPTURE(b);
        const auto res = solve(b, 1.0, 0.4, 1.4, 8);
        const dlq::ResidualReport rep = dlq::residual_report(res.grid);
        CHECK(rep.boundary12 <= 1e-12);
        CHECK(rep.boundary22 <= 1e-12);
        CHECK(rep.terminal == 0.0);
    }
}

TEST_CASE("equation residuals shrink linearly with the step") {
    const auto coarse = dlq::residual_report(solve(0.5, 1.0, 0.5, 1.5, 8).grid);
    const auto fine = dlq::residual_report(solve(0.5, 1.0, 0.5, 1.5, 16).grid);
    const double h = 0.5 / 16;
    CHECK(fine.p11 <= 10 * h);
    CHECK(fine.p12 <= 10 * h);
    CHECK(fine.p22 <= 10 * h);
    CHECK(fine.p11 < 0.7 * coarse.p11);
    CHECK(fine.p12 < 0.7 * coarse.p12);
    CHECK(fine.p22 < 0.7 * coarse.p22);
}

TEST_CASE("structural properties of the solution") {
    for (double b : {0.5, -0.5, 0.6}) {
        CAPTURE(b);
        const double sigma = 1.1;
        const auto res = solve(b, sigma, 0.5, 1.5, 16);
        const KernelGrid& g = res.grid;
        const int m = 16;
        const int n_t = g.spec().n_t;
        const dlq::FeasibilityReport feas = dlq::feasibility(ModelParams{b, sigma, 0.5, 1.5});
        REQUIRE(feas.sufficient_holds);
        for (int k = 0; k <= n_t; ++k) {
            CHECK(g.p11(k) > 0.0);
            CHECK(g.p11(k) <= 1.0);
            CHECK(g.p11(k) >= feas.a(feas.n_cal) - 1e-9);
            if (k < n_t) CHECK(g.p11(k) <= g.p11(k + 1));
            CHECK(std::abs(g.p12(k, m)) <= std::abs(b) + 1e-12);
            for (int j = 0; j <= m; ++j) {
                if (k + j <= n_t) CHECK(g.p12(k, j) * b >= 0.0);
                for (int l = 0; l < j; ++l) CHECK(g.p22(k, j, l) == doctest::Approx(g.p22(k, l, j)));
            }
        }
        for (std::size_t n = 1; n < res.diagnostics.slices.size(); ++n) {
            const auto& sd = res.diagnostics.slices[n];
            CHECK(sd.min_p11 >= sd.lower_bound - 1e-9);
        }
    }
}

TEST_CASE("P11 grows no faster than its Lipschitz bound") {
    const double b = 0.7;
    const double sigma = 1.3;
    const auto res = solve(b, sigma, 0.5, 1.5, 16);
    const KernelGrid& g = res.grid;
    const dlq::FeasibilityReport feas = dlq::feasibility(ModelParams{b, sigma, 0.5, 1.5});
    REQUIRE(feas.sufficient_holds);
    const double bound = b * b / (sigma * sigma * feas.a(feas.n_cal));
    for (int k = 0; k < g.spec().n_t; ++k) {
        CHECK((g.p11(k + 1) - g.p11(k)) / g.spec().h <= bound * (1 + 1e-9));
    }
}

TEST_CASE("first slice agrees with an independent fixed-point oracle") {
    for (double b : {0.5, -1.0}) {
        CAPTURE(b);
        const double sigma = 1.2;
        const double d = 0.5;
        for (int m : {4, 16}) {
            CAPTURE(m);
            const auto res = solve(b, sigma, d, 2 * d, m);
            const oracle::FirstSlice o = oracle::solve_first_slice(b, sigma, d, m);
            const double tol = 5 * o.h * std::max(1.0, b * b);
            double diff = 0.0;
            for (int k = 0; k <= m; ++k) {
                diff = std::max(diff, std::abs(res.grid.p11(k) - o.p11[k]));
                for (int j = 0; j <= m; ++j) {
                    diff = std::max(diff, std::abs(res.grid.p12(k, j) - o.p12[k][j]));
                    for (int l = 0; l <= m; ++l) {
                        diff = std::max(diff, std::abs(res.grid.p22(k, j, l) - o.p22[k][j][l]));
                    }
                }
            }
            CHECK(diff <= tol);
        }
    }
}

TEST_CASE("Picard diagnostics") {
    SolveConfig cfg;
    cfg.tol = 1e-13;
    const auto res = solve(0.5, 1.0, 0.5, 1.5, 8, cfg);
    const auto& diag = res.diagnostics;
    REQUIRE(diag.slices.size() == 3);
    CHECK(diag.sufficient_holds);
    CHECK(diag.positivity_ok);
    CHECK(diag.tol == 1e-13);
    CHECK(diag.min_p2hat2 > 0.0);
    for (std::size_t n = 1; n < diag.slices.size(); ++n) {
        const auto& sd = diag.slices[n];
        CHECK(sd.residual <= cfg.tol);
        CHECK(sd.iterations >= 2);
        CHECK(sd.bisections == 0);
        REQUIRE_FALSE(sd.residual_history.empty());
        CHECK(sd.residual_history.back() <= cfg.tol);
    }
}

TEST_CASE("a capped sweep count forces bisection without changing the answer") {
    const auto ref = solve(0.8, 1.0, 0.5, 1.5, 16);
    SolveConfig cfg;
    cfg.max_iter = 8;
    const auto bis = solve(0.8, 1.0, 0.5, 1.5, 16, cfg);
    int bisections = 0;
    for (const auto& sd : bis.diagnostics.slices) bisections += sd.bisections;
    CHECK(bisections > 0);
    CHECK(max_kernel_diff(ref.grid, bis.grid) <= 1e-10);
}

TEST_CASE("a single sweep cannot converge") {
    SolveConfig cfg;
    cfg.max_iter = 1;
    try {
        solve(0.5, 1.0, 0.5, 1.5, 4, cfg);
        FAIL("expected ConvergenceError");
    } catch (const dlq::ConvergenceError& e) {
        CHECK(e.slice() == 1);
        CHECK(e.residual() > cfg.tol);
        CHECK(e.kind() == "convergence");
    }
}

TEST_CASE("positivity floor violation is reported") {
    SolveConfig cfg;
    cfg.positivity_floor = 0.95;
    try {
        solve(0.5, 1.0, 0.5, 1.5, 8, cfg);
        FAIL("expected PositivityError");
    } catch (const dlq::PositivityError& e) {
        CHECK(e.slice() >= 1);
    }
    // The first slice below the top reads P11 only on the top slice.
    CHECK_NOTHROW(solve(0.5, 1.0, 0.5, 1.0, 8, cfg));
}

TEST_CASE("invalid solver inputs") {
    SolveConfig cfg;
    cfg.tol = 0.0;
    CHECK_THROWS_AS(solve(0.5, 1.0, 0.5, 1.5, 4, cfg), dlq::ParameterError);
    cfg = {};
    cfg.max_iter = 0;
    CHECK_THROWS_AS(solve(0.5, 1.0, 0.5, 1.5, 4, cfg), dlq::ParameterError);
    cfg = {};
    cfg.positivity_floor = -1.0;
    CHECK_THROWS_AS(solve(0.5, 1.0, 0.5, 1.5, 4, cfg), dlq::ParameterError);
    CHECK_THROWS_AS(dlq::solve_single(ModelParams{0.5, 1.0, 0.5, 1.5}, GridSpec::make(0.4, 1.5, 4), {}),
                    dlq::ParameterError);
    CHECK_THROWS_AS(dlq::solve_single(ModelParams{0.5, 1.0, 0.5, 1.5}, GridSpec::make(0.5, 2.0, 4), {}),
                    dlq::ParameterError);
    CHECK_THROWS_AS(solve(0.5, 0.0, 0.5, 1.5, 4), dlq::ParameterError);
}

TEST_CASE("two-asset effective coefficients") {
    const TwoAssetParams p{0.8, 1.5, 0.5, 0.3, 0.7, 0.5, 1.5};
    CHECK(p.effective_drift() == doctest::Approx(1.5 * (0.3 - 0.7 * 0.5)));
    CHECK(p.effective_drift() < 0.0);
    CHECK(p.effective_sigma() == doctest::Approx(1.5 * std::sqrt(1 - 0.49)));
    const ModelParams e = p.effective_model();
    CHECK(e.b == p.effective_drift());
    CHECK(e.sigma == p.effective_sigma());
    CHECK(e.d == 0.5);
    CHECK_THROWS_AS((TwoAssetParams{1.0, 1.0, 0.0, 0.0, 1.0, 0.5, 1.0}.validate()), dlq::ParameterError);
    CHECK_THROWS_AS((TwoAssetParams{0.0, 1.0, 0.0, 0.0, 0.0, 0.5, 1.0}.validate()), dlq::ParameterError);
}

TEST_CASE("two-asset system without the undelayed premium is the single-asset system") {
    const TwoAssetParams p{0.8, 1.5, 0.0, 0.4, 0.0, 0.5, 1.5};
    const GridSpec spec = GridSpec::make(0.5, 1.5, 8);
    const auto two = dlq::solve_two_asset(p, spec, {});
    const auto one = dlq::solve_single(ModelParams{1.5 * 0.4, 1.5, 0.5, 1.5}, spec, {});
    CHECK(max_kernel_diff(two.grid, one.grid) <= 1e-14);
    CHECK(two.grid.undelayed_rate() == 0.0);
}

TEST_CASE("two-asset top slice decays exponentially") {
    const double lambda1 = 0.6;
    const TwoAssetParams p{1.0, 1.0, lambda1, 0.4, 0.3, 0.5, 1.5};
    const GridSpec spec = GridSpec::make(0.5, 1.5, 8);
    const auto res = dlq::solve_two_asset(p, spec, {});
    const double b = p.effective_drift();
    for (int k = spec.top_lo(); k <= spec.n_t; ++k) {
        const double tau = spec.T - spec.t(k);
        CHECK(res.grid.p11(k) == doctest::Approx(std::exp(-lambda1 * lambda1 * tau)).epsilon(1e-12));
        // P12(t,-d) inherits the boundary value b P11(t).
        CHECK(res.grid.p12(k, 0) == doctest::Approx(b * res.grid.p11(k)).epsilon(1e-12));
    }
    CHECK_FALSE(res.diagnostics.sufficient_holds);
    CHECK(res.grid.fully_solved());
    const auto rep = dlq::residual_report(res.grid);
    CHECK(rep.boundary12 <= 1e-12);
    CHECK(rep.boundary22 <= 1e-12);
    CHECK(rep.terminal == 0.0);
}

TEST_CASE("two-asset kernels follow the sign of the effective drift") {
    const TwoAssetParams p{1.0, 1.0, 0.5, 0.3, 0.7, 0.5, 1.5};
    REQUIRE(p.effective_drift() < 0.0);
    const auto res = dlq::solve_two_asset(p, GridSpec::make(0.5, 1.5, 8), {});
    const KernelGrid& g = res.grid;
    for (int k = 0; k <= g.spec().n_t - 8; ++k) {
        CHECK(g.p12(k, 0) < 0.0);
        CHECK(g.p22(k, 0, 0) > 0.0);
        CHECK(g.p11(k) > 0.0);
        CHECK(g.p11(k) < 1.0);
    }
    const auto rep = dlq::residual_report(g);
    CHECK(rep.p11 <= 10 * g.spec().h);
}

TEST_CASE("undelayed premium lowers P11") {
    const GridSpec spec = GridSpec::make(0.5, 1.5, 8);
    double previous = 2.0;
    for (double lambda1 : {0.0, 0.2, 0.4}) {
        const auto res = dlq::solve_two_asset(TwoAssetParams{1.0, 1.0, lambda1, 0.5, 0.0, 0.5, 1.5},
                                              spec, {});
        CHECK(res.grid.p11(0) < previous);
        previous = res.grid.p11(0);
    }
}
