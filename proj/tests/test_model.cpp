#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dlq/errors.hpp"
#include "dlq/model.hpp"

using dlq::FeasibilityReport;
using dlq::ModelParams;

TEST_CASE("zero drift keeps the sequence at one and hits the cap") {
    const FeasibilityReport r = dlq::feasibility(ModelParams{0.0, 1.0, 1.0, 5.0}, 7);
    CHECK(r.exceeds_cap);
    CHECK(r.sufficient_holds);
    CHECK(r.n_cal == 7);
    CHECK(std::isinf(r.margin));
    for (double a : r.a_seq) CHECK(a == 1.0);
}

TEST_CASE("reference sequence for b = 0.5, sigma = 1, d = 0.5, T = 1.5") {
    // Exact rational recursion, rounded to double.
    const double expected[] = {1.0, 0.875, 0.7321428571428571, 0.561411149825784,
                               0.3387579302757452, -0.030237121436406302};
    const FeasibilityReport r = dlq::feasibility(ModelParams{0.5, 1.0, 0.5, 1.5});
    REQUIRE(r.a_seq.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(r.a_seq[i] == doctest::Approx(expected[i]).epsilon(1e-14));
    }
    CHECK(r.n_cal == 4);
    CHECK_FALSE(r.exceeds_cap);
    CHECK(r.margin == doctest::Approx(0.5));
    CHECK(r.sufficient_holds);
    CHECK(r.a(3) == doctest::Approx(0.561411149825784));
}

TEST_CASE("long delay violates the sufficient condition") {
    const FeasibilityReport r = dlq::feasibility(ModelParams{0.5, 1.0, 2.0, 5.0});
    REQUIRE(r.a_seq.size() == 3);
    CHECK(r.a_seq[1] == doctest::Approx(0.5));
    CHECK(r.a_seq[2] == doctest::Approx(-0.5));
    CHECK(r.n_cal == 1);
    CHECK_FALSE(r.sufficient_holds);
}

TEST_CASE("first step nonpositive gives n_cal = 0") {
    // d (b/sigma)^2 = 1 makes a_1 = 0.
    const FeasibilityReport r = dlq::feasibility(ModelParams{1.0, 1.0, 1.0, 0.5});
    CHECK(r.a_seq.size() == 2);
    CHECK(r.n_cal == 0);
    CHECK_FALSE(r.sufficient_holds);
}

TEST_CASE("undelayed problem is always feasible") {
    const FeasibilityReport r = dlq::feasibility(ModelParams{3.0, 0.1, 0.0, 10.0});
    CHECK(r.sufficient_holds);
    CHECK(r.exceeds_cap);
}

TEST_CASE("invalid parameters are rejected") {
    CHECK_THROWS_AS(dlq::feasibility(ModelParams{0.5, 0.0, 0.5, 1.0}), dlq::ParameterError);
    CHECK_THROWS_AS(dlq::feasibility(ModelParams{0.5, 1.0, -0.1, 1.0}), dlq::ParameterError);
    CHECK_THROWS_AS(dlq::feasibility(ModelParams{0.5, 1.0, 0.5, 0.0}), dlq::ParameterError);
    CHECK_THROWS_AS(dlq::feasibility(ModelParams{std::nan(""), 1.0, 0.5, 1.0}), dlq::ParameterError);
    CHECK_THROWS_AS(dlq::feasibility(ModelParams{0.5, 1.0, 0.5, 1.0}, 0), dlq::ParameterError);
}

TEST_CASE("sequence properties on random parameters") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ub(-2.0, 2.0);
    std::uniform_real_distribution<double> us(0.2, 3.0);
    std::uniform_real_distribution<double> ud(0.05, 2.0);
    std::uniform_real_distribution<double> uk(0.1, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
        const ModelParams p{ub(rng), us(rng), ud(rng), 5.0 * ud(rng)};
        const FeasibilityReport r = dlq::feasibility(p);
        CAPTURE(p.b);
        CAPTURE(p.sigma);
        CAPTURE(p.d);
        CHECK(r.a_seq.front() == 1.0);
        for (std::size_t i = 1; i < r.a_seq.size(); ++i) {
            CHECK(r.a_seq[i] < r.a_seq[i - 1]);
        }
        if (!r.exceeds_cap) {
            for (int i = 0; i <= r.n_cal; ++i) CHECK(r.a_seq[static_cast<std::size_t>(i)] > 0.0);
            CHECK(r.a_seq[static_cast<std::size_t>(r.n_cal + 1)] <= 0.0);
        }

        // Only d (b/sigma)^2 and T/d matter.
        const double kappa = uk(rng);
        const FeasibilityReport s =
            dlq::feasibility(ModelParams{kappa * p.b, kappa * p.sigma, p.d, p.T});
        REQUIRE(s.a_seq.size() == r.a_seq.size());
        for (std::size_t i = 0; i < r.a_seq.size(); ++i) {
            CHECK(s.a_seq[i] == doctest::Approx(r.a_seq[i]).epsilon(1e-12));
        }
        CHECK(s.sufficient_holds == r.sufficient_holds);
    }
}

TEST_CASE("n_cal is nonincreasing in the delay") {
    int previous = std::numeric_limits<int>::max();
    for (double d = 0.05; d <= 3.0; d += 0.05) {
        const FeasibilityReport r = dlq::feasibility(ModelParams{0.5, 1.0, d, 1000.0}, 100000);
        REQUIRE_FALSE(r.exceeds_cap);
        CHECK(r.n_cal <= previous);
        previous = r.n_cal;
    }
}
