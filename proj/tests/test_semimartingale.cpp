#include "doctest.h"

#include <cmath>

#include "bsvie/semimartingale.hpp"

using namespace bsvie;

namespace {

PathBundle driftless_bundle(int n, int steps, std::uint64_t seed) {
    DiffusionModel d;
    d.x0 = 1.0;
    d.drift = dsl::Expression::parse("0");
    d.volatility = dsl::Expression::parse("1");
    return simulate_paths(TimeGrid(1.0, steps), JumpModel{}, d, n, seed);
}

FactorizedTerminal factor(const char* f1, const char* f2) {
    return {dsl::Expression::parse(f1), dsl::Expression::parse(f2)};
}

} // namespace

TEST_CASE("type 1 with a unit first factor is a plain conditional expectation") {
    const int n = 20000, steps = 8;
    auto bundle = driftless_bundle(n, steps, 51);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto result = type1(factor("1", "x^2"), bundle, set);
    CHECK(result.identity.pass);
    // Driftless unit-volatility state: E[X(T)^2 | F_t] = X(t)^2 + (T - t).
    for (int j = 0; j <= steps; j += 4) {
        double rms = 0.0;
        for (int p = 0; p < n; ++p) {
            const double x = bundle.state(j, p);
            const double expected = x * x + (1.0 - bundle.grid.node(j));
            const double got = result.constructed.y[static_cast<std::size_t>(j) * n + p];
            rms += (got - expected) * (got - expected);
        }
        CHECK(std::sqrt(rms / n) < 0.05);
    }
}

TEST_CASE("type 1 with a trivial second factor has no martingale part") {
    const int n = 5000, steps = 8;
    auto bundle = driftless_bundle(n, steps, 52);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto result = type1(factor("x", "1"), bundle, set);
    CHECK(result.identity.pass);
    for (int j = 0; j <= steps; ++j) {
        for (int p = 0; p < n; p += 97) {
            CHECK(result.constructed.y[static_cast<std::size_t>(j) * n + p] ==
                  doctest::Approx(bundle.state(j, p)).epsilon(1e-9));
        }
    }
}

TEST_CASE("type 1 construction agrees with the general solver") {
    const int n = 20000, steps = 16;
    auto bundle = driftless_bundle(n, steps, 53);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto result = type1(factor("x", "x^2"), bundle, set);
    CHECK(result.identity.pass);
    // Terminal consistency: Y(T) = F(X(T), X(T)) path-wise.
    for (int p = 0; p < n; p += 59) {
        const double xT = bundle.state(steps, p);
        CHECK(result.constructed.y[static_cast<std::size_t>(steps) * n + p] ==
              doctest::Approx(xT * xT * xT).epsilon(1e-12));
        CHECK(result.general.y_at(steps, p) == doctest::Approx(xT * xT * xT).epsilon(1e-12));
    }
}

TEST_CASE("type 1 requires continuous bundles") {
    DiffusionModel d;
    d.x0 = 1.0;
    d.drift = dsl::Expression::parse("0");
    d.volatility = dsl::Expression::parse("1");
    JumpModel j;
    j.lambda = 1.0;
    j.dist = MarkDist::Point;
    j.a = 1.0;
    auto bundle = simulate_paths(TimeGrid(1.0, 4), j, d, 200, 54);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{2});
    CHECK_THROWS_AS(type1(factor("x", "x"), bundle, set), Error);
}

TEST_CASE("smoothness probes reject non-differentiable factors") {
    auto bundle = driftless_bundle(500, 4, 55);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{2});
    CHECK_THROWS_AS(type1(factor("log(x - 10)", "x"), bundle, set), EvaluationError);
}

TEST_CASE("type 2 without x-dependence reduces to type 1 with a unit factor") {
    const int n = 10000, steps = 8;
    auto bundle = driftless_bundle(n, steps, 56);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto t2 = type2(dsl::Expression::parse("x^2"), bundle, set); // F(x_frozen, X(T)) = X(T)^2
    auto t1 = type1(factor("1", "x^2"), bundle, set);
    CHECK(t2.identity.pass);
    for (int j = 0; j <= steps; ++j) {
        for (int p = 0; p < n; p += 101) {
            const std::size_t k = static_cast<std::size_t>(j) * n + p;
            CHECK(t2.constructed.y[k] == doctest::Approx(t1.constructed.y[k]).epsilon(1e-9));
        }
    }
}

TEST_CASE("type 2 factorized case matches the type 1 construction") {
    const int n = 10000, steps = 8;
    auto bundle = driftless_bundle(n, steps, 57);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto t2 = type2(dsl::Expression::parse("xt*x"), bundle, set);
    auto t1 = type1(factor("x", "x"), bundle, set);
    CHECK(t2.identity.pass);
    double worst = 0.0;
    for (int j = 0; j <= steps; ++j) {
        worst = std::max(worst, std::fabs(t2.constructed.y_nodes[j].mean -
                                          t1.constructed.y_nodes[j].mean));
    }
    CHECK(worst < 5e-3); // interpolation tolerance
}

TEST_CASE("type 2 additive coupling doubles the driftless state") {
    const int n = 20000, steps = 8;
    auto bundle = driftless_bundle(n, steps, 58);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto t2 = type2(dsl::Expression::parse("xt + x"), bundle, set);
    CHECK(t2.identity.pass);
    // Y(t) = X(t) + E[X(T) | F_t] = 2 X(t) for the driftless state.
    for (int j = 0; j <= steps; j += 2) {
        double rms = 0.0;
        for (int p = 0; p < n; ++p) {
            const double got = t2.constructed.y[static_cast<std::size_t>(j) * n + p];
            rms += (got - 2.0 * bundle.state(j, p)) * (got - 2.0 * bundle.state(j, p));
        }
        CHECK(std::sqrt(rms / n) < 0.05);
    }
}

TEST_CASE("type 3 collapses to type 2 for a zero driver") {
    const int n = 10000, steps = 8;
    auto bundle = driftless_bundle(n, steps, 59);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto t3 = type3(dsl::Expression::parse("xt*x"), dsl::Expression::parse("0"), bundle, set);
    auto t2 = type2(dsl::Expression::parse("xt*x"), bundle, set);
    CHECK(t3.identity.pass);
    for (int j = 0; j <= steps; ++j) {
        CHECK(t3.interpolated.y_nodes[j].mean ==
              doctest::Approx(t2.constructed.y_nodes[j].mean).epsilon(1e-6));
    }
}

TEST_CASE("type 3 constant driver shifts the family additively") {
    const int n = 10000, steps = 8;
    auto bundle = driftless_bundle(n, steps, 60);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto base = type3(dsl::Expression::parse("xt*x"), dsl::Expression::parse("0"), bundle, set);
    auto shifted = type3(dsl::Expression::parse("xt*x"), dsl::Expression::parse("0.7"), bundle, set);
    CHECK(shifted.identity.pass);
    for (int j = 0; j <= steps; ++j) {
        const double gap = shifted.interpolated.y_nodes[j].mean - base.interpolated.y_nodes[j].mean;
        CHECK(gap == doctest::Approx(0.7 * (1.0 - bundle.grid.node(j))).epsilon(1e-9));
    }
}

TEST_CASE("type 3 y-coupled uniqueness check") {
    const int n = 20000, steps = 16;
    auto bundle = driftless_bundle(n, steps, 61);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto t3 = type3(dsl::Expression::parse("xt*x"), dsl::Expression::parse("0.2*y"), bundle, set);
    CHECK(t3.stage1.picard_iterations > 1);
    CHECK(t3.identity.pass);
}

TEST_CASE("decomposition of a pure martingale and of a pure drift") {
    const int n = 20000;
    auto bundle = driftless_bundle(n, 16, 62);
    DecompositionSample brownian{&bundle, {}};
    brownian.y.resize(static_cast<std::size_t>(17) * n);
    DecompositionSample linear_time{&bundle, {}};
    linear_time.y.resize(brownian.y.size());
    for (int j = 0; j <= 16; ++j) {
        for (int p = 0; p < n; ++p) {
            brownian.y[static_cast<std::size_t>(j) * n + p] = bundle.state(j, p); // X = x0 + B
            linear_time.y[static_cast<std::size_t>(j) * n + p] = bundle.grid.node(j);
        }
    }
    auto b_report = decomposition_check({&brownian, 1}, PolynomialBasis{2});
    CHECK(b_report.drift_component[0] < 1e-10);
    CHECK(b_report.rms_residual[0] < 1e-10);
    auto t_report = decomposition_check({&linear_time, 1}, PolynomialBasis{2});
    CHECK(t_report.martingale_component[0] < 1e-12);
    CHECK(t_report.rms_residual[0] < 1e-12);
}

TEST_CASE("type 1 output decomposes with a refinement slope near one") {
    std::vector<PathBundle> bundles;
    std::vector<DecompositionSample> samples;
    bundles.reserve(3);
    for (int steps : {16, 32, 64}) {
        bundles.push_back(driftless_bundle(10000, steps, 63));
    }
    std::vector<Type1Result> results;
    results.reserve(3);
    for (auto& b : bundles) {
        auto set = std::make_shared<RegressionSet>(b, PolynomialBasis{3});
        results.push_back(type1(factor("x", "x^2"), b, set));
    }
    for (std::size_t k = 0; k < bundles.size(); ++k) {
        samples.push_back({&bundles[k], results[k].constructed.y});
    }
    auto report = decomposition_check(samples, PolynomialBasis{3});
    CHECK(report.refinement_slope >= 0.5);
    CHECK(report.refinement_slope <= 1.5);
}
