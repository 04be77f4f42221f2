#include "doctest.h"

#include <cmath>

#include "bsvie/girsanov.hpp"

using namespace bsvie;

namespace {

DiffusionModel brownian_model() {
    DiffusionModel d;
    d.x0 = 0.0;
    d.drift = dsl::Expression::parse("0");
    d.volatility = dsl::Expression::parse("1");
    return d;
}

GirsanovCoefficients coeffs(const char* beta, const char* theta, double eps = 0.5) {
    GirsanovCoefficients c;
    c.beta = dsl::Expression::parse(beta);
    c.theta = dsl::Expression::parse(theta);
    c.epsilon = eps;
    return c;
}

JumpModel point_jumps(double lambda, double atom = 1.0) {
    JumpModel j;
    j.lambda = lambda;
    j.dist = MarkDist::Point;
    j.a = atom;
    return j;
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

} // namespace

TEST_CASE("zero coefficients give the unit density") {
    auto bundle = simulate_paths(TimeGrid(1.0, 8), point_jumps(1.0), brownian_model(), 200, 3);
    auto density = stochastic_exponential(GirsanovCoefficients::trivial(), bundle);
    for (double v : density.m) {
        CHECK(v == 1.0);
    }
}

TEST_CASE("constant beta without jumps reproduces the explicit exponential") {
    const double beta = 0.7;
    auto bundle = simulate_paths(TimeGrid(1.0, 16), JumpModel{}, brownian_model(), 300, 8);
    auto density = stochastic_exponential(coeffs("0.7", "0"), bundle);
    for (int p = 0; p < bundle.n_paths; ++p) {
        for (int i = 0; i <= 16; ++i) {
            const double bt = bundle.brownian(i, p);
            const double expected = std::exp(beta * bt - 0.5 * beta * beta * bundle.grid.node(i));
            CHECK(density.at(i, p) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("point-mass jump factor matches the Poisson closed form") {
    const double c = 0.4, lambda = 2.0, T = 1.0;
    auto bundle = simulate_paths(TimeGrid(T, 8), point_jumps(lambda), brownian_model(), 400, 21);
    auto density = stochastic_exponential(coeffs("0", "0.4"), bundle);
    for (int p = 0; p < bundle.n_paths; ++p) {
        int jumps = 0;
        for (int i = 0; i < 8; ++i) {
            jumps += static_cast<int>(bundle.jumps_in(i, p).count);
        }
        const double expected = std::pow(1.0 + c, jumps) * std::exp(-c * lambda * T);
        CHECK(density.at(8, p) == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("density is a positive unit-mean martingale sample") {
    const int n = 100000;
    auto bundle = simulate_paths(TimeGrid(1.0, 8), point_jumps(1.0), brownian_model(), n, 2027);
    auto density = stochastic_exponential(coeffs("0.3", "0.2"), bundle);
    for (int i = 0; i <= 8; ++i) {
        auto row = density.row(i);
        double m = mean(row);
        double var = 0.0;
        for (double v : row) {
            CHECK(v > 0.0);
            var += (v - m) * (v - m);
        }
        const double se = std::sqrt(var / n) / std::sqrt(static_cast<double>(n));
        CHECK(std::fabs(m - 1.0) <= std::max(3.0 * se, 1e-12));
    }
}

TEST_CASE("theta at or below -1 is a domain error; epsilon violations are audited") {
    auto bundle = simulate_paths(TimeGrid(1.0, 8), point_jumps(3.0), brownian_model(), 500, 5);
    CHECK_THROWS_AS(stochastic_exponential(coeffs("0", "-1.5"), bundle), DomainError);
    // theta = -0.9 is above -1 but below the declared -1 + 0.5.
    CHECK_THROWS_AS(stochastic_exponential(coeffs("0", "-0.9", 0.5), bundle), Error);
    // Pi domination audit.
    GirsanovCoefficients c = coeffs("0", "0.8");
    c.pi = dsl::Expression::parse("0.5");
    CHECK_THROWS_AS(stochastic_exponential(c, bundle), Error);
    c.pi = dsl::Expression::parse("1 + abs(zeta)");
    CHECK_NOTHROW(stochastic_exponential(c, bundle));
}

TEST_CASE("constants pass through the conditional ratio") {
    auto bundle = simulate_paths(TimeGrid(1.0, 8), point_jumps(1.0), brownian_model(), 4000, 31);
    RegressionSet set(bundle, PolynomialBasis{3});
    auto density = stochastic_exponential(coeffs("0.3", "0.2"), bundle);
    std::vector<double> payoff(bundle.n_paths, 4.25);
    for (int node : {0, 3, 7}) {
        for (auto mode : {DenominatorMode::Regressed, DenominatorMode::Simulated}) {
            auto est = q_conditional_ratio(payoff, density, set, node, mode);
            for (double v : est.values) {
                CHECK(v == doctest::Approx(4.25).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("unit density reduces to a plain regression estimate") {
    DiffusionModel gbm;
    gbm.x0 = 1.0;
    gbm.drift = dsl::Expression::parse("0");
    gbm.volatility = dsl::Expression::parse("0.2*x");
    auto bundle = simulate_paths(TimeGrid(1.0, 8), JumpModel{}, gbm, 20000, 7);
    RegressionSet set(bundle, PolynomialBasis{3});
    auto density = stochastic_exponential(GirsanovCoefficients::trivial(), bundle);
    std::vector<double> payoff(bundle.n_paths);
    for (int p = 0; p < bundle.n_paths; ++p) {
        payoff[p] = bundle.state(8, p);
    }
    auto est = q_conditional_ratio(payoff, density, set, 4);
    // Driftless GBM: E[X(T) | F_t] = X(t); compare fitted against state.
    double worst = 0.0;
    for (int p = 0; p < bundle.n_paths; ++p) {
        worst = std::max(worst, std::fabs(est.values[p] - bundle.state(4, p)));
    }
    CHECK(worst < 0.05);
}

TEST_CASE("girsanov shift: E_Q[B(T)] = beta T at the root node") {
    const int n = 100000;
    auto bundle = simulate_paths(TimeGrid(1.0, 8), JumpModel{}, brownian_model(), n, 12);
    RegressionSet set(bundle, PolynomialBasis{3});
    auto density = stochastic_exponential(coeffs("0.3", "0"), bundle);
    std::vector<double> payoff(bundle.n_paths);
    for (int p = 0; p < n; ++p) {
        payoff[p] = bundle.state(8, p); // X = B here
    }
    auto est = q_conditional_ratio(payoff, density, set, 0);
    CHECK(std::fabs(est.mean - 0.3) <= 3.0 * est.std_error);
    CHECK(est.std_error < 0.01);
}

TEST_CASE("denominator consistency: fitted E[M(T)|F_t] tracks the simulated M(t)") {
    // For an invertible state (X = B), M(t) is a function of X(t), so the
    // cubic fit of M(T) on X(t) should approximate M(t) path-wise.
    auto bundle = simulate_paths(TimeGrid(1.0, 8), JumpModel{}, brownian_model(), 20000, 13);
    RegressionSet set(bundle, PolynomialBasis{3});
    auto density = stochastic_exponential(coeffs("0.3", "0"), bundle);
    const NodeRegression& reg = set.at(4);
    auto fit = reg.fitted(std::vector<double>(density.row(8).begin(), density.row(8).end()));
    double rms = 0.0;
    for (int p = 0; p < bundle.n_paths; ++p) {
        const double rel = fit[p] / density.at(4, p) - 1.0;
        rms += rel * rel;
    }
    rms = std::sqrt(rms / bundle.n_paths);
    CHECK(rms < 0.02);
}

TEST_CASE("both denominator modes agree on invertible models") {
    auto bundle = simulate_paths(TimeGrid(1.0, 8), JumpModel{}, brownian_model(), 20000, 14);
    RegressionSet set(bundle, PolynomialBasis{3});
    auto density = stochastic_exponential(coeffs("0.3", "0"), bundle);
    std::vector<double> payoff(bundle.n_paths);
    for (int p = 0; p < bundle.n_paths; ++p) {
        payoff[p] = std::max(bundle.state(8, p), 0.0);
    }
    auto a = q_conditional_ratio(payoff, density, set, 4, DenominatorMode::Regressed);
    auto b = q_conditional_ratio(payoff, density, set, 4, DenominatorMode::Simulated);
    CHECK(std::fabs(a.mean - b.mean) <= 3.0 * std::hypot(a.std_error, b.std_error));
}
