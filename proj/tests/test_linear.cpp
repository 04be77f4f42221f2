#include "doctest.h"

#include <cmath>

#include "bsvie/linear.hpp"

using namespace bsvie;

namespace {

PathBundle brownian_bundle(int n, int steps, std::uint64_t seed) {
    DiffusionModel d;
    d.x0 = 0.0;
    d.drift = dsl::Expression::parse("0");
    d.volatility = dsl::Expression::parse("1");
    return simulate_paths(TimeGrid(1.0, steps), JumpModel{}, d, n, seed);
}

PathBundle gbm_bundle(int n, int steps, std::uint64_t seed, double lambda = 0.0) {
    DiffusionModel d;
    d.x0 = 1.0;
    d.drift = dsl::Expression::parse("0.05*x");
    d.volatility = dsl::Expression::parse("0.2*x");
    JumpModel j;
    if (lambda > 0.0) {
        j.lambda = lambda;
        j.dist = MarkDist::Point;
        j.a = 1.0;
    }
    return simulate_paths(TimeGrid(1.0, steps), j, d, n, seed);
}

LinearProblem deterministic_problem(const char* psi, int sign = 1) {
    LinearProblem prob;
    prob.coeffs = GirsanovCoefficients::trivial();
    prob.psi = TerminalProcess::deterministic(dsl::Expression::parse(psi));
    prob.sign = sign;
    return prob;
}

} // namespace

TEST_CASE("degenerate case: deterministic psi with trivial coefficients") {
    auto bundle = gbm_bundle(2000, 8, 1);
    RegressionSet set(bundle, PolynomialBasis{3});
    auto sol = solve_linear(deterministic_problem("1 - 0.5*t"), bundle, set);
    for (int i = 0; i <= 8; ++i) {
        const double expected = 1.0 - 0.5 * bundle.grid.node(i);
        CHECK(sol.nodes[i].mean == doctest::Approx(expected).epsilon(1e-12));
        CHECK(sol.nodes[i].std_error <= 1e-12); // zero Monte Carlo variance
        for (int p = 0; p < bundle.n_paths; ++p) {
            CHECK(sol.y[static_cast<std::size_t>(i) * bundle.n_paths + p] ==
                  doctest::Approx(expected).epsilon(1e-12));
        }
    }
    CHECK(sol.resolvent_order == 0); // alpha == 0 shortcut
}

TEST_CASE("drift-shifted conditional expectation of B(T)") {
    const int n = 20000, steps = 8;
    auto bundle = brownian_bundle(n, steps, 2);
    RegressionSet set(bundle, PolynomialBasis{3});
    LinearProblem prob;
    prob.coeffs = GirsanovCoefficients::trivial();
    prob.coeffs.beta = dsl::Expression::parse("0.4");
    prob.psi = TerminalProcess::markov(dsl::Expression::parse("x")); // psi(t) = B(T)
    prob.sign = 1;
    auto sol = solve_linear(prob, bundle, set);
    // Y(t) = B(t) + beta (T - t). Node means first: E[Y(t)] = beta (T - t).
    for (int i = 0; i <= steps; ++i) {
        const double expected = 0.4 * (1.0 - bundle.grid.node(i));
        CHECK(std::fabs(sol.nodes[i].mean - expected) <= 3.0 * sol.nodes[i].std_error + 2e-3);
    }
    // Path-wise agreement in the bulk of the state distribution (the
    // polynomial ratio degrades only in the far tails).
    for (int i : {2, 4, 6}) {
        double rms = 0.0;
        int count = 0;
        for (int p = 0; p < n; ++p) {
            if (std::fabs(bundle.state(i, p)) > 1.5) {
                continue;
            }
            const double expected = bundle.state(i, p) + 0.4 * (1.0 - bundle.grid.node(i));
            const double err = sol.y[static_cast<std::size_t>(i) * n + p] - expected;
            rms += err * err;
            ++count;
        }
        rms = std::sqrt(rms / count);
        CHECK(rms < 0.05);
    }
}

TEST_CASE("constant kernel against deterministic one gives the exponential") {
    auto bundle = gbm_bundle(500, 32, 3);
    RegressionSet set(bundle, PolynomialBasis{3});
    LinearProblem prob = deterministic_problem("1");
    prob.kernel = VolterraKernel{dsl::Expression::parse("0.5"), 0.5};
    prob.resolvent_tol = 1e-9;
    auto sol = solve_linear(prob, bundle, set);
    CHECK(sol.resolvent_order >= 2);
    for (int i = 0; i <= 32; ++i) {
        const double expected = std::exp(0.5 * (1.0 - bundle.grid.node(i)));
        CHECK(sol.nodes[i].mean == doctest::Approx(expected).epsilon(1e-3));
        CHECK(sol.nodes[i].std_error <= 1e-12);
    }
}

TEST_CASE("the -psi convention is an exact sign flip of the +psi solve") {
    auto bundle = gbm_bundle(5000, 8, 4, 1.0);
    RegressionSet set(bundle, PolynomialBasis{3});
    LinearProblem plus;
    plus.coeffs = GirsanovCoefficients::trivial();
    plus.coeffs.beta = dsl::Expression::parse("0.3");
    plus.coeffs.theta = dsl::Expression::parse("0.2");
    plus.coeffs.epsilon = 0.5;
    plus.psi = TerminalProcess::markov(dsl::Expression::parse("max(x - 1, 0)"));
    plus.sign = 1;
    LinearProblem minus = plus;
    minus.sign = -1;
    auto a = solve_linear(plus, bundle, set);
    auto b = solve_linear(minus, bundle, set);
    for (std::size_t k = 0; k < a.y.size(); ++k) {
        CHECK(b.y[k] == -a.y[k]); // exact: negation commutes with the solve
    }
}

TEST_CASE("solve_linear is linear in the terminal process") {
    auto bundle = gbm_bundle(5000, 8, 5);
    RegressionSet set(bundle, PolynomialBasis{3});
    TerminalProcess p1 = TerminalProcess::markov(dsl::Expression::parse("x"));
    TerminalProcess p2 = TerminalProcess::deterministic(dsl::Expression::parse("1 - t"));

    auto make = [&](const TerminalProcess& psi) {
        LinearProblem prob;
        prob.coeffs = GirsanovCoefficients::trivial();
        prob.coeffs.beta = dsl::Expression::parse("0.25");
        prob.psi = psi;
        return solve_linear(prob, bundle, set);
    };
    auto s1 = make(p1);
    auto s2 = make(p2);
    auto sc = make(TerminalProcess::combine(2.0, p1, -0.5, p2));
    for (int i = 0; i <= 8; ++i) {
        const double combined = 2.0 * s1.nodes[i].mean - 0.5 * s2.nodes[i].mean;
        CHECK(sc.nodes[i].mean ==
              doctest::Approx(combined).epsilon(1e-12));
    }
}

TEST_CASE("gbm with drift and jump measure change matches the discrete growth factor") {
    const int n = 20000, steps = 16;
    auto bundle = gbm_bundle(n, steps, 6, 1.0);
    RegressionSet set(bundle, PolynomialBasis{3});
    LinearProblem prob;
    prob.coeffs = GirsanovCoefficients::trivial();
    prob.coeffs.beta = dsl::Expression::parse("0.3");
    prob.coeffs.theta = dsl::Expression::parse("0.2*zeta");
    prob.coeffs.epsilon = 0.5;
    prob.psi = TerminalProcess::markov(dsl::Expression::parse("x"));
    auto sol = solve_linear(prob, bundle, set);
    // Discrete Euler growth: E[Y(t_i)] = x0 (1 + b dt)^i (1 + (b + beta sigma) dt)^(N-i).
    const double dt = 1.0 / steps;
    for (int i = 0; i <= steps; ++i) {
        const double expected =
            std::pow(1.0 + 0.05 * dt, i) * std::pow(1.0 + (0.05 + 0.3 * 0.2) * dt, steps - i);
        CHECK(std::fabs(sol.nodes[i].mean - expected) <=
              3.0 * sol.nodes[i].std_error + 2e-3);
    }
}
