#include "doctest.h"

#include <cmath>

#include "bsvie/solver.hpp"

using namespace bsvie;

namespace {

DiffusionModel gbm() {
    DiffusionModel d;
    d.x0 = 1.0;
    d.drift = dsl::Expression::parse("0.05*x");
    d.volatility = dsl::Expression::parse("0.2*x");
    return d;
}

JumpModel point_jumps(double lambda) {
    JumpModel j;
    j.lambda = lambda;
    j.dist = MarkDist::Point;
    j.a = 1.0;
    return j;
}

Driver make_driver(const char* g, std::vector<const char*> weights = {}) {
    Driver d;
    d.g = dsl::Expression::parse(g);
    for (const char* w : weights) {
        d.jump_weights.push_back(dsl::Expression::parse(w));
    }
    d.lipschitz_c = 1.0;
    return d;
}

} // namespace

TEST_CASE("zero driver: the oracle is a plain nested expectation") {
    TimeGrid grid(1.0, 3);
    TerminalProcess psi = TerminalProcess::markov(dsl::Expression::parse("x^2"));
    auto oracle = nested_mc_oracle(make_driver("0"), psi, 1, grid, JumpModel{}, gbm(), 24, 40, 7);

    // Direct Monte Carlo of E[X(T)^2] on independent paths.
    auto bundle = simulate_paths(grid, JumpModel{}, gbm(), 200000, 1234);
    double mean = 0.0, var = 0.0;
    for (int p = 0; p < bundle.n_paths; ++p) {
        const double v = bundle.state(3, p) * bundle.state(3, p);
        mean += v;
    }
    mean /= bundle.n_paths;
    for (int p = 0; p < bundle.n_paths; ++p) {
        const double v = bundle.state(3, p) * bundle.state(3, p);
        var += (v - mean) * (v - mean);
    }
    const double se = std::sqrt(var / bundle.n_paths / bundle.n_paths);
    CHECK(std::fabs(oracle.y0 - mean) <= 3.0 * std::hypot(oracle.std_error, se));
}

TEST_CASE("constant driver shifts the oracle by c T") {
    TimeGrid grid(1.0, 2);
    TerminalProcess psi = TerminalProcess::deterministic(dsl::Expression::parse("1.5"));
    auto oracle = nested_mc_oracle(make_driver("0.7"), psi, 1, grid, JumpModel{}, gbm(), 16, 30, 9);
    CHECK(oracle.y0 == doctest::Approx(1.5 + 0.7).epsilon(1e-10));
    CHECK(oracle.std_error <= 1e-12);
}

TEST_CASE("oracle and solver estimate the same N=2 quantity") {
    TimeGrid grid(1.0, 2);
    TerminalProcess psi = TerminalProcess::markov(dsl::Expression::parse("x"));
    Driver d = make_driver("0.5*abs(z)");

    auto bundle = simulate_paths(grid, JumpModel{}, gbm(), 40000, 55);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto surface = solve(d, psi, 1, bundle, set);

    auto oracle = nested_mc_oracle(d, psi, 1, grid, JumpModel{}, gbm(), 64, 120, 77);
    const double se = std::hypot(surface.y_nodes[0].std_error, oracle.std_error);
    CHECK(std::fabs(surface.y_nodes[0].mean - oracle.y0) <= 3.0 * se + 1e-3);
}

TEST_CASE("jump-driver oracle agrees with the closed formula at the root") {
    TimeGrid grid(1.0, 2);
    TerminalProcess psi = TerminalProcess::markov(dsl::Expression::parse("x"));
    Driver d = make_driver("0.3*z + 0.2*u1", {"zeta"});

    auto bundle = simulate_paths(grid, point_jumps(1.0), gbm(), 40000, 56);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto surface = solve(d, psi, 1, bundle, set);
    auto oracle =
        nested_mc_oracle(d, psi, 1, grid, point_jumps(1.0), gbm(), 64, 120, 78);
    const double se = std::hypot(surface.y_nodes[0].std_error, oracle.std_error);
    CHECK(std::fabs(surface.y_nodes[0].mean - oracle.y0) <= 3.0 * se + 1e-3);
}

TEST_CASE("y-coupled drivers run picard on the tree") {
    TimeGrid grid(1.0, 2);
    TerminalProcess psi = TerminalProcess::deterministic(dsl::Expression::parse("1"));
    auto oracle =
        nested_mc_oracle(make_driver("0.2*y + 0.1"), psi, 1, grid, JumpModel{}, gbm(), 16, 30, 11);
    // Deterministic fixed point of the same discrete recursion.
    const double dt = 0.5;
    double ref = 1.0;
    for (int i = 1; i >= 0; --i) {
        ref = (ref + 0.1 * dt) / (1.0 - 0.2 * dt);
    }
    CHECK(oracle.y0 == doctest::Approx(ref).epsilon(1e-8));
}

TEST_CASE("oracle guards its resource envelope and is reproducible") {
    TimeGrid grid(1.0, 4);
    TerminalProcess psi = TerminalProcess::markov(dsl::Expression::parse("x"));
    CHECK_THROWS_AS(nested_mc_oracle(make_driver("0"), psi, 1, grid, JumpModel{}, gbm(), 2000, 50,
                                     1),
                    CapacityError);
    CHECK_THROWS_AS(nested_mc_oracle(make_driver("0"), psi, 1, TimeGrid(1.0, 5), JumpModel{},
                                     gbm(), 4, 10, 1),
                    Error);

    auto a = nested_mc_oracle(make_driver("0"), psi, 1, grid, JumpModel{}, gbm(), 10, 20, 99);
    auto b = nested_mc_oracle(make_driver("0"), psi, 1, grid, JumpModel{}, gbm(), 10, 20, 99);
    CHECK(a.y0 == b.y0);
    CHECK(a.std_error == b.std_error);
}
