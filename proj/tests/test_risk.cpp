#include "doctest.h"

#include <cmath>

#include "bsvie/risk.hpp"

using namespace bsvie;

namespace {

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

RiskSpec make_spec(const char* g, const char* psi, std::vector<const char*> weights = {}) {
    RiskSpec spec;
    spec.driver.g = dsl::Expression::parse(g);
    for (const char* w : weights) {
        spec.driver.jump_weights.push_back(dsl::Expression::parse(w));
    }
    spec.driver.lipschitz_c = 1.0;
    spec.position = TerminalProcess::markov(dsl::Expression::parse(psi));
    return spec;
}

} // namespace

TEST_CASE("risk of the zero position under a vanishing driver is exactly zero") {
    auto bundle = gbm_bundle(2000, 8, 41);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    RiskSpec spec = make_spec("0.5*abs(z)", "0");
    spec.position = TerminalProcess::deterministic(dsl::Expression::parse("0"));
    auto values = rho(spec, bundle, set);
    for (const auto& node : values.rho) {
        CHECK(node.mean == 0.0);
        CHECK(node.std_error == 0.0);
    }
}

TEST_CASE("zero driver: rho is the negative conditional expectation") {
    const int n = 20000;
    auto bundle = gbm_bundle(n, 8, 42);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto values = rho(make_spec("0", "x"), bundle, set);
    // E[X(T)] = x0 (1 + b dt)^N under the Euler scheme.
    const double expected = -std::pow(1.0 + 0.05 / 8.0, 8.0);
    CHECK(std::fabs(values.rho[0].mean - expected) <= 3.0 * values.rho[0].std_error + 1e-4);
}

TEST_CASE("a z-driver cannot price below the riskless negative mean") {
    const int n = 20000;
    auto bundle = gbm_bundle(n, 16, 43);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    auto risky = rho(make_spec("0.5*abs(z)", "x"), bundle, set);
    auto neutral = rho(make_spec("0", "x"), bundle, set);
    for (int j = 0; j <= 16; ++j) {
        const double se = std::hypot(risky.rho[j].std_error, neutral.rho[j].std_error);
        CHECK(risky.rho[j].mean >= neutral.rho[j].mean - 3.0 * se);
    }
}

TEST_CASE("y-dependent or non-convex drivers are rejected") {
    auto spec = make_spec("0.2*y", "x");
    CHECK_THROWS_AS(spec.validate(), Error);
    auto concave = make_spec("sqrt(abs(z) + 1)", "x"); // concave in |z|
    CHECK_THROWS_AS(concave.validate(), Error);
    auto fine = make_spec("0.5*abs(z) + 0.2*abs(u1)", "x", {"zeta"});
    CHECK_NOTHROW(fine.validate());
    // Convexity probing can be waived.
    concave.convex = false;
    CHECK_NOTHROW(concave.validate());
}

TEST_CASE("axiom suite on the quoted driver") {
    const int n = 10000, steps = 8;
    auto bundle = gbm_bundle(n, steps, 44, 1.0);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    RiskSpec spec = make_spec("0.5*abs(z) + 0.2*abs(u1)", "x", {"zeta"});

    AxiomInputs inputs;
    inputs.psi1 = TerminalProcess::markov(dsl::Expression::parse("x"));
    inputs.psi2 = TerminalProcess::markov(dsl::Expression::parse("-x"));
    inputs.shift = 5.0;
    inputs.monotonicity_bump = dsl::Expression::parse("0.1*abs(x)");

    auto report = axiom_suite(spec, inputs, bundle, set);
    CHECK(report.all_pass());
    CHECK(report.find("translation_invariance")->pass);
    CHECK(report.find("past_independence")->pass);
    CHECK(report.find("monotonicity")->pass);
    CHECK(report.find("normalization")->pass);
    CHECK(report.find("convexity_lambda_0.5") != nullptr);

    // Translation is much tighter than the 1e-8 budget in practice.
    CHECK(report.find("translation_invariance")->worst_margin > 0.0);
}

TEST_CASE("convexity margins are strictly positive for kinked drivers") {
    const int n = 10000;
    auto bundle = gbm_bundle(n, 8, 45);
    auto set = std::make_shared<RegressionSet>(bundle, PolynomialBasis{3});
    RiskSpec spec = make_spec("0.5*abs(z)", "x");
    AxiomInputs inputs;
    inputs.psi1 = TerminalProcess::markov(dsl::Expression::parse("x"));
    inputs.psi2 = TerminalProcess::markov(dsl::Expression::parse("-x"));
    inputs.lambdas = {0.5};
    inputs.monotonicity_bump = dsl::Expression::parse("1");
    auto report = axiom_suite(spec, inputs, bundle, set);
    const auto* v = report.find("convexity_lambda_0.5");
    REQUIRE(v != nullptr);
    CHECK(v->pass);
    // rho(0.5 psi1 + 0.5 psi2) = rho(0) = 0 while the average of the two
    // one-sided prices is strictly positive here.
    CHECK(v->worst_margin > 0.0);
}
