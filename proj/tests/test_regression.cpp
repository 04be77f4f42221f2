#include "doctest.h"

#include <cmath>
#include <random>

#include "bsvie/regression.hpp"

using namespace bsvie;

namespace {

PathBundle gbm_bundle(int n, int steps = 8, std::uint64_t seed = 99) {
    DiffusionModel d;
    d.x0 = 1.0;
    d.drift = dsl::Expression::parse("0.05*x");
    d.volatility = dsl::Expression::parse("0.2*x");
    return simulate_paths(TimeGrid(1.0, steps), JumpModel{}, d, n, seed);
}

} // namespace

TEST_CASE("constant columns collapse to the plain mean") {
    std::vector<double> state(1000, 1.0); // no variation: node-0 situation
    NodeRegression reg(state, {}, PolynomialBasis{3});
    CHECK(reg.columns() == 1);
    std::vector<double> resp(1000);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(2.0, 1.0);
    double mean = 0.0;
    for (auto& r : resp) {
        r = g(rng);
        mean += r;
    }
    mean /= resp.size();
    auto fit = reg.fitted(resp);
    for (double v : fit) {
        CHECK(v == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("polynomials in the span are reproduced") {
    auto bundle = gbm_bundle(5000);
    auto state = bundle.state_row(4);
    NodeRegression reg(state, {}, PolynomialBasis{3});
    std::vector<double> resp(state.size());
    for (std::size_t p = 0; p < state.size(); ++p) {
        const double x = state[p];
        resp[p] = 2.0 - x + 0.5 * x * x * x;
    }
    auto fit = reg.fitted(resp);
    for (std::size_t p = 0; p < fit.size(); ++p) {
        CHECK(fit[p] == doctest::Approx(resp[p]).epsilon(1e-9));
    }
    // Point evaluation agrees too.
    auto coef = reg.coefficients(resp);
    CHECK(reg.evaluate(coef, 1.0) == doctest::Approx(2.0 - 1.0 + 0.5).epsilon(1e-9));
}

TEST_CASE("fit is linear in the response") {
    auto bundle = gbm_bundle(2000);
    auto state = bundle.state_row(3);
    NodeRegression reg(state, {}, PolynomialBasis{3});
    std::vector<double> r1(state.size()), r2(state.size()), mix(state.size());
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t p = 0; p < state.size(); ++p) {
        r1[p] = g(rng);
        r2[p] = g(rng);
        mix[p] = 3.0 * r1[p] - 0.5 * r2[p];
    }
    auto f1 = reg.fitted(r1);
    auto f2 = reg.fitted(r2);
    auto fm = reg.fitted(mix);
    for (std::size_t p = 0; p < state.size(); ++p) {
        CHECK(fm[p] == doctest::Approx(3.0 * f1[p] - 0.5 * f2[p]).epsilon(1e-10));
    }
}

TEST_CASE("projection error decreases with the degree") {
    auto bundle = gbm_bundle(20000);
    auto state = bundle.state_row(8);
    std::vector<double> resp(state.size());
    for (std::size_t p = 0; p < state.size(); ++p) {
        resp[p] = std::exp(state[p]); // not in any polynomial span
    }
    double previous = 1e300;
    for (int degree : {1, 2, 3}) {
        NodeRegression reg(state, {}, PolynomialBasis{degree});
        auto fit = reg.fitted(resp);
        double sse = 0.0;
        for (std::size_t p = 0; p < fit.size(); ++p) {
            sse += (fit[p] - resp[p]) * (fit[p] - resp[p]);
        }
        CHECK(sse < previous);
        previous = sse;
    }
}

TEST_CASE("duplicate-information designs are rejected with a condition number") {
    // A two-point state with degree 3: powers of a two-valued standardized
    // column are linearly dependent beyond degree 1.
    std::vector<double> state(64);
    for (std::size_t p = 0; p < state.size(); ++p) {
        state[p] = p % 2 == 0 ? 1.0 : 2.0;
    }
    try {
        NodeRegression reg(state, {}, PolynomialBasis{3});
        FAIL("expected IllConditionedBasisError");
    } catch (const IllConditionedBasisError& e) {
        CHECK(e.condition() > 1e10);
    }
}

TEST_CASE("regression set shares nodes across callers") {
    auto bundle = gbm_bundle(500);
    RegressionSet set(bundle, PolynomialBasis{2});
    const NodeRegression& a = set.at(3);
    const NodeRegression& b = set.at(3);
    CHECK(&a == &b);
    CHECK_THROWS_AS(set.at(99), Error);
}

TEST_CASE("second coordinate augments the basis") {
    auto bundle = gbm_bundle(4000, 4);
    std::vector<double> second(bundle.x.size());
    for (std::size_t k = 0; k < second.size(); ++k) {
        second[k] = std::cos(static_cast<double>(k % 97)); // synthetic extra state
    }
    RegressionSet set(bundle, PolynomialBasis{2, true}, &second);
    const NodeRegression& reg = set.at(2);
    CHECK(reg.columns() == 5);
}
