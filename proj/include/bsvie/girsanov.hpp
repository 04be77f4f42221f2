#pragma once

#include <optional>
#include <vector>

#include "bsvie/expr.hpp"
#include "bsvie/regression.hpp"
#include "bsvie/simulate.hpp"

namespace bsvie {

/// Measure-change coefficients. beta ranges over (s, x), theta over
/// (s, x, zeta). epsilon is the declared lower-bound margin
/// theta >= -1 + epsilon; pi, when given, dominates |theta| mark-wise.
/// Both declarations are audited against sampled points.
struct GirsanovCoefficients {
    dsl::Expression beta;
    dsl::Expression theta;
    double epsilon = 1e-3;
    std::optional<dsl::Expression> pi; // function of zeta

    static GirsanovCoefficients trivial();
};

/// Stochastic exponential M on the grid nodes; node-major [i*n_paths + p].
struct DensityPath {
    int n_paths = 0;
    int node_count = 0;
    std::vector<double> m;

    double at(int i, int p) const { return m[static_cast<std::size_t>(i) * n_paths + p]; }
    std::span<const double> row(int i) const {
        return {m.data() + static_cast<std::size_t>(i) * n_paths, static_cast<std::size_t>(n_paths)};
    }
};

/// Discrete stochastic exponential: exact per-step exponential of the
/// Brownian part, multiplicative (1 + theta) per jump, compensator
/// -dt * integral theta dnu per step. M(0) = 1 and M > 0 path-wise.
DensityPath stochastic_exponential(const GirsanovCoefficients& coeffs, const PathBundle& bundle);

/// How the F_t-denominator E[M(T) | F_t] is obtained.
enum class DenominatorMode {
    Regressed, // project M(T) on the basis, divide fits pointwise
    Simulated, // use the martingale identity: weight payoffs by M(T)/M(t)
};

struct RatioEstimate {
    std::vector<double> values; // per path
    double mean = 0.0;          // average over paths
    double std_error = 0.0;     // sd(values)/sqrt(n); at t=0 the weighted-mean SE
    double at_x0 = 0.0;         // fitted ratio at the bundle's initial state
    std::vector<double> numerator_coef;   // basis coefficients of the two fits
    std::vector<double> denominator_coef; // (plain weighted means at t = 0)
};

/// E[M(T) payoff | F_t] / E[M(T) | F_t] estimated by least-squares
/// projection on the basis at node t_i; at i = 0 both expectations reduce
/// to plain weighted Monte Carlo means.
RatioEstimate q_conditional_ratio(std::span<const double> payoff, const DensityPath& density,
                                  const RegressionSet& regressions, int node,
                                  DenominatorMode mode = DenominatorMode::Regressed);

} // namespace bsvie
