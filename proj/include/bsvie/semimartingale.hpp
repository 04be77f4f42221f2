#pragma once

#include <vector>

#include "bsvie/solver.hpp"

namespace bsvie {

/// Factorized terminal coupling F(X(t), X(T)) = F1(X(t)) F2(X(T)); both
/// factors are expressions of x and must be C^2 on the sampled state range
/// (asserted by finite-difference probes).
struct FactorizedTerminal {
    dsl::Expression f1;
    dsl::Expression f2;
};

struct IdentityCheck {
    bool pass = false;
    std::vector<double> difference;  // per-node mean difference
    std::vector<double> combined_se; // per node
    std::vector<int> violating_nodes;
    double worst_ratio = 0.0; // max |difference| / (multiplier * SE)
};

struct ConstructedSurface {
    std::vector<double> y; // node-major [(j)*n + p]
    std::vector<NodeEstimate> y_nodes;
};

struct Type1Result {
    ConstructedSurface constructed;
    SolutionSurface general;
    IdentityCheck identity;
};

/// Type 1: Y(t) = F1(X(t)) * E[F2(X(T)) | F_t], Z(t,s) = F1(X(t)) Z~(s),
/// cross-checked against the general solver on the same bundle. Continuous
/// bundles only (no jumps) and zero driver.
Type1Result type1(const FactorizedTerminal& f, const PathBundle& bundle,
                  std::shared_ptr<const RegressionSet> regressions, double se_multiplier = 3.0);

/// Frozen-parameter family on a Chebyshev x-grid with cubic-spline
/// interpolation at X(t).
struct ParametricFamily {
    std::vector<double> x_grid;
    // Fitted coefficients of Y~(t_j, x_k) per (k, j), j < N; expand against
    // the shared RegressionSet to recover per-path values. The terminal row
    // is kept raw so Y~(T, x) = F(x, X(T)) holds path-wise.
    std::vector<std::vector<Eigen::VectorXd>> y_coef;   // [k][j]
    std::vector<std::vector<Eigen::VectorXd>> z_coef;   // [k][j], j < N
    std::vector<std::vector<double>> y_terminal;        // [k][p]
    int extrapolations = 0; // states outside the grid hull during evaluation
};

struct Type2Result {
    ConstructedSurface constructed;
    ParametricFamily family;
    SolutionSurface general;
    IdentityCheck identity;
};

/// Type 2: Y(t) = Y~(t, X(t)) for the frozen-parameter family
/// Y~(t, x) = E[F(x, X(T)) | F_t]; F is an expression of (xt, x) with xt the
/// frozen first argument and x binding X(T).
Type2Result type2(const dsl::Expression& f, const PathBundle& bundle,
                  std::shared_ptr<const RegressionSet> regressions, int x_points = 21,
                  double se_multiplier = 3.0);

struct Type3Result {
    SolutionSurface stage1; // general solve of the full equation
    ParametricFamily family;
    ConstructedSurface interpolated; // Y~(t, X(t)) from the family
    IdentityCheck identity;          // uniqueness check Y = Y~(t, X(t))
};

/// Type 3: driver g(x_frozen, X(s), Y(s)) given as an expression of
/// (x, xs, y) with x the frozen first argument. Stage 1 solves the full
/// equation; stage 2 rebuilds the frozen-x family with the stage-1 Y inside
/// the driver and checks Y(t) = Y~(t, X(t)).
Type3Result type3(const dsl::Expression& f, const dsl::Expression& g3, const PathBundle& bundle,
                  std::shared_ptr<const RegressionSet> regressions, int x_points = 21,
                  double se_multiplier = 3.0, const SolverOptions& options = {});

struct DecompositionSample {
    const PathBundle* bundle = nullptr;
    std::vector<double> y; // node-major values of the process to decompose
};

struct DecompositionReport {
    std::vector<double> rms_residual;      // per sample
    std::vector<double> drift_component;   // RMS of the fitted drift part
    std::vector<double> martingale_component;
    double refinement_slope = 0.0; // of log rms against log N (positive = decays)
};

/// Regresses the increments of Y on [basis, dB * basis] per interval and
/// reports the drift/martingale split plus, across samples of different N,
/// the decay rate of the unexplained remainder.
DecompositionReport decomposition_check(std::span<const DecompositionSample> samples,
                                        const PolynomialBasis& basis);

} // namespace bsvie
