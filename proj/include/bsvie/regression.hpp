#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bsvie/errors.hpp"
#include "bsvie/simulate.hpp"

namespace bsvie {

/// Node-level scalar summary of a per-path estimate.
struct NodeEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    double at_x0 = 0.0;
};

/// Polynomial regression basis: constant plus powers 1..degree of the
/// (standardized) diffusion state, optionally augmented with powers of a
/// second coordinate such as the density M(t).
struct PolynomialBasis {
    int degree = 3;
    bool include_second = false;

    int size() const { return 1 + degree * (include_second ? 2 : 1); }
};

/// Least-squares projector onto the basis evaluated at one node's states.
/// The design factorization is reused across many responses, which is what
/// makes the backward sweeps affordable. Columns are standardized; columns
/// with no cross-path variation are dropped (the intercept covers them), so
/// at t = 0 a fit degenerates to the plain Monte Carlo mean.
class NodeRegression {
public:
    NodeRegression(std::span<const double> state, std::span<const double> second,
                   const PolynomialBasis& basis, double condition_limit = 1e10);

    int n() const { return static_cast<int>(phi_.rows()); }
    int columns() const { return static_cast<int>(phi_.cols()); }
    double condition() const { return condition_; }

    /// Basis coefficients of the least-squares fit of `response`.
    Eigen::VectorXd coefficients(std::span<const double> response) const;

    /// Fitted values for a coefficient vector.
    void predict(const Eigen::VectorXd& coef, std::span<double> out) const;

    /// Fit and predict in one pass.
    std::vector<double> fitted(std::span<const double> response) const;

    /// Evaluate the fitted function at an arbitrary state value (second
    /// coordinate defaults to its node mean when the basis includes one).
    double evaluate(const Eigen::VectorXd& coef, double state_value,
                    std::optional<double> second_value = std::nullopt) const;

    /// Column means of the design; mean of fitted values = coef . col_mean.
    double mean_of_fit(const Eigen::VectorXd& coef) const { return coef.dot(col_mean_); }

private:
    void fill_row(double x, double m, Eigen::RowVectorXd& row) const;

    PolynomialBasis basis_;
    double state_mean_ = 0.0, state_sd_ = 1.0;
    double second_mean_ = 0.0, second_sd_ = 1.0;
    bool state_varies_ = false, second_varies_ = false;
    Eigen::MatrixXd phi_;
    Eigen::LDLT<Eigen::MatrixXd> gram_;
    Eigen::VectorXd col_mean_;
    double condition_ = 1.0;
};

/// Per-node regressions on a bundle, built lazily and shared between
/// solvers so common-random-number comparisons reuse identical projections.
class RegressionSet {
public:
    RegressionSet(const PathBundle& bundle, const PolynomialBasis& basis,
                  const std::vector<double>* second_rows = nullptr);

    const NodeRegression& at(int node) const;
    const PolynomialBasis& basis() const { return basis_; }
    const PathBundle& bundle() const { return *bundle_; }

private:
    const PathBundle* bundle_;
    PolynomialBasis basis_;
    const std::vector<double>* second_;
    mutable std::vector<std::unique_ptr<NodeRegression>> nodes_;
    mutable std::mutex build_mutex_;
};

} // namespace bsvie
