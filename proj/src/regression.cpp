#include "bsvie/regression.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace bsvie {

namespace {

std::pair<double, double> mean_sd(std::span<const double> v) {
    double mean = 0.0;
    for (double x : v) {
        mean += x;
    }
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) {
        var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(v.size());
    return {mean, std::sqrt(var)};
}

} // namespace

NodeRegression::NodeRegression(std::span<const double> state, std::span<const double> second,
                               const PolynomialBasis& basis, double condition_limit)
    : basis_(basis) {
    const auto n = state.size();
    if (n == 0) {
        throw Error("regression: empty state vector");
    }
    auto [sm, ss] = mean_sd(state);
    state_mean_ = sm;
    state_sd_ = ss;
    state_varies_ = ss > 1e-12 * (1.0 + std::fabs(sm));
    if (!second.empty()) {
        auto [mm, ms] = mean_sd(second);
        second_mean_ = mm;
        second_sd_ = ms;
        second_varies_ = basis.include_second && ms > 1e-12 * (1.0 + std::fabs(mm));
    }

    int cols = 1 + (state_varies_ ? basis.degree : 0) + (second_varies_ ? basis.degree : 0);
    phi_.resize(static_cast<Eigen::Index>(n), cols);
    Eigen::RowVectorXd row(cols);
    for (std::size_t p = 0; p < n; ++p) {
        fill_row(state[p], second.empty() ? 0.0 : second[p], row);
        phi_.row(static_cast<Eigen::Index>(p)) = row;
    }

    Eigen::MatrixXd gram = phi_.transpose() * phi_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    double lo = es.eigenvalues().minCoeff();
    double hi = es.eigenvalues().maxCoeff();
    condition_ = lo > 0.0 ? std::sqrt(hi / lo) : std::numeric_limits<double>::infinity();
    if (!(condition_ < condition_limit)) {
        std::ostringstream os;
        os << "regression design matrix is ill-conditioned (condition number " << condition_
           << ")";
        throw IllConditionedBasisError(condition_, os.str());
    }
    gram_.compute(gram);
    col_mean_ = phi_.colwise().mean();
}

void NodeRegression::fill_row(double x, double m, Eigen::RowVectorXd& row) const {
    int c = 0;
    row(c++) = 1.0;
    if (state_varies_) {
        double sx = (x - state_mean_) / state_sd_;
        double pw = 1.0;
        for (int d = 0; d < basis_.degree; ++d) {
            pw *= sx;
            row(c++) = pw;
        }
    }
    if (second_varies_) {
        double sm = (m - second_mean_) / second_sd_;
        double pw = 1.0;
        for (int d = 0; d < basis_.degree; ++d) {
            pw *= sm;
            row(c++) = pw;
        }
    }
}

Eigen::VectorXd NodeRegression::coefficients(std::span<const double> response) const {
    if (response.size() != static_cast<std::size_t>(phi_.rows())) {
        throw Error("regression: response size mismatch");
    }
    Eigen::Map<const Eigen::VectorXd> r(response.data(), phi_.rows());
    return gram_.solve(phi_.transpose() * r);
}

void NodeRegression::predict(const Eigen::VectorXd& coef, std::span<double> out) const {
    Eigen::Map<Eigen::VectorXd> o(out.data(), phi_.rows());
    o = phi_ * coef;
}

std::vector<double> NodeRegression::fitted(std::span<const double> response) const {
    std::vector<double> out(response.size());
    predict(coefficients(response), out);
    return out;
}

double NodeRegression::evaluate(const Eigen::VectorXd& coef, double state_value,
                                std::optional<double> second_value) const {
    Eigen::RowVectorXd row(phi_.cols());
    fill_row(state_value, second_value.value_or(second_mean_), row);
    return row.dot(coef);
}

RegressionSet::RegressionSet(const PathBundle& bundle, const PolynomialBasis& basis,
                             const std::vector<double>* second_rows)
    : bundle_(&bundle), basis_(basis), second_(second_rows) {
    nodes_.resize(bundle.grid.node_count());
}

const NodeRegression& RegressionSet::at(int node) const {
    if (node < 0 || node >= static_cast<int>(nodes_.size())) {
        throw Error("regression set: node index out of range");
    }
    std::lock_guard<std::mutex> lock(build_mutex_);
    if (!nodes_[node]) {
        std::span<const double> second;
        if (second_ != nullptr) {
            second = {second_->data() + static_cast<std::size_t>(node) * bundle_->n_paths,
                      static_cast<std::size_t>(bundle_->n_paths)};
        }
        nodes_[node] = std::make_unique<NodeRegression>(bundle_->state_row(node), second, basis_);
    }
    return *nodes_[node];
}

} // namespace bsvie
