#pragma once

#include <span>
#include <vector>

#include "bsvie/expr.hpp"
#include "bsvie/grid.hpp"

namespace bsvie {

/// Dense values on the discrete triangle {(i, j) : 0 <= i <= j <= N}.
class TriangularTable {
public:
    TriangularTable() = default;
    explicit TriangularTable(int node_count)
        : node_count_(node_count),
          values_(static_cast<std::size_t>(node_count) * (node_count + 1) / 2, 0.0) {}

    int node_count() const { return node_count_; }

    double& at(int i, int j) { return values_[index(i, j)]; }
    double at(int i, int j) const { return values_[index(i, j)]; }

    double max_abs() const;

    std::size_t index(int i, int j) const {
        // Row-major over rows of shrinking length.
        return static_cast<std::size_t>(i) * node_count_ - static_cast<std::size_t>(i) * (i - 1) / 2 +
               (j - i);
    }

private:
    int node_count_ = 0;
    std::vector<double> values_;
};

/// Kernel alpha(t, s) on the triangle with a declared uniform bound; the
/// bound drives the series-truncation certificate and is audited against
/// the grid samples.
struct VolterraKernel {
    dsl::Expression alpha; // variables (t, s)
    double bound = 0.0;    // |alpha| <= bound
};

struct ResolventTable {
    TimeGrid grid;
    TriangularTable phi;
    int n_max = 0;
    double tail_bound = 0.0;
};

/// alpha^(n) on the grid: alpha^(1) = alpha and
/// alpha^(n)(t, r) = integral_t^r alpha^(n-1)(t, s) alpha(s, r) ds by
/// composite trapezoid on the grid nodes.
TriangularTable iterate_kernel(const VolterraKernel& kernel, const TimeGrid& grid, int order);

/// Phi = sum of iterated kernels, truncated at the smallest n_max whose
/// factorial-majorant tail sum_{n > n_max} C^n T^(n-1) / (n-1)! is below
/// tol; the reported tail_bound certifies every dropped term.
ResolventTable resolvent(const VolterraKernel& kernel, const TimeGrid& grid, double tol,
                         int hard_cap = 170);

/// Row-wise trapezoid of Phi(t_i, r) psi(r) over [t_i, T] for every node,
/// applied to per-path process values (node-major layout [j*n + p]).
std::vector<double> convolve(const ResolventTable& table, std::span<const double> psi_nodes,
                             int n_paths);

} // namespace bsvie
