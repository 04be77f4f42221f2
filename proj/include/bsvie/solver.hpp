#pragma once

#include <memory>
#include <vector>

#include "bsvie/girsanov.hpp"
#include "bsvie/regression.hpp"
#include "bsvie/terminal.hpp"

namespace bsvie {

/// Nonlinear driver g(t, s, y, z, u_1..u_m, x, xt). The jump argument
/// enters through the integral functionals u_m = integral k(z) w_m(z) nu(dz)
/// of the declared weight basis. `x` binds the state at the inner time s,
/// `xt` the state at the row time t.
struct Driver {
    dsl::Expression g;
    std::vector<dsl::Expression> jump_weights; // functions of zeta only
    double lipschitz_c = 0.0;

    int n_weights() const { return static_cast<int>(jump_weights.size()); }
    bool depends_on_y() const { return g.depends_on(dsl::Var::Y); }
    void validate() const;

    /// Audits the declared Lipschitz constant on a sampled box.
    dsl::LipschitzProbeResult probe_lipschitz(double box_half_width = 3.0, int samples = 4096,
                                              std::uint64_t seed = 20180923) const;
};

struct SolverOptions {
    double picard_tol = 1e-8;
    int max_picard = 30;
};

/// Discrete solution of the backward equation on the triangle. The
/// diagonal Y is stored per path; Z and the K mark-basis coefficients are
/// stored as regression coefficients per cell (i, j), j < N, and can be
/// re-expanded against the shared RegressionSet.
struct SolutionSurface {
    TimeGrid grid;
    int n_paths = 0;
    int n_weights = 0;
    int sign = 1;

    std::vector<double> y; // diagonal, node-major [(j)*n_paths + p]
    std::vector<NodeEstimate> y_nodes;

    std::vector<Eigen::VectorXd> z_coef;              // [tri_index(i, j)], j < N
    std::vector<std::vector<Eigen::VectorXd>> k_coef; // [m][tri_index(i, j)]
    Eigen::MatrixXd mark_gram;                        // G_mm' = integral w_m w_m' dnu

    std::vector<double> picard_history;
    int picard_iterations = 0;

    double norm_y = 0.0, norm_z = 0.0, norm_k = 0.0; // L2-norm estimates

    std::shared_ptr<const RegressionSet> regressions;

    std::size_t tri_index(int i, int j) const {
        // Cells with i <= j <= N-1.
        const std::size_t rows = grid.steps;
        return static_cast<std::size_t>(i) * rows - static_cast<std::size_t>(i) * (i - 1) / 2 +
               (j - i);
    }

    double y_at(int j, int p) const { return y[static_cast<std::size_t>(j) * n_paths + p]; }

    /// Per-path Z(t_i, t_j) values.
    std::vector<double> z_values(int i, int j) const;
    /// Per-path coefficients kappa_m of K(t_i, t_j, .) in the mark basis.
    std::vector<double> k_values(int i, int j, int m) const;
    /// Per-path u_m(t_i, t_j) = (G kappa)_m.
    std::vector<double> u_values(int i, int j, int m) const;
};

/// Backward-sweep / Picard least-squares Monte Carlo solver.
SolutionSurface solve(const Driver& driver, const TerminalProcess& psi, int sign,
                      const PathBundle& bundle, std::shared_ptr<const RegressionSet> regressions,
                      const SolverOptions& options = {});

/// Mean-square residual of the discretized equation per row, with the
/// realized increments plugged into the stored surface.
std::vector<double> residual(const SolutionSurface& surface, const Driver& driver,
                             const TerminalProcess& psi, const PathBundle& bundle);

struct OracleResult {
    double y0 = 0.0;
    double std_error = 0.0;
    int replications = 0;
};

/// Brute-force dynamic-programming estimate of Y(0) on a tiny grid:
/// conditional expectations by resampled subtrees instead of regression.
/// Cost grows as branching^N; guarded by a node cap.
OracleResult nested_mc_oracle(const Driver& driver, const TerminalProcess& psi, int sign,
                              const TimeGrid& tiny_grid, const JumpModel& jumps,
                              const DiffusionModel& diffusion, int branching, int replications,
                              std::uint64_t seed, const SolverOptions& options = {},
                              std::uint64_t max_tree_nodes = 60000000);

} // namespace bsvie
