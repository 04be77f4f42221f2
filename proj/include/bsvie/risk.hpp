#pragma once

#include <string>
#include <vector>

#include "bsvie/solver.hpp"

namespace bsvie {

/// rho(t; psi) := Y^{-psi}(t) for a driver g(t, s, z, k(.)) independent of
/// y. When `convex` is set the driver is probed for midpoint convexity in
/// (z, u) before any solve.
struct RiskSpec {
    Driver driver;
    bool convex = true;
    TerminalProcess position;

    void validate() const;
};

struct RiskValues {
    std::vector<NodeEstimate> rho; // per node
    SolutionSurface surface;       // the underlying Y^{-psi}
};

/// Risk values at every node (the diagonal of the sign = -1 solve).
RiskValues rho(const RiskSpec& spec, const PathBundle& bundle,
               std::shared_ptr<const RegressionSet> regressions, const SolverOptions& = {});

struct AxiomInputs {
    TerminalProcess psi1, psi2;    // convexity pair
    double shift = 1.0;            // translation constant a
    std::vector<double> lambdas = {0.25, 0.5, 0.75};
    dsl::Expression monotonicity_bump; // nonnegative F_T expression added to psi1
    int past_node = -1;            // node index for the past-independence check (-1: N/2)
};

struct AxiomVerdict {
    std::string axiom;
    bool pass = false;
    double worst_margin = 0.0; // slack; negative = violated
    int node = -1;
    double std_error = 0.0;
};

struct RiskReport {
    std::vector<NodeEstimate> rho_base;
    std::vector<AxiomVerdict> verdicts;
    bool all_pass() const {
        for (const auto& v : verdicts) {
            if (!v.pass) {
                return false;
            }
        }
        return !verdicts.empty();
    }
    const AxiomVerdict* find(const std::string& name) const {
        for (const auto& v : verdicts) {
            if (v.axiom == name) {
                return &v;
            }
        }
        return nullptr;
    }
};

/// Runs the axiom suite on common random numbers: convexity at the given
/// lambdas, monotonicity on the dominated pair (psi1, psi1 + bump),
/// translation invariance by `shift` (absolute 1e-8), past independence
/// (bit-exact) and the rho(t; 0) = 0 normalization when g(0) = 0.
RiskReport axiom_suite(const RiskSpec& spec, const AxiomInputs& inputs, const PathBundle& bundle,
                       std::shared_ptr<const RegressionSet> regressions,
                       const SolverOptions& = {}, double se_multiplier = 3.0);

} // namespace bsvie
