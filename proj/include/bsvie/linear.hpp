#pragma once

#include <optional>
#include <vector>

#include "bsvie/girsanov.hpp"
#include "bsvie/resolvent.hpp"
#include "bsvie/terminal.hpp"

namespace bsvie {

/// Linear equation
///   Y(t) = sign*psi(t) + int_t^T [alpha(t,s) Y(s) + beta(s) Z(t,s)
///          + int theta(s,zeta) K(t,s,zeta) nu(dzeta)] ds - martingales,
/// solved by the measure-change / resolvent representation. sign = +1 is
/// the +psi convention, sign = -1 the -psi (risk-measure) convention.
struct LinearProblem {
    std::optional<VolterraKernel> kernel; // absent: alpha == 0 shortcut
    GirsanovCoefficients coeffs;
    TerminalProcess psi;
    int sign = 1;
    double resolvent_tol = 1e-8;
};

struct LinearSolution {
    std::vector<double> y; // node-major [(i)*n_paths + p]
    std::vector<NodeEstimate> nodes;
    std::vector<std::vector<double>> numerator_coef;   // per node
    std::vector<std::vector<double>> denominator_coef; // per node
    int n_paths = 0;
    int resolvent_order = 0;      // 0 when the alpha == 0 shortcut applied
    double resolvent_tail = 0.0;
};

/// Evaluates the closed formula node by node: the weighted conditional
/// ratio of sign*(psi(t) + int_t^T Phi(t,r) psi(r) dr) under dQ = M(T) dP.
LinearSolution solve_linear(const LinearProblem& problem, const PathBundle& bundle,
                            const RegressionSet& regressions,
                            DenominatorMode mode = DenominatorMode::Regressed);

} // namespace bsvie
