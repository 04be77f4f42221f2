#pragma once

#include <vector>

#include "bsvie/expr.hpp"
#include "bsvie/simulate.hpp"

namespace bsvie {

enum class TerminalClass {
    Deterministic,  // psi(t), variables: t
    MarkovTerminal, // psi(t) = f(t, X(T)), variables: t, x
    PathFunctional, // additionally reads the state at the evaluation node, variables: t, x, xt
};

/// Position / terminal-value process psi in L^2_{F_T}[0, T]: for each node
/// time t an F_T-measurable value. `x` binds to X(T) and `xt` to X(t).
struct TerminalProcess {
    TerminalClass cls = TerminalClass::Deterministic;
    dsl::Expression expr;

    void validate() const;

    /// psi(t_i) per node and path, node-major [(i)*n_paths + p].
    /// Fails if any value is non-finite (square-integrability guard).
    std::vector<double> evaluate(const PathBundle& bundle) const;

    static TerminalProcess deterministic(dsl::Expression e);
    static TerminalProcess markov(dsl::Expression e);
    static TerminalProcess path_functional(dsl::Expression e);

    /// a*psi1 + b*psi2 as a single process (class is the wider of the two).
    static TerminalProcess combine(double a, const TerminalProcess& p1, double b,
                                   const TerminalProcess& p2);
    /// psi + a.
    static TerminalProcess shifted(const TerminalProcess& p, double a);
};

} // namespace bsvie
