#include "bsvie/terminal.hpp"

#include <cmath>
#include <sstream>

#include "bsvie/parallel.hpp"

namespace bsvie {

namespace {

bool allowed_for(TerminalClass cls, dsl::Var v) {
    using dsl::Var;
    switch (cls) {
    case TerminalClass::Deterministic: return v == Var::T;
    case TerminalClass::MarkovTerminal: return v == Var::T || v == Var::X;
    case TerminalClass::PathFunctional: return v == Var::T || v == Var::X || v == Var::Xt;
    }
    return false;
}

} // namespace

void TerminalProcess::validate() const {
    if (expr.empty()) {
        throw Error("terminal process: missing expression");
    }
    for (dsl::Var v : expr.free_variables()) {
        if (!allowed_for(cls, v)) {
            std::ostringstream os;
            os << "terminal process: variable '" << dsl::var_name(v)
               << "' is not available for this terminal class";
            throw Error(os.str());
        }
    }
}

std::vector<double> TerminalProcess::evaluate(const PathBundle& bundle) const {
    validate();
    const int n = bundle.n_paths;
    const int nodes = bundle.grid.node_count();
    std::vector<double> out(static_cast<std::size_t>(nodes) * n);
    dsl::CompiledExpr f(expr);

    parallel_for(static_cast<std::size_t>(nodes), [&](std::size_t i_) {
        const int i = static_cast<int>(i_);
        dsl::Env env;
        env.set(dsl::Var::T, bundle.grid.node(i));
        for (int p = 0; p < n; ++p) {
            if (cls != TerminalClass::Deterministic) {
                env.set(dsl::Var::X, bundle.state(bundle.grid.steps, p));
            }
            if (cls == TerminalClass::PathFunctional) {
                env.set(dsl::Var::Xt, bundle.state(i, p));
            }
            double v;
            try {
                v = f.evaluate(env);
            } catch (const Error& e) {
                std::ostringstream os;
                os << "terminal process failed at node " << i << ", path " << p << ": "
                   << e.what();
                throw EvaluationError(os.str());
            }
            if (!std::isfinite(v)) {
                std::ostringstream os;
                os << "terminal process is non-finite at node " << i << ", path " << p;
                throw EvaluationError(os.str());
            }
            out[static_cast<std::size_t>(i) * n + p] = v;
        }
    });
    return out;
}

TerminalProcess TerminalProcess::deterministic(dsl::Expression e) {
    return {TerminalClass::Deterministic, std::move(e)};
}

TerminalProcess TerminalProcess::markov(dsl::Expression e) {
    return {TerminalClass::MarkovTerminal, std::move(e)};
}

TerminalProcess TerminalProcess::path_functional(dsl::Expression e) {
    return {TerminalClass::PathFunctional, std::move(e)};
}

TerminalProcess TerminalProcess::combine(double a, const TerminalProcess& p1, double b,
                                         const TerminalProcess& p2) {
    using dsl::Expression;
    using dsl::NodeKind;
    Expression lhs = Expression::binary(NodeKind::Mul, Expression::literal(a), p1.expr);
    Expression rhs = Expression::binary(NodeKind::Mul, Expression::literal(b), p2.expr);
    TerminalProcess out;
    out.cls = std::max(p1.cls, p2.cls);
    out.expr = Expression::binary(NodeKind::Add, lhs, rhs);
    return out;
}

TerminalProcess TerminalProcess::shifted(const TerminalProcess& p, double a) {
    TerminalProcess out = p;
    out.expr = dsl::Expression::binary(dsl::NodeKind::Add, p.expr, dsl::Expression::literal(a));
    return out;
}

} // namespace bsvie
