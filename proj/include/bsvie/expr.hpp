#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bsvie/errors.hpp"

namespace bsvie::dsl {

/// Variables an expression may reference. `x` is the diffusion state at the
/// evaluation time, `xt` the state at the row time t of a Volterra driver,
/// `xs` an alias used by frozen-parameter drivers, `zeta` a jump mark.
enum class Var : int {
    T = 0,
    S,
    Y,
    Z,
    U1,
    U2,
    U3,
    U4,
    U5,
    U6,
    U7,
    U8,
    U9,
    X,
    Zeta,
    Xt,
    Xs,
};

inline constexpr int kVarCount = 17;

const char* var_name(Var v);
std::optional<Var> var_from_name(std::string_view name);

/// Variable bindings for evaluation. Unset variables stay unbound and
/// reading them raises UnboundVariableError.
class Env {
public:
    Env() {
        bound_.fill(false);
        values_.fill(0.0);
    }

    Env& set(Var v, double value) {
        values_[static_cast<int>(v)] = value;
        bound_[static_cast<int>(v)] = true;
        return *this;
    }

    bool has(Var v) const { return bound_[static_cast<int>(v)]; }
    double get(Var v) const { return values_[static_cast<int>(v)]; }

private:
    std::array<double, kVarCount> values_;
    std::array<bool, kVarCount> bound_;
};

enum class NodeKind : std::uint8_t {
    Literal,
    Variable,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Abs,
    Exp,
    Log,
    Sqrt,
    Ind, // indicator(arg >= 0)
    Max,
    Min,
};

struct Node {
    NodeKind kind;
    double literal = 0.0;
    Var var = Var::T;
    std::shared_ptr<const Node> a;
    std::shared_ptr<const Node> b;
};

/// Immutable arithmetic expression. Parsing, printing and evaluation are
/// pure; copies share the tree and are safe across threads.
class Expression {
public:
    Expression() = default;

    static Expression parse(std::string_view text);

    static Expression literal(double v);
    static Expression variable(Var v);
    static Expression unary(NodeKind op, Expression arg);
    static Expression binary(NodeKind op, Expression lhs, Expression rhs);

    bool empty() const { return root_ == nullptr; }

    double evaluate(const Env& env) const;

    std::string print() const;

    std::vector<Var> free_variables() const;
    bool depends_on(Var v) const;

    /// Copy with every occurrence of `from` renamed to `to`.
    Expression substitute(Var from, Var to) const;

    /// Structural equality (same tree shape, operators, names, values).
    bool identical(const Expression& other) const;

    const Node* root() const { return root_.get(); }

private:
    explicit Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

    std::shared_ptr<const Node> root_;
};

/// Flattened postorder program for fast repeated evaluation of one
/// expression; behaves exactly like Expression::evaluate and is safe to
/// share across threads (evaluation uses only local storage).
class CompiledExpr {
public:
    CompiledExpr() = default;
    explicit CompiledExpr(const Expression& e);

    double evaluate(const Env& env) const;
    bool empty() const { return ops_.empty(); }

private:
    struct Op {
        NodeKind kind;
        double literal;
        Var var;
    };
    std::vector<Op> ops_;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Sampling box for the Lipschitz probe; unlisted variables are pinned to
/// the midpoint 0.
using Box = std::vector<std::pair<Var, Interval>>;

struct LipschitzProbeResult {
    double estimate = 0.0;
    bool pass = false;
    /// Worst pair, flattened as (var, value_a, value_b) for the moved
    /// coordinates; informational.
    std::string worst_pair;
};

/// Empirical Lipschitz estimate of `e` in the (y, z, u1..u9) coordinates:
/// max over sampled pairs of |Δe| / ||Δ(y,z,u)||_1. Pairs include
/// axis-aligned moves, so affine expressions are measured exactly.
LipschitzProbeResult lipschitz_probe(const Expression& e, const Box& box, int samples,
                                     double declared_c, std::uint64_t seed);

} // namespace bsvie::dsl
