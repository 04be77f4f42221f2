#include "bsvie/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

namespace bsvie::dsl {

namespace {

constexpr const char* kVarNames[kVarCount] = {
    "t", "s", "y", "z", "u1", "u2", "u3", "u4", "u5",
    "u6", "u7", "u8", "u9", "x", "zeta", "xt", "xs",
};

std::shared_ptr<const Node> make_node(Node n) {
    return std::make_shared<const Node>(std::move(n));
}

} // namespace

const char* var_name(Var v) { return kVarNames[static_cast<int>(v)]; }

std::optional<Var> var_from_name(std::string_view name) {
    for (int i = 0; i < kVarCount; ++i) {
        if (name == kVarNames[i]) {
            return static_cast<Var>(i);
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Tokenizer / parser
// ---------------------------------------------------------------------------

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End };

struct Token {
    Tok kind;
    std::size_t offset;
    double number = 0.0;
    std::string text;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
            ++pos_;
        }
        std::size_t at = pos_;
        if (pos_ >= src_.size()) {
            return {Tok::End, at};
        }
        char c = src_[pos_];
        switch (c) {
        case '+': ++pos_; return {Tok::Plus, at};
        case '-': ++pos_; return {Tok::Minus, at};
        case '*': ++pos_; return {Tok::Star, at};
        case '/': ++pos_; return {Tok::Slash, at};
        case '^': ++pos_; return {Tok::Caret, at};
        case '(': ++pos_; return {Tok::LParen, at};
        case ')': ++pos_; return {Tok::RParen, at};
        case ',': ++pos_; return {Tok::Comma, at};
        default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t end = pos_;
            while (end < src_.size() &&
                   (std::isdigit(static_cast<unsigned char>(src_[end])) || src_[end] == '.')) {
                ++end;
            }
            if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
                std::size_t e = end + 1;
                if (e < src_.size() && (src_[e] == '+' || src_[e] == '-')) {
                    ++e;
                }
                if (e < src_.size() && std::isdigit(static_cast<unsigned char>(src_[e]))) {
                    while (e < src_.size() && std::isdigit(static_cast<unsigned char>(src_[e]))) {
                        ++e;
                    }
                    end = e;
                }
            }
            double value = 0.0;
            auto [p, ec] = std::from_chars(src_.data() + pos_, src_.data() + end, value);
            if (ec != std::errc{} || p != src_.data() + end) {
                throw ParseError(at, "number", "malformed number literal at offset " +
                                                   std::to_string(at));
            }
            pos_ = end;
            Token t{Tok::Number, at};
            t.number = value;
            return t;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t end = pos_;
            while (end < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[end])) ||
                                         src_[end] == '_')) {
                ++end;
            }
            Token t{Tok::Ident, at};
            t.text = std::string(src_.substr(pos_, end - pos_));
            pos_ = end;
            return t;
        }
        throw ParseError(at, "operator, number, identifier or parenthesis",
                         std::string("unexpected character '") + c + "' at offset " +
                             std::to_string(at));
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;
};

struct FunctionSpec {
    const char* name;
    NodeKind kind;
    int arity;
};

constexpr FunctionSpec kFunctions[] = {
    {"abs", NodeKind::Abs, 1},  {"exp", NodeKind::Exp, 1},
    {"log", NodeKind::Log, 1},  {"sqrt", NodeKind::Sqrt, 1},
    {"ind", NodeKind::Ind, 1},  {"indicator", NodeKind::Ind, 1},
    {"max", NodeKind::Max, 2},  {"min", NodeKind::Min, 2},
};

const FunctionSpec* find_function(std::string_view name) {
    for (const auto& f : kFunctions) {
        if (name == f.name) {
            return &f;
        }
    }
    return nullptr;
}

class Parser {
public:
    explicit Parser(std::string_view src) : lexer_(src) { advance(); }

    std::shared_ptr<const Node> parse() {
        auto e = sum();
        if (cur_.kind != Tok::End) {
            fail("end of input or binary operator");
        }
        return e;
    }

private:
    void advance() { cur_ = lexer_.next(); }

    [[noreturn]] void fail(const std::string& expected) {
        throw ParseError(cur_.offset, expected,
                         "syntax error at offset " + std::to_string(cur_.offset) + ": expected " +
                             expected);
    }

    // sum := product (('+'|'-') product)*
    std::shared_ptr<const Node> sum() {
        auto lhs = product();
        while (cur_.kind == Tok::Plus || cur_.kind == Tok::Minus) {
            NodeKind op = cur_.kind == Tok::Plus ? NodeKind::Add : NodeKind::Sub;
            advance();
            auto rhs = product();
            lhs = make_node({op, 0.0, Var::T, lhs, rhs});
        }
        return lhs;
    }

    // product := unary (('*'|'/') unary)*
    std::shared_ptr<const Node> product() {
        auto lhs = unary();
        while (cur_.kind == Tok::Star || cur_.kind == Tok::Slash) {
            NodeKind op = cur_.kind == Tok::Star ? NodeKind::Mul : NodeKind::Div;
            advance();
            auto rhs = unary();
            lhs = make_node({op, 0.0, Var::T, lhs, rhs});
        }
        return lhs;
    }

    // unary := '-' unary | power    (so -x^2 is -(x^2))
    std::shared_ptr<const Node> unary() {
        if (cur_.kind == Tok::Minus) {
            advance();
            auto arg = unary();
            return make_node({NodeKind::Neg, 0.0, Var::T, arg, nullptr});
        }
        return power();
    }

    // power := primary ('^' primary)*   (left associative)
    std::shared_ptr<const Node> power() {
        auto lhs = primary();
        while (cur_.kind == Tok::Caret) {
            advance();
            auto rhs = primary();
            lhs = make_node({NodeKind::Pow, 0.0, Var::T, lhs, rhs});
        }
        return lhs;
    }

    std::shared_ptr<const Node> primary() {
        if (cur_.kind == Tok::Number) {
            Node n{NodeKind::Literal};
            n.literal = cur_.number;
            advance();
            return make_node(std::move(n));
        }
        if (cur_.kind == Tok::LParen) {
            advance();
            auto e = sum();
            if (cur_.kind != Tok::RParen) {
                fail("')'");
            }
            advance();
            return e;
        }
        if (cur_.kind == Tok::Ident) {
            Token ident = cur_;
            advance();
            if (cur_.kind == Tok::LParen) {
                const FunctionSpec* fn = find_function(ident.text);
                if (fn == nullptr) {
                    throw UnknownVariableError(ident.offset, ident.text,
                                               "unknown function '" + ident.text +
                                                   "' at offset " + std::to_string(ident.offset));
                }
                advance();
                auto a = sum();
                std::shared_ptr<const Node> b;
                if (fn->arity == 2) {
                    if (cur_.kind != Tok::Comma) {
                        fail("','");
                    }
                    advance();
                    b = sum();
                }
                if (cur_.kind != Tok::RParen) {
                    fail(fn->arity == 2 ? "')'" : "')' (single-argument function)");
                }
                advance();
                return make_node({fn->kind, 0.0, Var::T, a, b});
            }
            auto v = var_from_name(ident.text);
            if (!v) {
                throw UnknownVariableError(ident.offset, ident.text,
                                           "unknown variable '" + ident.text + "' at offset " +
                                               std::to_string(ident.offset));
            }
            Node n{NodeKind::Variable};
            n.var = *v;
            return make_node(std::move(n));
        }
        fail("number, variable, function call or '('");
    }

    Lexer lexer_;
    Token cur_;
};

} // namespace

Expression Expression::parse(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
        ++i;
    }
    if (i == text.size()) {
        throw ParseError(0, "nonempty expression", "empty expression");
    }
    Parser p(text);
    return Expression(p.parse());
}

Expression Expression::literal(double v) {
    Node n{NodeKind::Literal};
    n.literal = v;
    return Expression(make_node(std::move(n)));
}

Expression Expression::variable(Var v) {
    Node n{NodeKind::Variable};
    n.var = v;
    return Expression(make_node(std::move(n)));
}

Expression Expression::unary(NodeKind op, Expression arg) {
    return Expression(make_node({op, 0.0, Var::T, arg.root_, nullptr}));
}

Expression Expression::binary(NodeKind op, Expression lhs, Expression rhs) {
    return Expression(make_node({op, 0.0, Var::T, lhs.root_, rhs.root_}));
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void domain_fail(const char* what, double arg) {
    std::ostringstream os;
    os << what << " (argument " << arg << ")";
    throw DomainError(os.str());
}

double apply_unary(NodeKind kind, double a) {
    double r = 0.0;
    switch (kind) {
    case NodeKind::Neg: r = -a; break;
    case NodeKind::Abs: r = std::fabs(a); break;
    case NodeKind::Exp:
        r = std::exp(a);
        if (!std::isfinite(r)) domain_fail("exp overflow", a);
        break;
    case NodeKind::Log:
        if (a <= 0.0) domain_fail("log of non-positive value", a);
        r = std::log(a);
        break;
    case NodeKind::Sqrt:
        if (a < 0.0) domain_fail("sqrt of negative value", a);
        r = std::sqrt(a);
        break;
    case NodeKind::Ind: r = a >= 0.0 ? 1.0 : 0.0; break;
    default: throw Error("internal: bad unary op");
    }
    return r;
}

double apply_binary(NodeKind kind, double a, double b) {
    double r = 0.0;
    switch (kind) {
    case NodeKind::Add: r = a + b; break;
    case NodeKind::Sub: r = a - b; break;
    case NodeKind::Mul: r = a * b; break;
    case NodeKind::Div:
        if (b == 0.0) domain_fail("division by zero", b);
        r = a / b;
        break;
    case NodeKind::Pow:
        r = std::pow(a, b);
        if (!std::isfinite(r)) {
            std::ostringstream os;
            os << "pow(" << a << ", " << b << ") is not finite";
            throw DomainError(os.str());
        }
        break;
    case NodeKind::Max: r = std::max(a, b); break;
    case NodeKind::Min: r = std::min(a, b); break;
    default: throw Error("internal: bad binary op");
    }
    if (!std::isfinite(r)) {
        throw DomainError("arithmetic produced a non-finite value");
    }
    return r;
}

double eval_node(const Node* n, const Env& env) {
    switch (n->kind) {
    case NodeKind::Literal: return n->literal;
    case NodeKind::Variable:
        if (!env.has(n->var)) {
            throw UnboundVariableError(var_name(n->var));
        }
        return env.get(n->var);
    case NodeKind::Neg:
    case NodeKind::Abs:
    case NodeKind::Exp:
    case NodeKind::Log:
    case NodeKind::Sqrt:
    case NodeKind::Ind:
        return apply_unary(n->kind, eval_node(n->a.get(), env));
    default:
        return apply_binary(n->kind, eval_node(n->a.get(), env), eval_node(n->b.get(), env));
    }
}

} // namespace

double Expression::evaluate(const Env& env) const {
    if (!root_) {
        throw Error("evaluate called on empty expression");
    }
    return eval_node(root_.get(), env);
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

namespace {

int precedence(NodeKind k) {
    switch (k) {
    case NodeKind::Add:
    case NodeKind::Sub: return 1;
    case NodeKind::Mul:
    case NodeKind::Div: return 2;
    case NodeKind::Neg: return 3;
    case NodeKind::Pow: return 4;
    default: return 5;
    }
}

void print_number(std::string& out, double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, p);
}

void print_node(const Node* n, std::string& out) {
    auto child = [&](const Node* c, bool needs_paren) {
        if (needs_paren) {
            out += '(';
            print_node(c, out);
            out += ')';
        } else {
            print_node(c, out);
        }
    };
    int p = precedence(n->kind);
    switch (n->kind) {
    case NodeKind::Literal: print_number(out, n->literal); return;
    case NodeKind::Variable: out += var_name(n->var); return;
    case NodeKind::Neg:
        out += '-';
        child(n->a.get(), precedence(n->a->kind) < p);
        return;
    case NodeKind::Abs:
    case NodeKind::Exp:
    case NodeKind::Log:
    case NodeKind::Sqrt:
    case NodeKind::Ind: {
        const char* name = n->kind == NodeKind::Abs    ? "abs"
                           : n->kind == NodeKind::Exp  ? "exp"
                           : n->kind == NodeKind::Log  ? "log"
                           : n->kind == NodeKind::Sqrt ? "sqrt"
                                                       : "ind";
        out += name;
        out += '(';
        print_node(n->a.get(), out);
        out += ')';
        return;
    }
    case NodeKind::Max:
    case NodeKind::Min:
        out += n->kind == NodeKind::Max ? "max" : "min";
        out += '(';
        print_node(n->a.get(), out);
        out += ", ";
        print_node(n->b.get(), out);
        out += ')';
        return;
    case NodeKind::Add:
    case NodeKind::Sub:
    case NodeKind::Mul:
    case NodeKind::Div:
    case NodeKind::Pow: {
        const char* op = n->kind == NodeKind::Add   ? " + "
                         : n->kind == NodeKind::Sub ? " - "
                         : n->kind == NodeKind::Mul ? "*"
                         : n->kind == NodeKind::Div ? "/"
                                                    : "^";
        child(n->a.get(), precedence(n->a->kind) < p);
        out += op;
        child(n->b.get(), precedence(n->b->kind) <= p);
        return;
    }
    }
}

} // namespace

std::string Expression::print() const {
    if (!root_) {
        return "";
    }
    std::string out;
    print_node(root_.get(), out);
    return out;
}

// ---------------------------------------------------------------------------
// Introspection
// ---------------------------------------------------------------------------

namespace {

void collect_vars(const Node* n, std::array<bool, kVarCount>& seen) {
    if (n == nullptr) {
        return;
    }
    if (n->kind == NodeKind::Variable) {
        seen[static_cast<int>(n->var)] = true;
    }
    collect_vars(n->a.get(), seen);
    collect_vars(n->b.get(), seen);
}

bool nodes_identical(const Node* a, const Node* b) {
    if (a == b) {
        return true;
    }
    if (a == nullptr || b == nullptr || a->kind != b->kind) {
        return false;
    }
    if (a->kind == NodeKind::Literal) {
        return a->literal == b->literal;
    }
    if (a->kind == NodeKind::Variable) {
        return a->var == b->var;
    }
    return nodes_identical(a->a.get(), b->a.get()) && nodes_identical(a->b.get(), b->b.get());
}

} // namespace

std::vector<Var> Expression::free_variables() const {
    std::array<bool, kVarCount> seen{};
    collect_vars(root_.get(), seen);
    std::vector<Var> out;
    for (int i = 0; i < kVarCount; ++i) {
        if (seen[i]) {
            out.push_back(static_cast<Var>(i));
        }
    }
    return out;
}

bool Expression::depends_on(Var v) const {
    std::array<bool, kVarCount> seen{};
    collect_vars(root_.get(), seen);
    return seen[static_cast<int>(v)];
}

bool Expression::identical(const Expression& other) const {
    return nodes_identical(root_.get(), other.root_.get());
}

namespace {

std::shared_ptr<const Node> substitute_node(const std::shared_ptr<const Node>& n, Var from,
                                            Var to) {
    if (n == nullptr) {
        return nullptr;
    }
    if (n->kind == NodeKind::Variable) {
        if (n->var != from) {
            return n;
        }
        Node out = *n;
        out.var = to;
        return make_node(std::move(out));
    }
    auto a = substitute_node(n->a, from, to);
    auto b = substitute_node(n->b, from, to);
    if (a == n->a && b == n->b) {
        return n;
    }
    Node out = *n;
    out.a = std::move(a);
    out.b = std::move(b);
    return make_node(std::move(out));
}

} // namespace

Expression Expression::substitute(Var from, Var to) const {
    return Expression(substitute_node(root_, from, to));
}

// ---------------------------------------------------------------------------
// Compiled form
// ---------------------------------------------------------------------------

namespace {
constexpr std::size_t kEvalStackSize = 128;
}

CompiledExpr::CompiledExpr(const Expression& e) {
    if (e.empty()) {
        return;
    }
    // Explicit postorder traversal.
    std::vector<std::pair<const Node*, bool>> todo{{e.root(), false}};
    std::size_t depth = 0, max_depth = 0;
    while (!todo.empty()) {
        auto [n, expanded] = todo.back();
        todo.pop_back();
        if (n == nullptr) {
            continue;
        }
        if (expanded) {
            ops_.push_back({n->kind, n->literal, n->var});
            if (n->kind == NodeKind::Literal || n->kind == NodeKind::Variable) {
                ++depth;
            } else if (n->b != nullptr) {
                --depth;
            }
            max_depth = std::max(max_depth, depth);
        } else {
            todo.push_back({n, true});
            todo.push_back({n->b.get(), false});
            todo.push_back({n->a.get(), false});
        }
    }
    if (max_depth + 2 > kEvalStackSize) {
        throw Error("expression too deeply nested");
    }
}

double CompiledExpr::evaluate(const Env& env) const {
    if (ops_.empty()) {
        throw Error("evaluate called on empty expression");
    }
    double stack[kEvalStackSize];
    double* sp = stack;
    for (const Op& op : ops_) {
        switch (op.kind) {
        case NodeKind::Literal: *sp++ = op.literal; break;
        case NodeKind::Variable:
            if (!env.has(op.var)) {
                throw UnboundVariableError(var_name(op.var));
            }
            *sp++ = env.get(op.var);
            break;
        case NodeKind::Neg:
        case NodeKind::Abs:
        case NodeKind::Exp:
        case NodeKind::Log:
        case NodeKind::Sqrt:
        case NodeKind::Ind:
            sp[-1] = apply_unary(op.kind, sp[-1]);
            break;
        default:
            sp[-2] = apply_binary(op.kind, sp[-2], sp[-1]);
            --sp;
            break;
        }
    }
    return sp[-1];
}

// ---------------------------------------------------------------------------
// Lipschitz probe
// ---------------------------------------------------------------------------

namespace {

bool is_solution_coordinate(Var v) {
    int i = static_cast<int>(v);
    return v == Var::Y || v == Var::Z ||
           (i >= static_cast<int>(Var::U1) && i <= static_cast<int>(Var::U9));
}

} // namespace

LipschitzProbeResult lipschitz_probe(const Expression& e, const Box& box, int samples,
                                     double declared_c, std::uint64_t seed) {
    if (samples < 2) {
        throw Error("lipschitz_probe requires at least 2 samples");
    }
    auto find_interval = [&](Var v) -> Interval {
        for (const auto& [bv, iv] : box) {
            if (bv == v) {
                return iv;
            }
        }
        return {0.0, 0.0};
    };

    std::vector<Var> vars = e.free_variables();
    std::vector<Var> moved;
    for (Var v : vars) {
        if (is_solution_coordinate(v)) {
            moved.push_back(v);
        }
    }
    LipschitzProbeResult result;
    if (moved.empty()) {
        // Nothing to move; trivially Lipschitz with constant 0.
        result.estimate = 0.0;
        result.pass = true;
        return result;
    }

    CompiledExpr ce(e);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto base_env = [&]() {
        Env env;
        for (Var v : vars) {
            Interval iv = find_interval(v);
            env.set(v, iv.lo + (iv.hi - iv.lo) * unit(rng));
        }
        return env;
    };
    auto eval_or_fail = [&](const Env& env) {
        try {
            return ce.evaluate(env);
        } catch (const Error& err) {
            throw EvaluationError(std::string("lipschitz_probe: expression failed inside box: ") +
                                  err.what());
        }
    };

    double best = 0.0;
    std::string worst;
    auto consider = [&](const Env& a, const Env& b) {
        double denom = 0.0;
        for (Var v : moved) {
            denom += std::fabs(a.get(v) - b.get(v));
        }
        if (denom == 0.0) {
            return;
        }
        double ratio = std::fabs(eval_or_fail(a) - eval_or_fail(b)) / denom;
        if (ratio > best) {
            best = ratio;
            std::ostringstream os;
            for (Var v : moved) {
                if (a.get(v) != b.get(v)) {
                    os << var_name(v) << ": " << a.get(v) << " -> " << b.get(v) << "  ";
                }
            }
            worst = os.str();
        }
    };

    // Axis-aligned endpoint pairs measure affine coefficients exactly.
    for (Var v : moved) {
        Interval iv = find_interval(v);
        if (iv.hi == iv.lo) {
            continue;
        }
        for (int k = 0; k < std::max(1, samples / 8); ++k) {
            Env a = base_env();
            Env b = a;
            a.set(v, iv.lo);
            b.set(v, iv.hi);
            consider(a, b);
            // Short moves around a random center.
            double c = iv.lo + (iv.hi - iv.lo) * unit(rng);
            double h = (iv.hi - iv.lo) * 1e-3;
            Env a2 = base_env();
            Env b2 = a2;
            a2.set(v, std::max(iv.lo, c - h));
            b2.set(v, std::min(iv.hi, c + h));
            consider(a2, b2);
        }
    }
    // Joint random pairs (same non-solution coordinates).
    for (int k = 0; k < samples; ++k) {
        Env a = base_env();
        Env b = a;
        for (Var v : moved) {
            Interval iv = find_interval(v);
            b.set(v, iv.lo + (iv.hi - iv.lo) * unit(rng));
        }
        consider(a, b);
    }

    result.estimate = best;
    result.worst_pair = worst;
    result.pass = best <= declared_c * (1.0 + 1e-9);
    return result;
}

} // namespace bsvie::dsl
