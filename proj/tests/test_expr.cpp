#include "doctest.h"

#include <cmath>

#include "bsvie/expr.hpp"
#include "corpus.hpp"

using namespace bsvie;
using dsl::Env;
using dsl::Expression;
using dsl::Var;

namespace {

double eval(const char* text, const Env& env = {}) {
    return Expression::parse(text).evaluate(env);
}

} // namespace

TEST_CASE("parse builds the documented structure") {
    Expression e = Expression::parse("0.5*z + max(y, 0)");
    CHECK(e.print() == "0.5*z + max(y, 0)");
    // Add at the root, Mul on the left, Max on the right.
    const dsl::Node* root = e.root();
    REQUIRE(root != nullptr);
    CHECK(root->kind == dsl::NodeKind::Add);
    CHECK(root->a->kind == dsl::NodeKind::Mul);
    CHECK(root->b->kind == dsl::NodeKind::Max);
}

TEST_CASE("unary minus binds looser than the power operator") {
    Expression e = Expression::parse("-x^2");
    CHECK(e.root()->kind == dsl::NodeKind::Neg);
    CHECK(e.root()->a->kind == dsl::NodeKind::Pow);
    Env env;
    env.set(Var::X, 3.0);
    CHECK(e.evaluate(env) == -9.0);
    CHECK(eval("(-x)^2", env) == 9.0);
}

TEST_CASE("power is left associative") {
    CHECK(eval("2^3^2") == 64.0);
    CHECK(eval("2^(3^2)") == 512.0);
}

TEST_CASE("basic arithmetic semantics") {
    CHECK(eval("exp(0)") == 1.0);
    CHECK(eval("abs(-3) + 2^3") == 11.0);
    CHECK(eval("2*3 + 4*5") == 26.0);
    CHECK(eval("min(2, max(1, 0))") == 1.0);
    CHECK(eval("ind(0)") == 1.0);
    CHECK(eval("ind(-1e-300)") == 0.0);
    CHECK(eval("indicator(2)") == 1.0);
    CHECK(eval("10 - 4 - 3") == 3.0);
    CHECK(eval("2 - -3") == 5.0);
}

TEST_CASE("syntax errors carry the byte offset and expectation") {
    try {
        Expression::parse("z +");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 3);
        CHECK(!e.expected().empty());
    }
    CHECK_THROWS_AS(Expression::parse("(x"), ParseError);
    CHECK_THROWS_AS(Expression::parse(""), ParseError);
    CHECK_THROWS_AS(Expression::parse("   "), ParseError);
    CHECK_THROWS_AS(Expression::parse("max(x)"), ParseError);
    CHECK_THROWS_AS(Expression::parse("abs(x, y)"), ParseError);
}

TEST_CASE("unknown identifiers are rejected with their position") {
    try {
        Expression::parse("z + foo");
        FAIL("expected UnknownVariableError");
    } catch (const UnknownVariableError& e) {
        CHECK(e.offset() == 4);
        CHECK(e.name() == "foo");
    }
    CHECK_THROWS_AS(Expression::parse("sin(x)"), UnknownVariableError);
}

TEST_CASE("evaluation guards its domain") {
    Env env;
    env.set(Var::X, 2.0);
    CHECK_THROWS_AS(eval("1/(x - x)", env), DomainError);
    CHECK_THROWS_AS(eval("log(0)"), DomainError);
    CHECK_THROWS_AS(eval("log(x - 3)", env), DomainError);
    CHECK_THROWS_AS(eval("sqrt(0 - 1)"), DomainError);
    CHECK_THROWS_AS(eval("(0 - 2)^0.5"), DomainError);
    CHECK_THROWS_AS(eval("exp(1000)"), DomainError);
    CHECK_THROWS_AS(eval("y"), UnboundVariableError);
}

TEST_CASE("round trip: print(parse(text)) reparses to an identical tree") {
    for (const char* text : expression_corpus()) {
        Expression first = Expression::parse(text);
        Expression second = Expression::parse(first.print());
        CHECK_MESSAGE(first.identical(second), "corpus text: ", text);
        // And printing is a fixed point from then on.
        CHECK(first.print() == second.print());
    }
}

TEST_CASE("free variables and substitution") {
    Expression e = Expression::parse("x*exp(-(s - t)) + y");
    auto vars = e.free_variables();
    CHECK(vars.size() == 4);
    CHECK(e.depends_on(Var::Y));
    CHECK(!e.depends_on(Var::Z));
    Expression renamed = e.substitute(Var::X, Var::Xt);
    CHECK(renamed.depends_on(Var::Xt));
    CHECK(!renamed.depends_on(Var::X));
    CHECK(renamed.print() == "xt*exp(-(s - t)) + y");
}

TEST_CASE("compiled expressions agree with tree evaluation") {
    Env env;
    env.set(Var::T, 0.3).set(Var::S, 0.7).set(Var::Y, -1.2).set(Var::Z, 0.4);
    env.set(Var::U1, 2.0).set(Var::X, 1.5).set(Var::Xt, 0.9).set(Var::Zeta, -0.3);
    env.set(Var::U2, 0.1).set(Var::U3, -0.5).set(Var::Xs, 2.2);
    for (const char* text : expression_corpus()) {
        Expression e = Expression::parse(text);
        dsl::CompiledExpr ce(e);
        CHECK(ce.evaluate(env) == doctest::Approx(e.evaluate(env)).epsilon(1e-15));
    }
}

TEST_CASE("lipschitz probe measures affine expressions exactly") {
    dsl::Box box = {
        {Var::Y, {-2.0, 2.0}},
        {Var::Z, {-2.0, 2.0}},
        {Var::U1, {-2.0, 2.0}},
    };
    auto r = dsl::lipschitz_probe(Expression::parse("z"), box, 256, 1.0, 7);
    CHECK(r.pass);
    CHECK(r.estimate == doctest::Approx(1.0).epsilon(1e-12));

    r = dsl::lipschitz_probe(Expression::parse("2*z"), box, 256, 1.0, 7);
    CHECK(!r.pass);
    CHECK(r.estimate == doctest::Approx(2.0).epsilon(1e-12));

    r = dsl::lipschitz_probe(Expression::parse("0.3*z + 0.2*u1 - 0.7*y"), box, 256, 0.7, 7);
    CHECK(r.pass);
    CHECK(r.estimate == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("lipschitz probe handles kinks and constants") {
    dsl::Box box = {
        {Var::Y, {-2.0, 2.0}},
        {Var::U1, {-2.0, 2.0}},
    };
    auto r = dsl::lipschitz_probe(Expression::parse("max(y,0) + 0.5*u1"), box, 512, 1.0, 11);
    CHECK(r.pass);
    CHECK(r.estimate <= 1.0 + 1e-12);
    CHECK(r.estimate > 0.9); // the y-kink realizes slope 1

    // No (y, z, u) dependence at all: constant zero.
    r = dsl::lipschitz_probe(Expression::parse("t + x"), box, 16, 0.0, 3);
    CHECK(r.pass);
    CHECK(r.estimate == 0.0);
}

TEST_CASE("lipschitz probe reports unevaluable boxes") {
    dsl::Box box = {{Var::Y, {-2.0, 2.0}}};
    CHECK_THROWS_AS(dsl::lipschitz_probe(Expression::parse("log(y)"), box, 64, 1.0, 3),
                    EvaluationError);
}
