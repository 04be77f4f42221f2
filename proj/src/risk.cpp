#include "bsvie/risk.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace bsvie {

namespace {

/// Midpoint convexity probe of g in the (z, u) coordinates on random
/// chords; rejects on any strict violation beyond 1e-12.
void probe_convexity(const Driver& driver, std::uint64_t seed = 20180404, int samples = 2048) {
    dsl::CompiledExpr g(driver.g);
    const int m = driver.n_weights();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-3.0, 3.0);
    std::uniform_real_distribution<double> time_unit(0.0, 1.0);

    auto eval = [&](double t, double s, double z, const std::vector<double>& u) {
        dsl::Env env;
        env.set(dsl::Var::T, t).set(dsl::Var::S, s).set(dsl::Var::Y, 0.0).set(dsl::Var::Z, z);
        for (int mm = 0; mm < m; ++mm) {
            env.set(static_cast<dsl::Var>(static_cast<int>(dsl::Var::U1) + mm), u[mm]);
        }
        env.set(dsl::Var::X, 0.0).set(dsl::Var::Xt, 0.0);
        return g.evaluate(env);
    };

    std::vector<double> u1(m), u2(m), um(m);
    for (int k = 0; k < samples; ++k) {
        const double t = time_unit(rng);
        const double s = t + (1.0 - t) * time_unit(rng);
        const double z1 = unit(rng), z2 = unit(rng);
        for (int mm = 0; mm < m; ++mm) {
            u1[mm] = unit(rng);
            u2[mm] = unit(rng);
            um[mm] = 0.5 * (u1[mm] + u2[mm]);
        }
        const double lhs = eval(t, s, 0.5 * (z1 + z2), um);
        const double rhs = 0.5 * (eval(t, s, z1, u1) + eval(t, s, z2, u2));
        if (lhs > rhs + 1e-12) {
            std::ostringstream os;
            os << "driver failed the convexity probe: midpoint value " << lhs
               << " exceeds chord value " << rhs << " at (z1=" << z1 << ", z2=" << z2 << ")";
            throw Error(os.str());
        }
    }
}

} // namespace

void RiskSpec::validate() const {
    driver.validate();
    position.validate();
    if (driver.depends_on_y()) {
        throw Error("risk driver must not depend on y");
    }
    if (convex) {
        probe_convexity(driver);
    }
}

RiskValues rho(const RiskSpec& spec, const PathBundle& bundle,
               std::shared_ptr<const RegressionSet> regressions, const SolverOptions& options) {
    spec.validate();
    RiskValues out;
    out.surface = solve(spec.driver, spec.position, -1, bundle, regressions, options);
    out.rho = out.surface.y_nodes;
    return out;
}

RiskReport axiom_suite(const RiskSpec& spec, const AxiomInputs& inputs, const PathBundle& bundle,
                       std::shared_ptr<const RegressionSet> regressions,
                       const SolverOptions& options, double se_multiplier) {
    spec.validate();
    inputs.psi1.validate();
    inputs.psi2.validate();
    const int nodes = bundle.grid.node_count();

    auto solve_for = [&](const TerminalProcess& psi) {
        return solve(spec.driver, psi, -1, bundle, regressions, options);
    };

    RiskReport report;
    SolutionSurface base = solve_for(spec.position);
    report.rho_base = base.y_nodes;

    // Translation invariance: rho(psi + a) = rho(psi) - a, absolute 1e-8.
    {
        SolutionSurface shifted = solve_for(TerminalProcess::shifted(spec.position, inputs.shift));
        AxiomVerdict v;
        v.axiom = "translation_invariance";
        double worst = 0.0;
        int worst_node = 0;
        for (int j = 0; j < nodes; ++j) {
            for (int p = 0; p < bundle.n_paths; ++p) {
                const double err =
                    std::fabs(shifted.y_at(j, p) - (base.y_at(j, p) - inputs.shift));
                if (err > worst) {
                    worst = err;
                    worst_node = j;
                }
            }
        }
        v.worst_margin = 1e-8 - worst;
        v.node = worst_node;
        v.pass = worst <= 1e-8;
        report.verdicts.push_back(v);
    }

    // Past independence: perturbing psi strictly before the node leaves the
    // node's values bit-identical.
    {
        const int k = inputs.past_node >= 0 ? inputs.past_node : bundle.grid.steps / 2;
        if (k < 0 || k >= nodes) {
            throw Error("axiom_suite: past-independence node out of range");
        }
        using dsl::Expression;
        using dsl::NodeKind;
        // psi'(t) = psi(t) + 100 * (1 - ind(t - t_k)), i.e. +100 on [0, t_k).
        Expression bump = Expression::binary(
            NodeKind::Mul, Expression::literal(100.0),
            Expression::binary(NodeKind::Sub, Expression::literal(1.0),
                               Expression::unary(NodeKind::Ind,
                                                 Expression::binary(NodeKind::Sub,
                                                                    Expression::variable(dsl::Var::T),
                                                                    Expression::literal(
                                                                        bundle.grid.node(k))))));
        TerminalProcess perturbed = spec.position;
        perturbed.expr = Expression::binary(NodeKind::Add, spec.position.expr, bump);
        SolutionSurface other = solve_for(perturbed);
        AxiomVerdict v;
        v.axiom = "past_independence";
        v.node = k;
        bool exact = true;
        for (int p = 0; p < bundle.n_paths; ++p) {
            if (other.y_at(k, p) != base.y_at(k, p)) {
                exact = false;
                break;
            }
        }
        v.pass = exact;
        v.worst_margin = exact ? 0.0 : -1.0;
        report.verdicts.push_back(v);
    }

    // Monotonicity: psi1 <= psi1 + bump implies rho(psi1) >= rho(psi1 + bump).
    {
        dsl::Expression bump = inputs.monotonicity_bump.empty()
                                   ? dsl::Expression::literal(1.0)
                                   : inputs.monotonicity_bump;
        TerminalProcess lower = inputs.psi1;
        TerminalProcess upper = inputs.psi1;
        upper.expr = dsl::Expression::binary(dsl::NodeKind::Add, inputs.psi1.expr, bump);
        upper.cls = inputs.psi1.cls;
        // The bump must be nonnegative path-wise.
        std::vector<double> lo = lower.evaluate(bundle);
        std::vector<double> hi = upper.evaluate(bundle);
        for (std::size_t k = 0; k < lo.size(); ++k) {
            if (hi[k] < lo[k]) {
                throw Error("axiom_suite: monotonicity bump is not nonnegative path-wise");
            }
        }
        SolutionSurface s_lo = solve_for(lower);
        SolutionSurface s_hi = solve_for(upper);
        AxiomVerdict v;
        v.axiom = "monotonicity";
        v.pass = true;
        double worst = std::numeric_limits<double>::infinity();
        for (int j = 0; j < nodes; ++j) {
            const double d = s_lo.y_nodes[j].mean - s_hi.y_nodes[j].mean;
            const double se =
                std::sqrt(s_lo.y_nodes[j].std_error * s_lo.y_nodes[j].std_error +
                          s_hi.y_nodes[j].std_error * s_hi.y_nodes[j].std_error);
            const double slack = d + se_multiplier * se;
            if (slack < worst) {
                worst = slack;
                v.node = j;
                v.std_error = se;
            }
            if (slack < 0.0) {
                v.pass = false;
            }
        }
        v.worst_margin = worst;
        report.verdicts.push_back(v);
    }

    // Convexity at each lambda on (psi1, psi2).
    {
        SolutionSurface s1 = solve_for(inputs.psi1);
        SolutionSurface s2 = solve_for(inputs.psi2);
        for (double lambda : inputs.lambdas) {
            TerminalProcess mix =
                TerminalProcess::combine(lambda, inputs.psi1, 1.0 - lambda, inputs.psi2);
            SolutionSurface sm = solve_for(mix);
            AxiomVerdict v;
            std::ostringstream name;
            name << "convexity_lambda_" << lambda;
            v.axiom = name.str();
            v.pass = true;
            double worst = std::numeric_limits<double>::infinity();
            for (int j = 0; j < nodes; ++j) {
                const double lhs = sm.y_nodes[j].mean;
                const double rhs =
                    lambda * s1.y_nodes[j].mean + (1.0 - lambda) * s2.y_nodes[j].mean;
                const double se = std::sqrt(
                    sm.y_nodes[j].std_error * sm.y_nodes[j].std_error +
                    lambda * lambda * s1.y_nodes[j].std_error * s1.y_nodes[j].std_error +
                    (1.0 - lambda) * (1.0 - lambda) * s2.y_nodes[j].std_error *
                        s2.y_nodes[j].std_error);
                const double slack = rhs - lhs + se_multiplier * se;
                if (slack < worst) {
                    worst = slack;
                    v.node = j;
                    v.std_error = se;
                }
                if (slack < 0.0) {
                    v.pass = false;
                }
            }
            v.worst_margin = worst;
            report.verdicts.push_back(v);
        }
    }

    // Normalization rho(t; 0): exact zero whenever g(t, s, 0, 0) = 0.
    {
        TerminalProcess zero = TerminalProcess::deterministic(dsl::Expression::literal(0.0));
        SolutionSurface sz = solve_for(zero);
        bool driver_vanishes = true;
        dsl::CompiledExpr g(spec.driver.g);
        for (int j = 0; j < bundle.grid.steps && driver_vanishes; ++j) {
            dsl::Env env;
            env.set(dsl::Var::T, bundle.grid.node(0)).set(dsl::Var::S, bundle.grid.node(j));
            env.set(dsl::Var::Y, 0.0).set(dsl::Var::Z, 0.0);
            for (int mm = 0; mm < spec.driver.n_weights(); ++mm) {
                env.set(static_cast<dsl::Var>(static_cast<int>(dsl::Var::U1) + mm), 0.0);
            }
            env.set(dsl::Var::X, bundle.state(j, 0)).set(dsl::Var::Xt, bundle.state(0, 0));
            if (g.evaluate(env) != 0.0) {
                driver_vanishes = false;
            }
        }
        AxiomVerdict v;
        v.axiom = "normalization";
        double worst = 0.0;
        for (int j = 0; j < nodes; ++j) {
            for (int p = 0; p < bundle.n_paths; ++p) {
                worst = std::max(worst, std::fabs(sz.y_at(j, p)));
            }
        }
        v.worst_margin = -worst;
        // Only asserted when the driver vanishes at the origin.
        v.pass = !driver_vanishes || worst == 0.0;
        report.verdicts.push_back(v);
    }

    return report;
}

} // namespace bsvie
