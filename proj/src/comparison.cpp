#include "bsvie/comparison.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace bsvie {

void ComparisonInstance::validate() const {
    g1.validate();
    g2.validate();
    psi1.validate();
    psi2.validate();
    std::vector<std::string> problems;
    if (orientation == Orientation::YIndependent) {
        if (g1.depends_on_y() || g2.depends_on_y()) {
            problems.push_back(
                "y-independent orientation (-psi convention) requires drivers without y");
        }
    }
    if (g1.n_weights() != g2.n_weights()) {
        problems.push_back("both drivers must declare the same jump-weight basis");
    }
    if (!problems.empty()) {
        throw ConfigError(problems);
    }
}

namespace {

struct WorstTracker {
    double margin = std::numeric_limits<double>::infinity();
    std::string point;

    void update(double m, const std::string& where) {
        if (m < margin) {
            margin = m;
            point = where;
        }
    }

    ConditionVerdict verdict(const std::string& name, double tol = 1e-12) const {
        ConditionVerdict v;
        v.condition = name;
        v.worst_margin = margin;
        v.worst_point = point;
        v.pass = margin >= -tol;
        return v;
    }
};

double eval_driver(const dsl::CompiledExpr& g, double t, double s, double y, double z,
                   std::span<const double> u, double x, double xt) {
    dsl::Env env;
    env.set(dsl::Var::T, t).set(dsl::Var::S, s).set(dsl::Var::Y, y).set(dsl::Var::Z, z);
    for (std::size_t mm = 0; mm < u.size(); ++mm) {
        env.set(static_cast<dsl::Var>(static_cast<int>(dsl::Var::U1) + mm), u[mm]);
    }
    env.set(dsl::Var::X, x).set(dsl::Var::Xt, xt);
    return g.evaluate(env);
}

std::string point_string(double t, double s, double y, double z, std::span<const double> u) {
    std::ostringstream os;
    os << "(t=" << t << ", s=" << s << ", y=" << y << ", z=" << z;
    for (std::size_t mm = 0; mm < u.size(); ++mm) {
        os << ", u" << mm + 1 << "=" << u[mm];
    }
    os << ")";
    return os.str();
}

} // namespace

HypothesisReport check_hypotheses(const ComparisonInstance& instance,
                                  const SolutionSurface& surface1,
                                  const SolutionSurface& surface2, const PathBundle& bundle,
                                  int sample_count, std::uint64_t seed) {
    instance.validate();
    if (surface1.n_paths != bundle.n_paths || surface2.n_paths != bundle.n_paths) {
        throw Error("check_hypotheses: surfaces were not solved on this bundle");
    }
    const int n = bundle.n_paths;
    const int steps = bundle.grid.steps;
    const int m = instance.g1.n_weights();

    dsl::CompiledExpr g1(instance.g1.g);
    dsl::CompiledExpr g2(instance.g2.g);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> path_pick(0, n - 1);
    std::uniform_int_distribution<int> row_pick(0, std::max(0, steps - 1));

    HypothesisReport report;

    // Driver ordering g1 >= g2 at the realized second-instance values plus
    // random box samples around them.
    {
        WorstTracker worst;
        std::vector<double> u2(m, 0.0);
        for (int k = 0; k < sample_count; ++k) {
            const int i = row_pick(rng);
            std::uniform_int_distribution<int> col_pick(i, steps - 1);
            const int j = col_pick(rng);
            const int p = path_pick(rng);
            const double t = bundle.grid.node(i), s = bundle.grid.node(j);
            const double x = bundle.state(j, p), xt = bundle.state(i, p);
            double y, z;
            if (k % 2 == 0) {
                y = surface2.y_at(j, p);
                std::vector<double> zv = surface2.z_values(i, j);
                z = zv[p];
                for (int mm = 0; mm < m; ++mm) {
                    u2[mm] = surface2.u_values(i, j, mm)[p];
                }
            } else {
                y = -3.0 + 6.0 * unit(rng);
                z = -3.0 + 6.0 * unit(rng);
                for (int mm = 0; mm < m; ++mm) {
                    u2[mm] = -3.0 + 6.0 * unit(rng);
                }
            }
            const double margin =
                eval_driver(g1, t, s, y, z, u2, x, xt) - eval_driver(g2, t, s, y, z, u2, x, xt);
            worst.update(margin, point_string(t, s, y, z, u2));
        }
        report.verdicts.push_back(worst.verdict("driver_ordering"));
    }

    // Certificate bounds: theta >= -1 + eps and |theta| <= Pi on sampled
    // (s, x, zeta).
    {
        WorstTracker lower, dominated;
        dsl::CompiledExpr theta(instance.certificate.theta);
        dsl::CompiledExpr pi;
        const bool has_pi = instance.certificate.pi.has_value();
        if (has_pi) {
            pi = dsl::CompiledExpr(*instance.certificate.pi);
        }
        MarkQuadrature quad;
        const bool jumps_active = bundle.jumps.active();
        if (jumps_active) {
            quad = MarkQuadrature::build(bundle.jumps);
        }
        std::mt19937_64 mark_rng(seed ^ 0x5851f42d4c957f2dULL);
        for (int k = 0; k < sample_count; ++k) {
            const int j = row_pick(rng);
            const int p = path_pick(rng);
            const double s = bundle.grid.node(j);
            const double x = bundle.state(j, p);
            const double zeta = jumps_active ? bundle.jumps.sample_mark(mark_rng) : 1.0;
            dsl::Env env;
            env.set(dsl::Var::S, s).set(dsl::Var::X, x).set(dsl::Var::Zeta, zeta);
            const double th = theta.evaluate(env);
            std::ostringstream os;
            os << "(s=" << s << ", x=" << x << ", zeta=" << zeta << ")";
            lower.update(th - (-1.0 + instance.certificate.epsilon), os.str());
            if (has_pi) {
                dsl::Env penv;
                penv.set(dsl::Var::Zeta, zeta);
                dominated.update(pi.evaluate(penv) - std::fabs(th), os.str());
            }
        }
        report.verdicts.push_back(lower.verdict("theta_lower_bound"));
        if (has_pi) {
            report.verdicts.push_back(dominated.verdict("theta_dominated"));
        }
    }

    // Jump monotonicity at the realized coefficients:
    // g1(.., u1) - g1(.., u2) >= sum_m c_m (u1_m - u2_m), with the
    // certificate theta expanded in the mark basis.
    {
        WorstTracker worst;
        if (m == 0 || !bundle.jumps.active()) {
            worst.update(0.0, "(no jump dependence)");
        } else {
            // Expand theta(s, zeta) ~= sum_m c_m w_m(zeta) by least squares
            // under nu on the quadrature nodes (exact for theta already in
            // the span, e.g. theta = const * w_1 with point marks).
            MarkQuadrature quad = MarkQuadrature::build(bundle.jumps);
            std::vector<dsl::CompiledExpr> w;
            for (const auto& e : instance.g1.jump_weights) {
                w.emplace_back(e);
            }
            dsl::CompiledExpr theta(instance.certificate.theta);
            Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
            for (int a = 0; a < m; ++a) {
                for (int b = a; b < m; ++b) {
                    double v = quad.expectation([&](double z) {
                        dsl::Env env;
                        env.set(dsl::Var::Zeta, z);
                        return w[a].evaluate(env) * w[b].evaluate(env);
                    });
                    gram(a, b) = v;
                    gram(b, a) = v;
                }
            }
            auto theta_coeffs = [&](double s, double x) {
                Eigen::VectorXd rhs(m);
                for (int a = 0; a < m; ++a) {
                    rhs(a) = quad.expectation([&](double z) {
                        dsl::Env env;
                        env.set(dsl::Var::S, s).set(dsl::Var::X, x).set(dsl::Var::Zeta, z);
                        dsl::Env wenv;
                        wenv.set(dsl::Var::Zeta, z);
                        return theta.evaluate(env) * w[a].evaluate(wenv);
                    });
                }
                return Eigen::VectorXd(gram.ldlt().solve(rhs));
            };

            std::vector<double> u1(m), u2(m);
            for (int k = 0; k < sample_count; ++k) {
                const int i = row_pick(rng);
                std::uniform_int_distribution<int> col_pick(i, steps - 1);
                const int j = col_pick(rng);
                const int p = path_pick(rng);
                const double t = bundle.grid.node(i), s = bundle.grid.node(j);
                const double x = bundle.state(j, p), xt = bundle.state(i, p);
                const double y2 = surface2.y_at(j, p);
                const double z2 = surface2.z_values(i, j)[p];
                for (int mm = 0; mm < m; ++mm) {
                    u1[mm] = surface1.u_values(i, j, mm)[p];
                    u2[mm] = surface2.u_values(i, j, mm)[p];
                }
                const double lhs = eval_driver(g1, t, s, y2, z2, u1, x, xt) -
                                   eval_driver(g1, t, s, y2, z2, u2, x, xt);
                Eigen::VectorXd c = theta_coeffs(s, x);
                double rhs = 0.0;
                for (int mm = 0; mm < m; ++mm) {
                    rhs += c(mm) * (u1[mm] - u2[mm]);
                }
                worst.update(lhs - rhs, point_string(t, s, y2, z2, u1));
            }
        }
        report.verdicts.push_back(worst.verdict("jump_monotonicity", 1e-10));
    }

    // y-monotonicity (only binding in the +psi orientation).
    if (instance.orientation == Orientation::General) {
        WorstTracker worst;
        std::vector<double> u(m, 0.0);
        for (int k = 0; k < sample_count; ++k) {
            const int i = row_pick(rng);
            std::uniform_int_distribution<int> col_pick(i, steps - 1);
            const int j = col_pick(rng);
            const int p = path_pick(rng);
            const double t = bundle.grid.node(i), s = bundle.grid.node(j);
            const double x = bundle.state(j, p), xt = bundle.state(i, p);
            const double z = -3.0 + 6.0 * unit(rng);
            for (int mm = 0; mm < m; ++mm) {
                u[mm] = -3.0 + 6.0 * unit(rng);
            }
            double ya = -3.0 + 6.0 * unit(rng);
            double yb = -3.0 + 6.0 * unit(rng);
            if (ya < yb) {
                std::swap(ya, yb); // ya >= yb
            }
            const double margin =
                eval_driver(g1, t, s, ya, z, u, x, xt) - eval_driver(g1, t, s, yb, z, u, x, xt);
            worst.update(margin, point_string(t, s, ya, z, u));
        }
        report.verdicts.push_back(worst.verdict("y_monotonicity"));
    }

    // Terminal ordering, node-wise per path: psi1 >= psi2 in the +psi
    // orientation, psi1 <= psi2 in the -psi orientation.
    {
        WorstTracker worst;
        std::vector<double> v1 = instance.psi1.evaluate(bundle);
        std::vector<double> v2 = instance.psi2.evaluate(bundle);
        for (std::size_t k = 0; k < v1.size(); ++k) {
            const double margin = instance.orientation == Orientation::General ? v1[k] - v2[k]
                                                                                : v2[k] - v1[k];
            if (margin < worst.margin) {
                std::ostringstream os;
                os << "(node " << k / n << ", path " << k % n << ")";
                worst.update(margin, os.str());
            }
        }
        report.verdicts.push_back(worst.verdict("terminal_ordering"));
    }

    return report;
}

OrderingVerdict verify_ordering(const SolutionSurface& surface1, const SolutionSurface& surface2,
                                double tol_multiplier) {
    if (surface1.grid.steps != surface2.grid.steps || surface1.n_paths != surface2.n_paths) {
        throw Error("verify_ordering: surfaces live on different grids");
    }
    const int nodes = surface1.grid.node_count();
    OrderingVerdict out;
    out.difference.resize(nodes);
    out.combined_se.resize(nodes);
    out.pass = true;
    for (int j = 0; j < nodes; ++j) {
        const double d = surface1.y_nodes[j].mean - surface2.y_nodes[j].mean;
        const double se = std::sqrt(surface1.y_nodes[j].std_error * surface1.y_nodes[j].std_error +
                                    surface2.y_nodes[j].std_error * surface2.y_nodes[j].std_error);
        out.difference[j] = d;
        out.combined_se[j] = se;
        if (d < -tol_multiplier * se) {
            out.pass = false;
            out.violating_nodes.push_back(j);
        }
    }
    return out;
}

} // namespace bsvie
