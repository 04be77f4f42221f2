#include "bsvie/girsanov.hpp"

#include <cmath>
#include <sstream>

#include "bsvie/parallel.hpp"

namespace bsvie {

GirsanovCoefficients GirsanovCoefficients::trivial() {
    GirsanovCoefficients c;
    c.beta = dsl::Expression::literal(0.0);
    c.theta = dsl::Expression::literal(0.0);
    c.epsilon = 1.0;
    return c;
}

DensityPath stochastic_exponential(const GirsanovCoefficients& coeffs, const PathBundle& bundle) {
    const int n = bundle.n_paths;
    const int steps = bundle.grid.steps;
    const double dt = bundle.grid.dt();

    dsl::CompiledExpr beta(coeffs.beta);
    dsl::CompiledExpr theta(coeffs.theta);
    dsl::CompiledExpr pi;
    if (coeffs.pi) {
        pi = dsl::CompiledExpr(*coeffs.pi);
    }
    const bool theta_has_state = coeffs.theta.depends_on(dsl::Var::X);
    const bool jumps_active = bundle.jumps.active();

    // Per-step nu-integral of theta; independent of the path unless theta
    // reads the state, in which case it is recomputed per (i, p).
    MarkQuadrature quad;
    std::vector<double> theta_comp(steps, 0.0);
    if (jumps_active) {
        quad = MarkQuadrature::build(bundle.jumps);
        if (!theta_has_state) {
            for (int i = 0; i < steps; ++i) {
                dsl::Env env;
                env.set(dsl::Var::S, bundle.grid.node(i));
                theta_comp[i] = bundle.jumps.lambda * quad.expectation([&](double z) {
                    env.set(dsl::Var::Zeta, z);
                    return theta.evaluate(env);
                });
            }
        }
    }

    DensityPath out;
    out.n_paths = n;
    out.node_count = steps + 1;
    out.m.resize(static_cast<std::size_t>(steps + 1) * n);

    parallel_for(static_cast<std::size_t>(n), [&](std::size_t p) {
        dsl::Env env;
        double log_m = 0.0;
        out.m[p] = 1.0;
        for (int i = 0; i < steps; ++i) {
            const double ti = bundle.grid.node(i);
            const double xi = bundle.state(i, static_cast<int>(p));
            env.set(dsl::Var::S, ti).set(dsl::Var::X, xi);
            const double bi = beta.evaluate(env);
            log_m += bi * bundle.brownian_increment(i, static_cast<int>(p)) - 0.5 * bi * bi * dt;

            if (jumps_active) {
                double comp = theta_comp[i];
                if (theta_has_state) {
                    comp = bundle.jumps.lambda * quad.expectation([&](double z) {
                        env.set(dsl::Var::Zeta, z);
                        return theta.evaluate(env);
                    });
                }
                log_m -= comp * dt;
                auto jr = bundle.jumps_in(i, static_cast<int>(p));
                for (std::size_t k = 0; k < jr.count; ++k) {
                    env.set(dsl::Var::Zeta, jr.mark[k]);
                    const double th = theta.evaluate(env);
                    if (th <= -1.0) {
                        std::ostringstream os;
                        os << "theta = " << th << " <= -1 at mark " << jr.mark[k]
                           << " (time " << jr.time[k] << ", path " << p << ")";
                        throw DomainError(os.str());
                    }
                    if (th < -1.0 + coeffs.epsilon) {
                        std::ostringstream os;
                        os << "theta = " << th << " violates the declared bound -1 + epsilon = "
                           << -1.0 + coeffs.epsilon << " at mark " << jr.mark[k];
                        throw Error(os.str());
                    }
                    if (coeffs.pi) {
                        dsl::Env penv;
                        penv.set(dsl::Var::Zeta, jr.mark[k]);
                        const double dom = pi.evaluate(penv);
                        if (std::fabs(th) > dom) {
                            std::ostringstream os;
                            os << "|theta| = " << std::fabs(th)
                               << " exceeds the declared dominant Pi = " << dom << " at mark "
                               << jr.mark[k];
                            throw Error(os.str());
                        }
                    }
                    log_m += std::log1p(th);
                }
            }
            out.m[static_cast<std::size_t>(i + 1) * n + p] = std::exp(log_m);
            if (!std::isfinite(out.m[static_cast<std::size_t>(i + 1) * n + p])) {
                std::ostringstream os;
                os << "stochastic exponential overflowed at node " << i + 1 << ", path " << p;
                throw EvaluationError(os.str());
            }
        }
    });
    return out;
}

RatioEstimate q_conditional_ratio(std::span<const double> payoff, const DensityPath& density,
                                  const RegressionSet& regressions, int node,
                                  DenominatorMode mode) {
    const PathBundle& bundle = regressions.bundle();
    const int n = bundle.n_paths;
    if (static_cast<int>(payoff.size()) != n || density.n_paths != n) {
        throw Error("q_conditional_ratio: size mismatch");
    }
    const int terminal = bundle.grid.steps;

    // Weights: M(T) in Regressed mode, M(T)/M(t) in Simulated mode. Both
    // modes self-normalize through a fitted denominator so that constants
    // pass through exactly.
    std::vector<double> w(n), wf(n);
    for (int p = 0; p < n; ++p) {
        double weight = density.at(terminal, p);
        if (mode == DenominatorMode::Simulated) {
            weight /= density.at(node, p);
        }
        w[p] = weight;
        wf[p] = weight * payoff[p];
    }

    RatioEstimate out;
    out.values.resize(n);

    if (node == 0) {
        double sw = 0.0, swf = 0.0;
        for (int p = 0; p < n; ++p) {
            sw += w[p];
            swf += wf[p];
        }
        if (sw == 0.0) {
            throw Error("q_conditional_ratio: zero total weight");
        }
        const double ratio = swf / sw;
        double s2 = 0.0;
        for (int p = 0; p < n; ++p) {
            const double d = w[p] * (payoff[p] - ratio);
            s2 += d * d;
        }
        out.mean = ratio;
        out.at_x0 = ratio;
        out.std_error = std::sqrt(s2) / sw;
        std::fill(out.values.begin(), out.values.end(), ratio);
        out.numerator_coef = {swf / n};
        out.denominator_coef = {sw / n};
        return out;
    }

    const NodeRegression& reg = regressions.at(node);
    Eigen::VectorXd num_coef = reg.coefficients(wf);
    Eigen::VectorXd den_coef = reg.coefficients(w);
    std::vector<double> num(n), den(n);
    reg.predict(num_coef, num);
    reg.predict(den_coef, den);

    double mean = 0.0;
    for (int p = 0; p < n; ++p) {
        if (!(den[p] > 0.0)) {
            std::ostringstream os;
            os << "estimated denominator E[dQ/dP | F_t] is not positive at node " << node
               << ", path " << p << " (value " << den[p] << "); enlarge the basis or paths";
            throw Error(os.str());
        }
        out.values[p] = num[p] / den[p];
        mean += out.values[p];
    }
    mean /= n;
    double var = 0.0;
    for (int p = 0; p < n; ++p) {
        var += (out.values[p] - mean) * (out.values[p] - mean);
    }
    out.mean = mean;
    out.std_error = std::sqrt(var / n) / std::sqrt(static_cast<double>(n));
    const double den0 = reg.evaluate(den_coef, bundle.x0);
    out.at_x0 = den0 > 0.0 ? reg.evaluate(num_coef, bundle.x0) / den0 : mean;
    out.numerator_coef.assign(num_coef.data(), num_coef.data() + num_coef.size());
    out.denominator_coef.assign(den_coef.data(), den_coef.data() + den_coef.size());
    return out;
}

} // namespace bsvie
