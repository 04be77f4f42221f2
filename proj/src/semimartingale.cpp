#include "bsvie/semimartingale.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bsvie/parallel.hpp"

namespace bsvie {

namespace {

/// Central finite-difference smoothness probe: first and second quotients
/// must stay finite on the sampled range.
void probe_c2(const dsl::Expression& f, double lo, double hi, const char* name) {
    dsl::CompiledExpr ce(f);
    const double h = std::max(1e-5, (hi - lo) * 1e-5);
    for (int k = 0; k <= 32; ++k) {
        const double x = lo + (hi - lo) * k / 32.0;
        dsl::Env env;
        double fm, f0, fp;
        try {
            fm = ce.evaluate(env.set(dsl::Var::X, x - h));
            f0 = ce.evaluate(env.set(dsl::Var::X, x));
            fp = ce.evaluate(env.set(dsl::Var::X, x + h));
        } catch (const Error& e) {
            std::ostringstream os;
            os << name << " failed the smoothness probe at x = " << x << ": " << e.what();
            throw EvaluationError(os.str());
        }
        const double d1 = (fp - fm) / (2.0 * h);
        const double d2 = (fp - 2.0 * f0 + fm) / (h * h);
        if (!std::isfinite(d1) || !std::isfinite(d2)) {
            std::ostringstream os;
            os << name << ": finite-difference quotients are not finite at x = " << x;
            throw EvaluationError(os.str());
        }
    }
}

std::pair<double, double> state_range(const PathBundle& bundle, double q_lo, double q_hi) {
    std::vector<double> all(bundle.x);
    std::sort(all.begin(), all.end());
    const auto pick = [&](double q) {
        const double pos = q * (all.size() - 1);
        const std::size_t idx = static_cast<std::size_t>(pos);
        const double frac = pos - idx;
        return idx + 1 < all.size() ? all[idx] * (1.0 - frac) + all[idx + 1] * frac : all[idx];
    };
    return {pick(q_lo), pick(q_hi)};
}

std::vector<double> chebyshev_points(double lo, double hi, int count) {
    std::vector<double> out(count);
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (int k = 0; k < count; ++k) {
        // First-kind nodes, increasing order.
        out[count - 1 - k] = mid + half * std::cos((2.0 * k + 1.0) * M_PI / (2.0 * count));
    }
    return out;
}

/// Natural cubic spline through (x_k, y_k); evaluation clamps to linear
/// extension outside the hull and counts those events.
class CubicSpline {
public:
    CubicSpline(const std::vector<double>& x, std::span<const double> y) : x_(x), y_(y.begin(), y.end()) {
        const int n = static_cast<int>(x.size());
        m_.assign(n, 0.0);
        if (n < 3) {
            return;
        }
        std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), d(n, 0.0);
        b[0] = 1.0;
        b[n - 1] = 1.0;
        for (int i = 1; i + 1 < n; ++i) {
            const double h0 = x[i] - x[i - 1], h1 = x[i + 1] - x[i];
            a[i] = h0 / 6.0;
            b[i] = (h0 + h1) / 3.0;
            c[i] = h1 / 6.0;
            d[i] = (y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0;
        }
        // Thomas algorithm.
        for (int i = 1; i < n; ++i) {
            const double w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        m_[n - 1] = d[n - 1] / b[n - 1];
        for (int i = n - 2; i >= 0; --i) {
            m_[i] = (d[i] - c[i] * m_[i + 1]) / b[i];
        }
    }

    double operator()(double x, int* extrapolations) const {
        const int n = static_cast<int>(x_.size());
        if (n == 1) {
            return y_[0];
        }
        if (x < x_.front() || x > x_.back()) {
            if (extrapolations != nullptr) {
                ++*extrapolations;
            }
            // Linear extension with the boundary slope.
            if (x < x_.front()) {
                const double h = x_[1] - x_[0];
                const double slope = (y_[1] - y_[0]) / h - h / 6.0 * (2.0 * m_[0] + m_[1]);
                return y_[0] + slope * (x - x_[0]);
            }
            const double h = x_[n - 1] - x_[n - 2];
            const double slope =
                (y_[n - 1] - y_[n - 2]) / h + h / 6.0 * (m_[n - 2] + 2.0 * m_[n - 1]);
            return y_[n - 1] + slope * (x - x_[n - 1]);
        }
        const int i = std::max(
            0, static_cast<int>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1);
        const int j = std::min(i, n - 2);
        const double h = x_[j + 1] - x_[j];
        const double u = (x_[j + 1] - x) / h, v = (x - x_[j]) / h;
        return u * y_[j] + v * y_[j + 1] +
               ((u * u * u - u) * m_[j] + (v * v * v - v) * m_[j + 1]) * h * h / 6.0;
    }

private:
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> m_; // second derivatives
};

void require_continuous(const PathBundle& bundle, const char* where) {
    if (bundle.jumps.active()) {
        throw Error(std::string(where) + ": the construction excludes jumps; use lambda = 0");
    }
}

NodeEstimate summarize(std::span<const double> values) {
    NodeEstimate est;
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - mean) * (v - mean);
    }
    est.mean = mean;
    est.at_x0 = mean;
    est.std_error = std::sqrt(var / values.size() / static_cast<double>(values.size()));
    return est;
}

IdentityCheck check_identity(const std::vector<NodeEstimate>& a, const std::vector<NodeEstimate>& b,
                             double se_multiplier) {
    IdentityCheck out;
    out.pass = true;
    const int nodes = static_cast<int>(a.size());
    out.difference.resize(nodes);
    out.combined_se.resize(nodes);
    for (int j = 0; j < nodes; ++j) {
        const double d = a[j].mean - b[j].mean;
        const double se = std::sqrt(a[j].std_error * a[j].std_error +
                                    b[j].std_error * b[j].std_error);
        out.difference[j] = d;
        out.combined_se[j] = se;
        const double limit = se_multiplier * std::max(se, 1e-14);
        out.worst_ratio = std::max(out.worst_ratio, std::fabs(d) / limit);
        if (std::fabs(d) > limit) {
            out.pass = false;
            out.violating_nodes.push_back(j);
        }
    }
    return out;
}

} // namespace

Type1Result type1(const FactorizedTerminal& f, const PathBundle& bundle,
                  std::shared_ptr<const RegressionSet> regressions, double se_multiplier) {
    require_continuous(bundle, "type1");
    auto [lo, hi] = state_range(bundle, 0.001, 0.999);
    probe_c2(f.f1, lo, hi, "F1");
    probe_c2(f.f2, lo, hi, "F2");

    const int n = bundle.n_paths;
    const int steps = bundle.grid.steps;
    const int nodes = steps + 1;

    // F2(X(T)) per path and its BSDE value Y~(t_j) = E[F2(X(T)) | F_t_j].
    dsl::CompiledExpr f2(f.f2);
    std::vector<double> terminal(n);
    {
        dsl::Env env;
        for (int p = 0; p < n; ++p) {
            terminal[p] = f2.evaluate(env.set(dsl::Var::X, bundle.state(steps, p)));
        }
    }

    dsl::CompiledExpr f1(f.f1);
    Type1Result out;
    out.constructed.y.assign(static_cast<std::size_t>(nodes) * n, 0.0);
    out.constructed.y_nodes.resize(nodes);

    parallel_for(static_cast<std::size_t>(nodes), [&](std::size_t j_) {
        const int j = static_cast<int>(j_);
        std::vector<double> ytilde(n);
        if (j == steps) {
            ytilde = terminal;
        } else {
            const NodeRegression& reg = regressions->at(j);
            reg.predict(reg.coefficients(terminal), ytilde);
        }
        dsl::Env env;
        double* target = out.constructed.y.data() + static_cast<std::size_t>(j) * n;
        for (int p = 0; p < n; ++p) {
            target[p] = f1.evaluate(env.set(dsl::Var::X, bundle.state(j, p))) * ytilde[p];
        }
        out.constructed.y_nodes[j] =
            summarize({target, static_cast<std::size_t>(n)});
    });

    // General solver on the same equation: psi(t) = F1(X(t)) F2(X(T)).
    Driver zero_driver;
    zero_driver.g = dsl::Expression::literal(0.0);
    TerminalProcess psi = TerminalProcess::path_functional(dsl::Expression::binary(
        dsl::NodeKind::Mul, f.f1.substitute(dsl::Var::X, dsl::Var::Xt), f.f2));
    out.general = solve(zero_driver, psi, 1, bundle, regressions);
    out.identity = check_identity(out.constructed.y_nodes, out.general.y_nodes, se_multiplier);
    return out;
}

namespace {

/// Shared machinery for the frozen-parameter families of Types 2 and 3:
/// fits Y~(t_j, x_k) for every grid value from per-(k, j) responses.
ParametricFamily build_family(const PathBundle& bundle,
                              const RegressionSet& regressions, std::vector<double> x_grid,
                              const std::function<void(int, int, std::vector<double>&)>& response_at,
                              bool with_z) {
    const int n = bundle.n_paths;
    const int steps = bundle.grid.steps;
    const int nodes = steps + 1;
    const int x_points = static_cast<int>(x_grid.size());

    ParametricFamily family;
    family.x_grid = std::move(x_grid);
    family.y_coef.assign(x_points, std::vector<Eigen::VectorXd>(nodes));
    family.y_terminal.assign(x_points, std::vector<double>(n));
    if (with_z) {
        family.z_coef.assign(x_points, std::vector<Eigen::VectorXd>(steps));
    }

    parallel_for(static_cast<std::size_t>(x_points), [&](std::size_t k_) {
        const int k = static_cast<int>(k_);
        std::vector<double> resp(n), cfit(n), zresp(n);
        for (int j = nodes - 1; j >= 0; --j) {
            response_at(k, j, resp);
            if (j == nodes - 1) {
                family.y_terminal[k] = resp; // F_T-trivial: keep path-wise
            }
            const NodeRegression& reg = regressions.at(j);
            Eigen::VectorXd coef = reg.coefficients(resp);
            family.y_coef[k][j] = coef;
            if (with_z && j < steps) {
                reg.predict(coef, cfit);
                const double* db = &bundle.db[static_cast<std::size_t>(j) * n];
                for (int p = 0; p < n; ++p) {
                    zresp[p] = (resp[p] - cfit[p]) * db[p] / bundle.grid.dt();
                }
                family.z_coef[k][j] = reg.coefficients(zresp);
            }
        }
    });
    return family;
}

/// Interpolate the family at X(t_j) per path.
ConstructedSurface interpolate_family(const ParametricFamily& family, const PathBundle& bundle,
                                      const RegressionSet& regressions, int* extrapolations) {
    const int n = bundle.n_paths;
    const int nodes = bundle.grid.node_count();
    const int kx = static_cast<int>(family.x_grid.size());

    ConstructedSurface out;
    out.y.assign(static_cast<std::size_t>(nodes) * n, 0.0);
    out.y_nodes.resize(nodes);

    std::vector<int> extra_per_node(nodes, 0);
    parallel_for(static_cast<std::size_t>(nodes), [&](std::size_t j_) {
        const int j = static_cast<int>(j_);
        // Per-path family values at each grid x; the terminal row is raw.
        std::vector<std::vector<double>> values(kx, std::vector<double>(n));
        for (int k = 0; k < kx; ++k) {
            if (j == nodes - 1) {
                values[k] = family.y_terminal[k];
            } else {
                regressions.at(j).predict(family.y_coef[k][j], values[k]);
            }
        }
        std::vector<double> column(kx);
        double* target = out.y.data() + static_cast<std::size_t>(j) * n;
        int extrapolated = 0;
        for (int p = 0; p < n; ++p) {
            for (int k = 0; k < kx; ++k) {
                column[k] = values[k][p];
            }
            CubicSpline spline(family.x_grid, column);
            target[p] = spline(bundle.state(j, p), &extrapolated);
        }
        extra_per_node[j] = extrapolated;
        out.y_nodes[j] = summarize({target, static_cast<std::size_t>(n)});
    });
    if (extrapolations != nullptr) {
        for (int e : extra_per_node) {
            *extrapolations += e;
        }
    }
    return out;
}

} // namespace

Type2Result type2(const dsl::Expression& f, const PathBundle& bundle,
                  std::shared_ptr<const RegressionSet> regressions, int x_points,
                  double se_multiplier) {
    require_continuous(bundle, "type2");
    auto [lo, hi] = state_range(bundle, 0.001, 0.999);
    probe_c2(f.substitute(dsl::Var::Xt, dsl::Var::X), lo, hi, "F"); // crude joint probe
    const int n = bundle.n_paths;
    const int steps = bundle.grid.steps;

    dsl::CompiledExpr fc(f);
    std::vector<double> x_grid = chebyshev_points(lo, hi, x_points);
    Type2Result out;
    // Terminal response F(x_k, X(T)) is node-independent.
    out.family = build_family(
        bundle, *regressions, x_grid,
        [&](int k, int /*j*/, std::vector<double>& resp) {
            dsl::Env env;
            env.set(dsl::Var::Xt, x_grid[k]);
            for (int p = 0; p < n; ++p) {
                env.set(dsl::Var::X, bundle.state(steps, p));
                resp[p] = fc.evaluate(env);
            }
        },
        true);

    out.constructed =
        interpolate_family(out.family, bundle, *regressions, &out.family.extrapolations);

    Driver zero_driver;
    zero_driver.g = dsl::Expression::literal(0.0);
    TerminalProcess psi = TerminalProcess::path_functional(f);
    out.general = solve(zero_driver, psi, 1, bundle, regressions);
    out.identity = check_identity(out.constructed.y_nodes, out.general.y_nodes, se_multiplier);
    return out;
}

Type3Result type3(const dsl::Expression& f, const dsl::Expression& g3, const PathBundle& bundle,
                  std::shared_ptr<const RegressionSet> regressions, int x_points,
                  double se_multiplier, const SolverOptions& options) {
    require_continuous(bundle, "type3");
    for (dsl::Var v : g3.free_variables()) {
        if (v != dsl::Var::X && v != dsl::Var::Xs && v != dsl::Var::Y) {
            throw Error("type3 driver must be a function of (x, xs, y) only");
        }
    }
    const int n = bundle.n_paths;
    const int steps = bundle.grid.steps;
    const double dt = bundle.grid.dt();

    // Stage 1: full equation with the frozen argument bound to X(t).
    Driver driver;
    driver.g = g3.substitute(dsl::Var::X, dsl::Var::Xt).substitute(dsl::Var::Xs, dsl::Var::X);
    driver.lipschitz_c = 1e6; // declared elsewhere; stage-1 reuses the general solver
    TerminalProcess psi = TerminalProcess::path_functional(f);
    Type3Result out;
    out.stage1 = solve(driver, psi, 1, bundle, regressions, options);

    // Stage 2: frozen-x family with the stage-1 diagonal inside the driver.
    dsl::CompiledExpr fc(f);
    dsl::CompiledExpr gc(g3);
    // Driver contributions accumulate backward; cache per node so the
    // response closure can be evaluated per (k, j) without re-summing.
    std::vector<std::vector<double>> accum(x_points);
    auto [lo, hi] = state_range(bundle, 0.001, 0.999);
    std::vector<double> x_grid = chebyshev_points(lo, hi, x_points);
    parallel_for(static_cast<std::size_t>(x_points), [&](std::size_t k_) {
        const int k = static_cast<int>(k_);
        accum[k].assign(static_cast<std::size_t>(steps + 1) * n, 0.0);
        dsl::Env env;
        env.set(dsl::Var::X, x_grid[k]);
        // accum[j] = sum_{j' >= j} g(x_k, X(j'), Y(j')) dt, zero at j = N.
        for (int j = steps - 1; j >= 0; --j) {
            for (int p = 0; p < n; ++p) {
                env.set(dsl::Var::Xs, bundle.state(j, p));
                env.set(dsl::Var::Y, out.stage1.y_at(j, p));
                accum[k][static_cast<std::size_t>(j) * n + p] =
                    accum[k][static_cast<std::size_t>(j + 1) * n + p] + gc.evaluate(env) * dt;
            }
        }
    });

    out.family = build_family(
        bundle, *regressions, x_grid,
        [&](int k, int j, std::vector<double>& resp) {
            dsl::Env env;
            env.set(dsl::Var::Xt, x_grid[k]);
            for (int p = 0; p < n; ++p) {
                env.set(dsl::Var::X, bundle.state(steps, p));
                resp[p] = fc.evaluate(env) + accum[k][static_cast<std::size_t>(j) * n + p];
            }
        },
        false);

    out.interpolated =
        interpolate_family(out.family, bundle, *regressions, &out.family.extrapolations);
    out.identity =
        check_identity(out.stage1.y_nodes, out.interpolated.y_nodes, se_multiplier);
    return out;
}

DecompositionReport decomposition_check(std::span<const DecompositionSample> samples,
                                        const PolynomialBasis& basis) {
    if (samples.empty()) {
        throw Error("decomposition_check: no samples");
    }
    DecompositionReport report;
    for (const DecompositionSample& sample : samples) {
        const PathBundle& bundle = *sample.bundle;
        const int n = bundle.n_paths;
        const int steps = bundle.grid.steps;
        if (sample.y.size() != static_cast<std::size_t>(steps + 1) * n) {
            throw Error("decomposition_check: value layout mismatch");
        }

        double ss_res = 0.0, ss_drift = 0.0, ss_mart = 0.0;
        std::vector<double> row_res(steps, 0.0), row_drift(steps, 0.0), row_mart(steps, 0.0);
        parallel_for(static_cast<std::size_t>(steps), [&](std::size_t j_) {
            const int j = static_cast<int>(j_);
            // Design [phi(X_j), dB_j * phi(X_j)] for the increment.
            const int q = basis.degree + 1;
            Eigen::MatrixXd design(n, 2 * q);
            auto state = bundle.state_row(j);
            double mean = 0.0, sd = 0.0;
            for (double v : state) {
                mean += v;
            }
            mean /= n;
            for (double v : state) {
                sd += (v - mean) * (v - mean);
            }
            sd = std::sqrt(sd / n);
            if (sd < 1e-12) {
                sd = 1.0;
            }
            const double* db = &bundle.db[static_cast<std::size_t>(j) * n];
            for (int p = 0; p < n; ++p) {
                const double sx = (state[p] - mean) / sd;
                double pw = 1.0;
                for (int d = 0; d < q; ++d) {
                    design(p, d) = pw;
                    design(p, q + d) = pw * db[p];
                    pw *= sx;
                }
            }
            Eigen::VectorXd dy(n);
            for (int p = 0; p < n; ++p) {
                dy(p) = sample.y[static_cast<std::size_t>(j + 1) * n + p] -
                        sample.y[static_cast<std::size_t>(j) * n + p];
            }
            Eigen::VectorXd coef =
                (design.transpose() * design).ldlt().solve(design.transpose() * dy);
            Eigen::VectorXd drift = design.leftCols(q) * coef.head(q);
            Eigen::VectorXd mart = design.rightCols(q) * coef.tail(q);
            Eigen::VectorXd res = dy - drift - mart;
            row_res[j] = res.squaredNorm();
            row_drift[j] = drift.squaredNorm();
            row_mart[j] = mart.squaredNorm();
        });
        for (int j = 0; j < steps; ++j) {
            ss_res += row_res[j];
            ss_drift += row_drift[j];
            ss_mart += row_mart[j];
        }
        const double count = static_cast<double>(steps) * n;
        report.rms_residual.push_back(std::sqrt(ss_res / count));
        report.drift_component.push_back(std::sqrt(ss_drift / count));
        report.martingale_component.push_back(std::sqrt(ss_mart / count));
    }

    // Refinement slope of log rms against log N across samples.
    if (samples.size() >= 2) {
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        const int k = static_cast<int>(samples.size());
        for (int i = 0; i < k; ++i) {
            const double lx = std::log(static_cast<double>(samples[i].bundle->grid.steps));
            const double ly = std::log(std::max(report.rms_residual[i], 1e-300));
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        const double denom = k * sxx - sx * sx;
        report.refinement_slope = denom != 0.0 ? -(k * sxy - sx * sy) / denom : 0.0;
    }
    return report;
}

} // namespace bsvie
