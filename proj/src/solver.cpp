#include "bsvie/solver.hpp"

#include <cmath>
#include <sstream>

#include "bsvie/parallel.hpp"

namespace bsvie {

void Driver::validate() const {
    if (g.empty()) {
        throw Error("driver: missing expression");
    }
    using dsl::Var;
    const int m = n_weights();
    for (Var v : g.free_variables()) {
        const int idx = static_cast<int>(v);
        const int u1 = static_cast<int>(Var::U1);
        if (idx >= u1 && idx <= static_cast<int>(Var::U9)) {
            if (idx - u1 + 1 > m) {
                std::ostringstream os;
                os << "driver references " << dsl::var_name(v) << " but only " << m
                   << " jump weight(s) are declared";
                throw Error(os.str());
            }
        } else if (v == Var::Zeta || v == Var::Xs) {
            std::ostringstream os;
            os << "driver may not reference '" << dsl::var_name(v) << "'";
            throw Error(os.str());
        }
    }
    for (const auto& w : jump_weights) {
        if (w.empty()) {
            throw Error("driver: empty jump weight");
        }
        for (Var v : w.free_variables()) {
            if (v != Var::Zeta) {
                throw Error("jump weights must be functions of zeta only");
            }
        }
    }
    if (lipschitz_c < 0.0) {
        throw Error("driver: Lipschitz constant must be nonnegative");
    }
}

dsl::LipschitzProbeResult Driver::probe_lipschitz(double box_half_width, int samples,
                                                  std::uint64_t seed) const {
    validate();
    dsl::Box box;
    using dsl::Var;
    const dsl::Interval iv{-box_half_width, box_half_width};
    const dsl::Interval time_iv{0.0, 1.0};
    box.push_back({Var::T, time_iv});
    box.push_back({Var::S, time_iv});
    box.push_back({Var::Y, iv});
    box.push_back({Var::Z, iv});
    for (int m = 0; m < n_weights(); ++m) {
        box.push_back({static_cast<Var>(static_cast<int>(Var::U1) + m), iv});
    }
    box.push_back({Var::X, iv});
    box.push_back({Var::Xt, iv});
    return dsl::lipschitz_probe(g, box, samples, lipschitz_c, seed);
}

namespace {

/// Jump-basis increments J_m over each interval and the mark Gram matrix
/// G_mm' = integral w_m w_m' dnu shared by every row sweep.
struct JumpBasisData {
    int m = 0;
    std::vector<std::vector<double>> j;           // [m][(i)*n + p], i < N
    Eigen::MatrixXd gram;                          // m x m
    Eigen::LDLT<Eigen::MatrixXd> gram_factor;
    bool active = false;
};

JumpBasisData build_jump_basis(const Driver& driver, const PathBundle& bundle) {
    JumpBasisData out;
    out.m = driver.n_weights();
    if (out.m == 0) {
        return out;
    }
    out.active = bundle.jumps.active();
    out.gram = Eigen::MatrixXd::Zero(out.m, out.m);
    if (!out.active) {
        return out; // no jumps: u = 0, kappa = 0 regardless of the weights
    }

    std::vector<dsl::CompiledExpr> w;
    w.reserve(out.m);
    for (const auto& e : driver.jump_weights) {
        w.emplace_back(e);
    }
    auto eval_w = [&](int m, double zeta) {
        dsl::Env env;
        env.set(dsl::Var::Zeta, zeta);
        return w[m].evaluate(env);
    };

    MarkQuadrature quad = MarkQuadrature::build(bundle.jumps);
    for (int a = 0; a < out.m; ++a) {
        for (int b = a; b < out.m; ++b) {
            double v = bundle.jumps.lambda *
                       quad.expectation([&](double z) { return eval_w(a, z) * eval_w(b, z); });
            out.gram(a, b) = v;
            out.gram(b, a) = v;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.gram);
    if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
        throw Error("jump weight basis is degenerate under nu (singular Gram matrix)");
    }
    out.gram_factor.compute(out.gram);

    const int n = bundle.n_paths;
    const int steps = bundle.grid.steps;
    const double dt = bundle.grid.dt();
    out.j.assign(out.m, std::vector<double>(static_cast<std::size_t>(steps) * n, 0.0));
    std::vector<double> compensator(out.m);
    for (int m = 0; m < out.m; ++m) {
        compensator[m] =
            dt * bundle.jumps.lambda * quad.expectation([&](double z) { return eval_w(m, z); });
    }
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t p) {
        for (int i = 0; i < steps; ++i) {
            auto jr = bundle.jumps_in(i, static_cast<int>(p));
            for (int m = 0; m < out.m; ++m) {
                double sum = 0.0;
                for (std::size_t k = 0; k < jr.count; ++k) {
                    sum += eval_w(m, jr.mark[k]);
                }
                out.j[m][static_cast<std::size_t>(i) * n + p] = sum - compensator[m];
            }
        }
    });
    return out;
}

struct RowResult {
    std::vector<double> y;           // per path value at the diagonal node
    double response_sd = 0.0;        // sd of the raw accumulated response (node-0 SE)
};

/// One backward sweep of row i: accumulates the raw response
/// A = sign*psi(t_i) + sum_{j' >= j} g(t_i, t_j', ...) dt from the terminal
/// side, extracting Z and K from the increments A - fit(A).
RowResult sweep_row(int i, const Driver& driver, const dsl::CompiledExpr& g,
                    std::span<const double> psi_row, int sign, const PathBundle& bundle,
                    const RegressionSet& regressions, const JumpBasisData& jumps,
                    const std::vector<double>& y_prev, bool record, SolutionSurface* surface) {
    const int n = bundle.n_paths;
    const int steps = bundle.grid.steps;
    const double dt = bundle.grid.dt();
    const int m = jumps.m;

    std::vector<double> a(n);
    for (int p = 0; p < n; ++p) {
        a[p] = sign * psi_row[p];
    }

    std::vector<double> cfit(n), resp(n), zfit(n);
    std::vector<std::vector<double>> ufit(m, std::vector<double>(n, 0.0));
    std::vector<Eigen::VectorXd> v_coef(m);

    dsl::Env env;
    env.set(dsl::Var::T, bundle.grid.node(i));

    RowResult out;
    out.y.resize(n);
    for (int j = steps - 1; j >= i; --j) {
        const NodeRegression& reg = regressions.at(j);

        Eigen::VectorXd c_coef = reg.coefficients(a);
        reg.predict(c_coef, cfit);

        // Martingale-increment responses: the fitted conditional mean is
        // removed first, so constant shifts of the terminal data leave the
        // Z and K estimates unchanged.
        const double* db = &bundle.db[static_cast<std::size_t>(j) * n];
        for (int p = 0; p < n; ++p) {
            resp[p] = (a[p] - cfit[p]) * db[p] / dt;
        }
        Eigen::VectorXd z_coef = reg.coefficients(resp);
        reg.predict(z_coef, zfit);

        for (int mm = 0; mm < m; ++mm) {
            if (!jumps.active) {
                v_coef[mm] = Eigen::VectorXd::Zero(reg.columns());
                std::fill(ufit[mm].begin(), ufit[mm].end(), 0.0);
                continue;
            }
            const double* jm = &jumps.j[mm][static_cast<std::size_t>(j) * n];
            for (int p = 0; p < n; ++p) {
                resp[p] = (a[p] - cfit[p]) * jm[p] / dt;
            }
            v_coef[mm] = reg.coefficients(resp);
            reg.predict(v_coef[mm], ufit[mm]);
        }

        if (record && surface != nullptr) {
            const std::size_t cell = surface->tri_index(i, j);
            surface->z_coef[cell] = z_coef;
            if (m > 0) {
                // kappa coefficients solve G kappa = u column-wise; the
                // regression coefficients are linear in the response, so the
                // same linear solve applies to the coefficient vectors.
                Eigen::MatrixXd v(reg.columns(), m);
                for (int mm = 0; mm < m; ++mm) {
                    v.col(mm) = v_coef[mm];
                }
                Eigen::MatrixXd kappa = Eigen::MatrixXd::Zero(reg.columns(), m);
                if (jumps.active) {
                    kappa = jumps.gram_factor.solve(v.transpose()).transpose();
                }
                for (int mm = 0; mm < m; ++mm) {
                    surface->k_coef[mm][cell] = kappa.col(mm);
                }
            }
        }

        // Driver at the left point; y argument from the previous Picard
        // iterate's diagonal.
        const double tj = bundle.grid.node(j);
        env.set(dsl::Var::S, tj);
        for (int p = 0; p < n; ++p) {
            env.set(dsl::Var::Y, y_prev[static_cast<std::size_t>(j) * n + p]);
            env.set(dsl::Var::Z, zfit[p]);
            for (int mm = 0; mm < m; ++mm) {
                env.set(static_cast<dsl::Var>(static_cast<int>(dsl::Var::U1) + mm), ufit[mm][p]);
            }
            env.set(dsl::Var::X, bundle.state(j, p));
            env.set(dsl::Var::Xt, bundle.state(i, p));
            double gv;
            try {
                gv = g.evaluate(env);
            } catch (const Error& e) {
                std::ostringstream os;
                os << "driver evaluation failed at row " << i << ", node " << j << ", path " << p
                   << ": " << e.what();
                throw EvaluationError(os.str());
            }
            a[p] += gv * dt;
            if (j == i) {
                // Row value at the diagonal: fitted conditional expectation
                // of the response beyond j plus the (state-measurable)
                // driver term at j itself.
                out.y[p] = cfit[p] + gv * dt;
            }
        }
    }

    double mean = 0.0;
    for (double v : a) {
        mean += v;
    }
    mean /= n;
    double var = 0.0;
    for (double v : a) {
        var += (v - mean) * (v - mean);
    }
    out.response_sd = std::sqrt(var / n);
    return out;
}

} // namespace

std::vector<double> SolutionSurface::z_values(int i, int j) const {
    std::vector<double> out(n_paths);
    regressions->at(j).predict(z_coef[tri_index(i, j)], out);
    return out;
}

std::vector<double> SolutionSurface::k_values(int i, int j, int m) const {
    std::vector<double> out(n_paths);
    regressions->at(j).predict(k_coef[m][tri_index(i, j)], out);
    return out;
}

std::vector<double> SolutionSurface::u_values(int i, int j, int m) const {
    std::vector<double> out(n_paths, 0.0);
    if (n_weights == 0) {
        return out;
    }
    Eigen::VectorXd u_coef = Eigen::VectorXd::Zero(k_coef[0][tri_index(i, j)].size());
    for (int mm = 0; mm < n_weights; ++mm) {
        u_coef += mark_gram(m, mm) * k_coef[mm][tri_index(i, j)];
    }
    regressions->at(j).predict(u_coef, out);
    return out;
}

SolutionSurface solve(const Driver& driver, const TerminalProcess& psi, int sign,
                      const PathBundle& bundle, std::shared_ptr<const RegressionSet> regressions,
                      const SolverOptions& options) {
    driver.validate();
    if (sign != 1 && sign != -1) {
        throw Error("solve: sign must be +1 or -1");
    }
    if (!regressions || &regressions->bundle() != &bundle) {
        throw Error("solve: regression set must be built on the same bundle");
    }

    const int n = bundle.n_paths;
    const int steps = bundle.grid.steps;
    const int nodes = steps + 1;
    const double dt = bundle.grid.dt();

    std::vector<double> psi_vals = psi.evaluate(bundle);
    JumpBasisData jumps = build_jump_basis(driver, bundle);
    dsl::CompiledExpr g(driver.g);

    SolutionSurface surface;
    surface.grid = bundle.grid;
    surface.n_paths = n;
    surface.n_weights = jumps.m;
    surface.sign = sign;
    surface.y.assign(static_cast<std::size_t>(nodes) * n, 0.0);
    surface.y_nodes.resize(nodes);
    const std::size_t cells = static_cast<std::size_t>(steps) * (steps + 1) / 2;
    surface.z_coef.resize(cells);
    surface.k_coef.assign(jumps.m, std::vector<Eigen::VectorXd>(cells));
    surface.mark_gram = jumps.m > 0 ? jumps.gram : Eigen::MatrixXd();
    surface.regressions = regressions;

    // Terminal diagonal value, constant across Picard iterations.
    std::vector<double> y_prev(static_cast<std::size_t>(nodes) * n, 0.0);
    auto terminal_row = [&](std::vector<double>& target) {
        for (int p = 0; p < n; ++p) {
            target[static_cast<std::size_t>(steps) * n + p] =
                sign * psi_vals[static_cast<std::size_t>(steps) * n + p];
        }
    };

    const bool needs_picard = driver.depends_on_y();
    std::vector<double> y_next(y_prev.size(), 0.0);
    std::vector<double> node0_sd(nodes, 0.0);

    auto run_sweep = [&](const std::vector<double>& prev, std::vector<double>& next, bool record) {
        terminal_row(next);
        parallel_for(static_cast<std::size_t>(steps), [&](std::size_t i_) {
            const int i = static_cast<int>(i_);
            RowResult row = sweep_row(i, driver, g,
                                      {psi_vals.data() + static_cast<std::size_t>(i) * n,
                                       static_cast<std::size_t>(n)},
                                      sign, bundle, *regressions, jumps, prev, record,
                                      record ? &surface : nullptr);
            std::copy(row.y.begin(), row.y.end(), next.begin() + static_cast<std::size_t>(i) * n);
            if (record) {
                node0_sd[i] = row.response_sd;
            }
        });
    };

    if (needs_picard) {
        for (int iter = 1; iter <= options.max_picard; ++iter) {
            run_sweep(y_prev, y_next, false);
            double dist = 0.0;
            for (int j = 0; j < nodes; ++j) {
                double acc = 0.0;
                for (int p = 0; p < n; ++p) {
                    const std::size_t k = static_cast<std::size_t>(j) * n + p;
                    acc += (y_next[k] - y_prev[k]) * (y_next[k] - y_prev[k]);
                }
                dist = std::max(dist, std::sqrt(acc / n));
            }
            surface.picard_history.push_back(dist);
            std::swap(y_prev, y_next);
            if (dist < options.picard_tol) {
                break;
            }
            if (iter == options.max_picard) {
                std::ostringstream os;
                os << "Picard iteration did not reach tolerance " << options.picard_tol
                   << " within " << options.max_picard << " iterations (last change " << dist
                   << ")";
                throw DivergenceError(surface.picard_history, os.str());
            }
        }
        surface.picard_iterations = static_cast<int>(surface.picard_history.size());
    }

    // Final recorded sweep; for y-independent drivers this is the only one.
    run_sweep(y_prev, y_next, true);
    surface.y = y_next;
    if (!needs_picard) {
        surface.picard_iterations = 1;
    }

    // Node summaries.
    for (int j = 0; j < nodes; ++j) {
        double mean = 0.0;
        for (int p = 0; p < n; ++p) {
            mean += surface.y_at(j, p);
        }
        mean /= n;
        double var = 0.0;
        for (int p = 0; p < n; ++p) {
            var += (surface.y_at(j, p) - mean) * (surface.y_at(j, p) - mean);
        }
        NodeEstimate& est = surface.y_nodes[j];
        est.mean = mean;
        est.at_x0 = mean;
        est.std_error = j == 0 ? node0_sd[0] / std::sqrt(static_cast<double>(n))
                               : std::sqrt(var / n) / std::sqrt(static_cast<double>(n));
    }

    // Norm estimates (left-rule quadrature of the squared processes).
    double ny = 0.0;
    for (int j = 0; j < steps; ++j) {
        for (int p = 0; p < n; ++p) {
            ny += surface.y_at(j, p) * surface.y_at(j, p);
        }
    }
    surface.norm_y = std::sqrt(ny / n * dt);
    double nz = 0.0, nk = 0.0;
    std::vector<double> zv(n);
    std::vector<std::vector<double>> kv(jumps.m, std::vector<double>(n));
    for (int i = 0; i < steps; ++i) {
        for (int j = i; j < steps; ++j) {
            const std::size_t cell = surface.tri_index(i, j);
            regressions->at(j).predict(surface.z_coef[cell], zv);
            for (int p = 0; p < n; ++p) {
                nz += zv[p] * zv[p];
            }
            if (jumps.m > 0) {
                for (int mm = 0; mm < jumps.m; ++mm) {
                    regressions->at(j).predict(surface.k_coef[mm][cell], kv[mm]);
                }
                for (int p = 0; p < n; ++p) {
                    double q = 0.0;
                    for (int a = 0; a < jumps.m; ++a) {
                        for (int b = 0; b < jumps.m; ++b) {
                            q += kv[a][p] * jumps.gram(a, b) * kv[b][p];
                        }
                    }
                    nk += q;
                }
            }
        }
    }
    surface.norm_z = std::sqrt(nz / n * dt * dt);
    surface.norm_k = std::sqrt(nk / n * dt * dt);
    return surface;
}

std::vector<double> residual(const SolutionSurface& surface, const Driver& driver,
                             const TerminalProcess& psi, const PathBundle& bundle) {
    driver.validate();
    const int n = bundle.n_paths;
    const int steps = bundle.grid.steps;
    const double dt = bundle.grid.dt();
    if (surface.n_paths != n || surface.grid.steps != steps) {
        throw Error("residual: surface was not produced on this bundle");
    }

    std::vector<double> psi_vals = psi.evaluate(bundle);
    JumpBasisData jumps = build_jump_basis(driver, bundle);
    dsl::CompiledExpr g(driver.g);

    std::vector<double> out(steps + 1, 0.0);

    parallel_for(static_cast<std::size_t>(steps + 1), [&](std::size_t i_) {
        const int i = static_cast<int>(i_);
        std::vector<double> rhs(n);
        for (int p = 0; p < n; ++p) {
            rhs[p] = surface.sign * psi_vals[static_cast<std::size_t>(i) * n + p];
        }
        std::vector<double> zv(n);
        std::vector<std::vector<double>> uv(jumps.m, std::vector<double>(n));
        std::vector<std::vector<double>> kvv(jumps.m, std::vector<double>(n));
        dsl::Env env;
        env.set(dsl::Var::T, bundle.grid.node(i));
        for (int j = i; j < steps; ++j) {
            const std::size_t cell = surface.tri_index(i, j);
            surface.regressions->at(j).predict(surface.z_coef[cell], zv);
            for (int mm = 0; mm < jumps.m; ++mm) {
                surface.regressions->at(j).predict(surface.k_coef[mm][cell], kvv[mm]);
            }
            // u = G kappa per path.
            for (int p = 0; p < n; ++p) {
                for (int a = 0; a < jumps.m; ++a) {
                    double u = 0.0;
                    for (int b = 0; b < jumps.m; ++b) {
                        u += jumps.gram(a, b) * kvv[b][p];
                    }
                    uv[a][p] = u;
                }
            }
            env.set(dsl::Var::S, bundle.grid.node(j));
            const double* db = &bundle.db[static_cast<std::size_t>(j) * n];
            for (int p = 0; p < n; ++p) {
                env.set(dsl::Var::Y, surface.y_at(j, p));
                env.set(dsl::Var::Z, zv[p]);
                for (int mm = 0; mm < jumps.m; ++mm) {
                    env.set(static_cast<dsl::Var>(static_cast<int>(dsl::Var::U1) + mm), uv[mm][p]);
                }
                env.set(dsl::Var::X, bundle.state(j, p));
                env.set(dsl::Var::Xt, bundle.state(i, p));
                rhs[p] += g.evaluate(env) * dt;
                rhs[p] -= zv[p] * db[p];
                if (jumps.active) {
                    for (int mm = 0; mm < jumps.m; ++mm) {
                        rhs[p] -= kvv[mm][p] * jumps.j[mm][static_cast<std::size_t>(j) * n + p];
                    }
                }
            }
        }
        double ms = 0.0;
        for (int p = 0; p < n; ++p) {
            const double r = surface.y_at(i, p) - rhs[p];
            ms += r * r;
        }
        out[i] = ms / n;
    });
    return out;
}

} // namespace bsvie
