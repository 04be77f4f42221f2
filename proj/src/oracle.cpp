#include "bsvie/solver.hpp"

#include <cmath>
#include <sstream>

#include "bsvie/parallel.hpp"
#include "bsvie/random.hpp"

namespace bsvie {

namespace {

/// Explicit branching tree for one oracle replication; level j holds B^j
/// nodes, children of node k are k*B+b at the next level.
struct Tree {
    int levels = 0;    // N + 1
    int branching = 0;
    std::vector<std::vector<double>> x;   // state per level/node
    std::vector<std::vector<double>> db;  // edge increment into each node (level >= 1)
    std::vector<std::vector<std::vector<double>>> j; // [m][level][node], edge jump integrals
};

std::size_t ancestor(std::size_t node, int level_from, int level_to, int branching) {
    std::size_t id = node;
    for (int l = level_from; l > level_to; --l) {
        id /= branching;
    }
    return id;
}

} // namespace

OracleResult nested_mc_oracle(const Driver& driver, const TerminalProcess& psi, int sign,
                              const TimeGrid& tiny_grid, const JumpModel& jumps,
                              const DiffusionModel& diffusion, int branching, int replications,
                              std::uint64_t seed, const SolverOptions& options,
                              std::uint64_t max_tree_nodes) {
    driver.validate();
    psi.validate();
    jumps.validate();
    if (sign != 1 && sign != -1) {
        throw Error("nested_mc_oracle: sign must be +1 or -1");
    }
    if (tiny_grid.steps > 4) {
        throw Error("nested_mc_oracle: grid is restricted to N <= 4");
    }
    if (branching < 2 || replications < 2) {
        throw Error("nested_mc_oracle: need branching >= 2 and replications >= 2");
    }

    const int steps = tiny_grid.steps;
    const double dt = tiny_grid.dt();
    const double sqrt_dt = std::sqrt(dt);
    const int m = driver.n_weights();

    std::uint64_t nodes_per_tree = 0, level_size = 1;
    for (int l = 0; l <= steps; ++l) {
        nodes_per_tree += level_size;
        if (l < steps) {
            level_size *= static_cast<std::uint64_t>(branching);
        }
    }
    if (nodes_per_tree * static_cast<std::uint64_t>(replications) > max_tree_nodes) {
        std::ostringstream os;
        os << "nested_mc_oracle: " << nodes_per_tree << " nodes/tree x " << replications
           << " replications exceeds the cap " << max_tree_nodes;
        throw CapacityError(os.str());
    }

    dsl::CompiledExpr g(driver.g);
    dsl::CompiledExpr drift(diffusion.drift);
    dsl::CompiledExpr vol(diffusion.volatility);
    dsl::CompiledExpr psi_expr(psi.expr);
    std::vector<dsl::CompiledExpr> w;
    for (const auto& e : driver.jump_weights) {
        w.emplace_back(e);
    }
    std::vector<double> compensator(m, 0.0);
    const bool jumps_active = jumps.active() && m > 0;
    MarkQuadrature quad;
    if (jumps_active) {
        quad = MarkQuadrature::build(jumps);
        for (int mm = 0; mm < m; ++mm) {
            compensator[mm] = dt * jumps.lambda * quad.expectation([&](double z) {
                dsl::Env env;
                env.set(dsl::Var::Zeta, z);
                return w[mm].evaluate(env);
            });
        }
    }
    const bool needs_picard = driver.depends_on_y();

    std::vector<double> estimates(replications, 0.0);

    parallel_for(static_cast<std::size_t>(replications), [&](std::size_t rep) {
        std::mt19937_64 rng(splitmix64(seed + 0x9e3779b97f4a7c15ULL * (rep + 1)));
        std::normal_distribution<double> gauss(0.0, 1.0);

        Tree tree;
        tree.levels = steps + 1;
        tree.branching = branching;
        tree.x.resize(steps + 1);
        tree.db.resize(steps + 1);
        tree.j.assign(m, std::vector<std::vector<double>>(steps + 1));
        tree.x[0] = {diffusion.x0};
        std::size_t width = 1;
        dsl::Env env;
        for (int l = 1; l <= steps; ++l) {
            width *= branching;
            tree.x[l].resize(width);
            tree.db[l].resize(width);
            for (int mm = 0; mm < m; ++mm) {
                tree.j[mm][l].assign(width, 0.0);
            }
            const double tl = tiny_grid.node(l - 1);
            for (std::size_t node = 0; node < width; ++node) {
                const double parent_x = tree.x[l - 1][node / branching];
                const double dbv = sqrt_dt * gauss(rng);
                tree.db[l][node] = dbv;
                env.set(dsl::Var::S, tl).set(dsl::Var::X, parent_x);
                const double bx = drift.evaluate(env);
                const double sx = vol.evaluate(env);
                const double next = parent_x + bx * dt + sx * dbv;
                if (!std::isfinite(next)) {
                    throw EvaluationError("nested_mc_oracle: diffusion state became non-finite");
                }
                tree.x[l][node] = next;
                if (jumps_active) {
                    std::poisson_distribution<int> pois(jumps.lambda * dt);
                    const int k = pois(rng);
                    for (int jj = 0; jj < k; ++jj) {
                        const double mark = jumps.sample_mark(rng);
                        dsl::Env wenv;
                        wenv.set(dsl::Var::Zeta, mark);
                        for (int mm = 0; mm < m; ++mm) {
                            tree.j[mm][l][node] += w[mm].evaluate(wenv);
                        }
                    }
                    for (int mm = 0; mm < m; ++mm) {
                        tree.j[mm][l][node] -= compensator[mm];
                    }
                }
            }
        }

        // Terminal values sign*psi(t_i) at the leaves for every row i.
        const std::size_t leaves = tree.x[steps].size();
        std::vector<std::vector<double>> psi_leaf(steps + 1, std::vector<double>(leaves));
        for (int i = 0; i <= steps; ++i) {
            dsl::Env penv;
            penv.set(dsl::Var::T, tiny_grid.node(i));
            for (std::size_t leaf = 0; leaf < leaves; ++leaf) {
                if (psi.cls != TerminalClass::Deterministic) {
                    penv.set(dsl::Var::X, tree.x[steps][leaf]);
                }
                if (psi.cls == TerminalClass::PathFunctional) {
                    penv.set(dsl::Var::Xt,
                             tree.x[i][ancestor(leaf, steps, i, branching)]);
                }
                psi_leaf[i][leaf] = sign * psi_expr.evaluate(penv);
            }
        }

        // Diagonal values per level for the Picard y-argument.
        std::vector<std::vector<double>> y_prev(steps + 1), y_next(steps + 1);
        for (int l = 0; l <= steps; ++l) {
            y_prev[l].assign(tree.x[l].size(), 0.0);
            y_next[l].assign(tree.x[l].size(), 0.0);
        }

        double y0 = 0.0;
        const int max_iter = needs_picard ? options.max_picard : 1;
        std::vector<double> history;
        for (int iter = 1; iter <= max_iter; ++iter) {
            y_next[steps] = psi_leaf[steps];
            // Row i sweep: R lives on levels >= i; backward means over
            // children with increment-covariance extraction of z and u.
            for (int i = steps - 1; i >= 0; --i) {
                std::vector<double> r = psi_leaf[i];
                for (int j = steps - 1; j >= i; --j) {
                    const std::size_t width_j = tree.x[j].size();
                    std::vector<double> next_r(width_j);
                    const double tj = tiny_grid.node(j);
                    dsl::Env genv;
                    genv.set(dsl::Var::T, tiny_grid.node(i));
                    genv.set(dsl::Var::S, tj);
                    for (std::size_t node = 0; node < width_j; ++node) {
                        double mean = 0.0;
                        for (int b = 0; b < branching; ++b) {
                            mean += r[node * branching + b];
                        }
                        mean /= branching;
                        double z = 0.0;
                        std::vector<double> u(m, 0.0);
                        for (int b = 0; b < branching; ++b) {
                            const std::size_t child = node * branching + b;
                            const double d = r[child] - mean;
                            z += d * tree.db[j + 1][child];
                            for (int mm = 0; mm < m; ++mm) {
                                u[mm] += d * tree.j[mm][j + 1][child];
                            }
                        }
                        z /= branching * dt;
                        for (int mm = 0; mm < m; ++mm) {
                            u[mm] /= branching * dt;
                        }
                        genv.set(dsl::Var::Y, y_prev[j][node]);
                        genv.set(dsl::Var::Z, z);
                        for (int mm = 0; mm < m; ++mm) {
                            genv.set(static_cast<dsl::Var>(static_cast<int>(dsl::Var::U1) + mm),
                                     u[mm]);
                        }
                        genv.set(dsl::Var::X, tree.x[j][node]);
                        genv.set(dsl::Var::Xt, tree.x[i][ancestor(node, j, i, branching)]);
                        next_r[node] = mean + g.evaluate(genv) * dt;
                    }
                    r.swap(next_r);
                }
                y_next[i] = r; // level i holds the diagonal values of row i
                if (i == 0) {
                    y0 = r[0];
                }
            }
            if (!needs_picard) {
                break;
            }
            double dist = 0.0;
            for (int l = 0; l <= steps; ++l) {
                double acc = 0.0;
                for (std::size_t node = 0; node < y_next[l].size(); ++node) {
                    const double d = y_next[l][node] - y_prev[l][node];
                    acc += d * d;
                }
                dist = std::max(dist, std::sqrt(acc / y_next[l].size()));
            }
            history.push_back(dist);
            y_prev = y_next;
            if (dist < options.picard_tol) {
                break;
            }
            if (iter == max_iter) {
                throw DivergenceError(history, "nested_mc_oracle: Picard did not converge");
            }
        }
        estimates[rep] = y0;
    });

    OracleResult out;
    out.replications = replications;
    double mean = 0.0;
    for (double v : estimates) {
        mean += v;
    }
    mean /= replications;
    double var = 0.0;
    for (double v : estimates) {
        var += (v - mean) * (v - mean);
    }
    out.y0 = mean;
    out.std_error = std::sqrt(var / (replications - 1.0)) / std::sqrt(static_cast<double>(replications));
    return out;
}

} // namespace bsvie
