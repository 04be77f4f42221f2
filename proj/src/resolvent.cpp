#include "bsvie/resolvent.hpp"

#include <cmath>
#include <sstream>

#include "bsvie/parallel.hpp"

namespace bsvie {

double TriangularTable::max_abs() const {
    double m = 0.0;
    for (double v : values_) {
        m = std::max(m, std::fabs(v));
    }
    return m;
}

namespace {

/// Samples alpha on the triangle once and audits the declared bound.
TriangularTable sample_kernel(const VolterraKernel& kernel, const TimeGrid& grid) {
    const int nodes = grid.node_count();
    TriangularTable a(nodes);
    dsl::CompiledExpr alpha(kernel.alpha);
    dsl::Env env;
    for (int i = 0; i < nodes; ++i) {
        env.set(dsl::Var::T, grid.node(i));
        for (int j = i; j < nodes; ++j) {
            env.set(dsl::Var::S, grid.node(j));
            const double v = alpha.evaluate(env);
            if (std::fabs(v) > kernel.bound * (1.0 + 1e-12)) {
                std::ostringstream os;
                os << "kernel exceeds its declared bound at (t, s) = (" << grid.node(i) << ", "
                   << grid.node(j) << "): |" << v << "| > " << kernel.bound;
                throw Error(os.str());
            }
            a.at(i, j) = v;
        }
    }
    return a;
}

/// One composition step: next(t_i, t_j) = trapz_{l=i..j} prev(t_i, t_l) * a(t_l, t_j).
TriangularTable compose(const TriangularTable& prev, const TriangularTable& a, double dt) {
    const int nodes = prev.node_count();
    TriangularTable next(nodes);
    parallel_for(static_cast<std::size_t>(nodes), [&](std::size_t i_) {
        const int i = static_cast<int>(i_);
        for (int j = i; j < nodes; ++j) {
            if (j == i) {
                next.at(i, j) = 0.0;
                continue;
            }
            double sum = 0.5 * (prev.at(i, i) * a.at(i, j) + prev.at(i, j) * a.at(j, j));
            for (int l = i + 1; l < j; ++l) {
                sum += prev.at(i, l) * a.at(l, j);
            }
            next.at(i, j) = sum * dt;
        }
    });
    return next;
}

} // namespace

TriangularTable iterate_kernel(const VolterraKernel& kernel, const TimeGrid& grid, int order) {
    if (order < 1) {
        throw Error("iterate_kernel: order must be >= 1");
    }
    TriangularTable a = sample_kernel(kernel, grid);
    TriangularTable current = a;
    for (int n = 2; n <= order; ++n) {
        current = compose(current, a, grid.dt());
    }
    return current;
}

ResolventTable resolvent(const VolterraKernel& kernel, const TimeGrid& grid, double tol,
                         int hard_cap) {
    if (!(tol > 0.0)) {
        throw Error("resolvent: tolerance must be positive");
    }
    const double ct = kernel.bound * grid.horizon;
    if (ct > 700.0) {
        std::ostringstream os;
        os << "resolvent: C*T = " << ct << " overflows the factorial majorant";
        throw CapacityError(os.str());
    }

    // Truncation via the majorant |alpha^(n)(t, r)| <= C^n (r-t)^(n-1)/(n-1)!
    // that the kernel recursion actually yields, so the reported tail bound
    // really dominates every dropped term: tail(m) = sum_{n > m} of
    // C^n T^(n-1)/(n-1)! = C * sum_{k >= m} (CT)^k / k!. Once the terms decay
    // geometrically the remainder is bounded by the current term times the
    // geometric ratio, avoiding cancellation for larger CT.
    const double total = kernel.bound * std::exp(ct);
    double term = kernel.bound; // C * (CT)^0 / 0!
    double partial = 0.0;       // C * sum_{k < m} (CT)^k / k!
    int n_max = 0;
    auto tail_from = [&](int m, double term_m, double partial_m) {
        // term_m = C (CT)^m / m!; tail = sum_{k >= m}.
        if (m + 1 > ct) {
            return term_m / (1.0 - ct / (m + 1));
        }
        return std::max(total - partial_m, 0.0);
    };
    double tail = tail_from(0, term, partial);
    while (n_max < 1 || tail >= tol) {
        if (n_max >= hard_cap) {
            std::ostringstream os;
            os << "resolvent: truncation order exceeds the cap " << hard_cap
               << " (tail still " << tail << " after " << n_max << " terms)";
            throw CapacityError(os.str());
        }
        ++n_max;
        partial += term;
        term *= ct / n_max;
        tail = tail_from(n_max, term, partial);
    }

    ResolventTable out;
    out.grid = grid;
    out.n_max = n_max;
    out.tail_bound = tail;

    TriangularTable a = sample_kernel(kernel, grid);
    out.phi = a;
    TriangularTable current = a;
    const int nodes = grid.node_count();
    for (int n = 2; n <= n_max; ++n) {
        current = compose(current, a, grid.dt());
        for (int i = 0; i < nodes; ++i) {
            for (int j = i; j < nodes; ++j) {
                out.phi.at(i, j) += current.at(i, j);
            }
        }
    }
    return out;
}

std::vector<double> convolve(const ResolventTable& table, std::span<const double> psi_nodes,
                             int n_paths) {
    const int nodes = table.grid.node_count();
    if (psi_nodes.size() != static_cast<std::size_t>(nodes) * n_paths) {
        throw Error("convolve: psi layout mismatch");
    }
    const double dt = table.grid.dt();
    std::vector<double> out(psi_nodes.size(), 0.0);
    parallel_for(static_cast<std::size_t>(nodes), [&](std::size_t i_) {
        const int i = static_cast<int>(i_);
        if (i == nodes - 1) {
            return; // empty integration range at t = T
        }
        for (int p = 0; p < n_paths; ++p) {
            double sum = 0.5 * (table.phi.at(i, i) * psi_nodes[static_cast<std::size_t>(i) * n_paths + p] +
                                table.phi.at(i, nodes - 1) *
                                    psi_nodes[static_cast<std::size_t>(nodes - 1) * n_paths + p]);
            for (int j = i + 1; j < nodes - 1; ++j) {
                sum += table.phi.at(i, j) * psi_nodes[static_cast<std::size_t>(j) * n_paths + p];
            }
            out[static_cast<std::size_t>(i) * n_paths + p] = sum * dt;
        }
    });
    return out;
}

} // namespace bsvie
