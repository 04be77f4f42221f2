#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "bsvie/expr.hpp"
#include "bsvie/grid.hpp"

namespace bsvie {

enum class MarkDist { Point, Normal, Lognormal };

/// Finite-activity jump model: Poisson arrivals with rate lambda, i.i.d.
/// marks from `dist`, Levy measure nu = lambda * mu.
struct JumpModel {
    double lambda = 0.0;
    MarkDist dist = MarkDist::Point;
    // Point: a = atom location (nonzero). Normal/Lognormal: a = mean/mu of
    // the underlying normal, b = its standard deviation.
    double a = 1.0;
    double b = 0.0;

    void validate() const;

    bool active() const { return lambda > 0.0; }

    /// Integral of w against nu = lambda * mu, by quadrature on mu.
    double nu_integral(const std::function<double(double)>& w) const;

    double sample_mark(std::mt19937_64& rng) const;
};

/// Forward diffusion dX = b(s,X)ds + sigma(s,X)dB, Euler-discretized.
/// Expressions range over variables (s, x).
struct DiffusionModel {
    double x0 = 1.0;
    dsl::Expression drift;     // b(s, x)
    dsl::Expression volatility; // sigma(s, x)
};

/// Simulated scenario set: Brownian increments, jump times/marks per
/// interval and Euler states, all deterministic in (inputs, seed).
/// Immutable after construction; layout is node-major for dB/X
/// ([i*n_paths + p]) and path-major CSR for jumps.
struct PathBundle {
    TimeGrid grid;
    int n_paths = 0;
    std::uint64_t seed = 0;
    JumpModel jumps;
    double x0 = 0.0;

    std::vector<double> db;  // [i*n_paths + p], i in [0, N)
    std::vector<double> x;   // [i*n_paths + p], i in [0, N]

    std::vector<std::uint32_t> jump_offset; // size N*n_paths + 1, index p*N + i
    std::vector<double> jump_time;
    std::vector<double> jump_mark;

    double brownian_increment(int i, int p) const { return db[static_cast<std::size_t>(i) * n_paths + p]; }
    double state(int i, int p) const { return x[static_cast<std::size_t>(i) * n_paths + p]; }
    std::span<const double> state_row(int i) const {
        return {x.data() + static_cast<std::size_t>(i) * n_paths, static_cast<std::size_t>(n_paths)};
    }

    struct JumpRange {
        const double* time;
        const double* mark;
        std::size_t count;
    };
    JumpRange jumps_in(int i, int p) const {
        std::size_t k = static_cast<std::size_t>(p) * grid.steps + i;
        std::uint32_t lo = jump_offset[k], hi = jump_offset[k + 1];
        return {jump_time.data() + lo, jump_mark.data() + lo, hi - lo};
    }

    /// Brownian path value B(t_i) reconstructed from increments.
    double brownian(int i, int p) const {
        double sum = 0.0;
        for (int j = 0; j < i; ++j) {
            sum += brownian_increment(j, p);
        }
        return sum;
    }
};

PathBundle simulate_paths(const TimeGrid& grid, const JumpModel& jumps,
                          const DiffusionModel& diffusion, int n_paths, std::uint64_t seed);

/// Per-path compensated integral of w against N~ over (t_{i_from}, t_{i_to}]:
/// sum of w(mark) over jumps minus (i_to - i_from)*dt * integral of w dnu.
/// Requires integral of w^2 dnu finite (checked by quadrature).
std::vector<double> jump_integral(const PathBundle& bundle, const dsl::Expression& weight,
                                  int i_from, int i_to);

/// Quadrature rule on the mark distribution: nodes and weights such that
/// E_mu[h] ~= sum_q weight_q * h(node_q).
struct MarkQuadrature {
    std::vector<double> nodes;
    std::vector<double> weights;

    static MarkQuadrature build(const JumpModel& jm);

    double expectation(const std::function<double(double)>& h) const {
        double s = 0.0;
        for (std::size_t q = 0; q < nodes.size(); ++q) {
            s += weights[q] * h(nodes[q]);
        }
        return s;
    }
};

} // namespace bsvie
