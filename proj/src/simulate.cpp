#include "bsvie/simulate.hpp"

#include <cmath>
#include <sstream>

#include "bsvie/parallel.hpp"
#include "bsvie/random.hpp"

namespace bsvie {

void JumpModel::validate() const {
    if (lambda < 0.0) {
        throw Error("jump model: intensity must be nonnegative");
    }
    if (!active()) {
        return;
    }
    switch (dist) {
    case MarkDist::Point:
        if (a == 0.0) {
            throw Error("jump model: point mass at zero is not a jump");
        }
        break;
    case MarkDist::Normal:
    case MarkDist::Lognormal:
        if (!(b > 0.0)) {
            throw Error("jump model: mark distribution needs a positive spread");
        }
        break;
    }
}

MarkQuadrature MarkQuadrature::build(const JumpModel& jm) {
    MarkQuadrature q;
    if (jm.dist == MarkDist::Point) {
        q.nodes = {jm.a};
        q.weights = {1.0};
        return q;
    }
    // Composite Simpson against the standard normal density on [-10, 10];
    // marks are a + b*g (Normal) or exp(a + b*g) (Lognormal).
    constexpr int kIntervals = 400;
    constexpr double kRange = 10.0;
    const double h = 2.0 * kRange / kIntervals;
    const double inv_sqrt_2pi = 0.3989422804014327;
    q.nodes.reserve(kIntervals + 1);
    q.weights.reserve(kIntervals + 1);
    for (int k = 0; k <= kIntervals; ++k) {
        double g = -kRange + k * h;
        double simpson = (k == 0 || k == kIntervals) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        double w = simpson * h / 3.0 * inv_sqrt_2pi * std::exp(-0.5 * g * g);
        double zeta = jm.dist == MarkDist::Normal ? jm.a + jm.b * g : std::exp(jm.a + jm.b * g);
        q.nodes.push_back(zeta);
        q.weights.push_back(w);
    }
    return q;
}

double JumpModel::nu_integral(const std::function<double(double)>& w) const {
    if (!active()) {
        return 0.0;
    }
    MarkQuadrature q = MarkQuadrature::build(*this);
    double value = lambda * q.expectation(w);
    if (!std::isfinite(value)) {
        throw EvaluationError("nu-integral of weight is not finite");
    }
    return value;
}

double JumpModel::sample_mark(std::mt19937_64& rng) const {
    switch (dist) {
    case MarkDist::Point:
        return a;
    case MarkDist::Normal: {
        std::normal_distribution<double> d(a, b);
        return d(rng);
    }
    case MarkDist::Lognormal: {
        std::normal_distribution<double> d(a, b);
        return std::exp(d(rng));
    }
    }
    return a;
}

PathBundle simulate_paths(const TimeGrid& grid, const JumpModel& jumps,
                          const DiffusionModel& diffusion, int n_paths, std::uint64_t seed) {
    if (n_paths < 1) {
        throw Error("simulate_paths: need at least one path");
    }
    jumps.validate();
    if (jumps.active()) {
        // Square-integrability of the marks; structural for the supported
        // families but evaluated anyway so misconfigurations surface here.
        jumps.nu_integral([](double z) { return z * z; });
    }

    const int n_steps = grid.steps;
    const double dt = grid.dt();
    const double sqrt_dt = std::sqrt(dt);

    PathBundle out;
    out.grid = grid;
    out.n_paths = n_paths;
    out.seed = seed;
    out.jumps = jumps;
    out.x0 = diffusion.x0;
    out.db.resize(static_cast<std::size_t>(n_steps) * n_paths);
    out.x.resize(static_cast<std::size_t>(n_steps + 1) * n_paths);

    dsl::CompiledExpr drift(diffusion.drift);
    dsl::CompiledExpr vol(diffusion.volatility);

    struct PathJumps {
        std::vector<double> time;
        std::vector<double> mark;
        std::vector<std::uint32_t> count; // per interval
    };
    std::vector<PathJumps> per_path(n_paths);

    parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t p) {
        std::mt19937_64 rng = path_engine(seed, p);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        PathJumps& pj = per_path[p];
        pj.count.assign(n_steps, 0);

        dsl::Env env;
        double xi = diffusion.x0;
        out.x[p] = xi;
        for (int i = 0; i < n_steps; ++i) {
            double ti = grid.node(i);
            double dbi = sqrt_dt * gauss(rng);
            out.db[static_cast<std::size_t>(i) * n_paths + p] = dbi;

            if (jumps.active()) {
                std::poisson_distribution<int> pois(jumps.lambda * dt);
                int k = pois(rng);
                pj.count[i] = static_cast<std::uint32_t>(k);
                for (int j = 0; j < k; ++j) {
                    double u = 1.0 - unif(rng); // in (0, 1]
                    pj.time.push_back(ti + u * dt);
                    pj.mark.push_back(jumps.sample_mark(rng));
                }
            }

            env.set(dsl::Var::S, ti).set(dsl::Var::X, xi);
            double bi, si;
            try {
                bi = drift.evaluate(env);
                si = vol.evaluate(env);
            } catch (const Error& e) {
                std::ostringstream os;
                os << "drift/volatility evaluation failed at step " << i << ", path " << p << ": "
                   << e.what();
                throw EvaluationError(os.str());
            }
            xi = xi + bi * dt + si * dbi;
            if (!std::isfinite(xi)) {
                std::ostringstream os;
                os << "diffusion state became non-finite at step " << i + 1 << ", path " << p;
                throw EvaluationError(os.str());
            }
            out.x[static_cast<std::size_t>(i + 1) * n_paths + p] = xi;
        }
    });

    // Flatten jump lists into path-major CSR.
    out.jump_offset.resize(static_cast<std::size_t>(n_paths) * n_steps + 1);
    std::uint32_t total = 0;
    for (int p = 0; p < n_paths; ++p) {
        for (int i = 0; i < n_steps; ++i) {
            out.jump_offset[static_cast<std::size_t>(p) * n_steps + i] = total;
            total += per_path[p].count[i];
        }
    }
    out.jump_offset.back() = total;
    out.jump_time.reserve(total);
    out.jump_mark.reserve(total);
    for (int p = 0; p < n_paths; ++p) {
        out.jump_time.insert(out.jump_time.end(), per_path[p].time.begin(),
                             per_path[p].time.end());
        out.jump_mark.insert(out.jump_mark.end(), per_path[p].mark.begin(),
                             per_path[p].mark.end());
    }
    return out;
}

std::vector<double> jump_integral(const PathBundle& bundle, const dsl::Expression& weight,
                                  int i_from, int i_to) {
    if (i_from < 0 || i_to > bundle.grid.steps || i_from > i_to) {
        throw Error("jump_integral: invalid interval indices");
    }
    dsl::CompiledExpr w(weight);
    auto eval_w = [&](double zeta) {
        dsl::Env env;
        env.set(dsl::Var::Zeta, zeta);
        try {
            return w.evaluate(env);
        } catch (const Error& e) {
            std::ostringstream os;
            os << "jump weight failed at mark " << zeta << ": " << e.what();
            throw EvaluationError(os.str());
        }
    };

    double compensator = 0.0;
    if (bundle.jumps.active()) {
        bundle.jumps.nu_integral([&](double z) {
            double v = eval_w(z);
            return v * v;
        }); // square-integrability check
        compensator = bundle.jumps.nu_integral(eval_w);
    }
    double comp_term = (i_to - i_from) * bundle.grid.dt() * compensator;

    std::vector<double> out(bundle.n_paths, 0.0);
    parallel_for(static_cast<std::size_t>(bundle.n_paths), [&](std::size_t p) {
        double sum = 0.0;
        for (int i = i_from; i < i_to; ++i) {
            auto jr = bundle.jumps_in(i, static_cast<int>(p));
            for (std::size_t k = 0; k < jr.count; ++k) {
                sum += eval_w(jr.mark[k]);
            }
        }
        out[p] = sum - comp_term;
    });
    return out;
}

} // namespace bsvie
