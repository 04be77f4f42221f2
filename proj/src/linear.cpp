#include "bsvie/linear.hpp"

#include <cmath>

#include "bsvie/parallel.hpp"

namespace bsvie {

LinearSolution solve_linear(const LinearProblem& problem, const PathBundle& bundle,
                            const RegressionSet& regressions, DenominatorMode mode) {
    if (problem.sign != 1 && problem.sign != -1) {
        throw Error("solve_linear: sign must be +1 or -1");
    }
    if (&regressions.bundle() != &bundle) {
        throw Error("solve_linear: regression set must be built on the same bundle");
    }
    const int n = bundle.n_paths;
    const int nodes = bundle.grid.node_count();
    const double sign = problem.sign;

    std::vector<double> psi_vals = problem.psi.evaluate(bundle);

    // alpha == 0 skips the resolvent entirely (the ratio of psi(t) alone).
    std::vector<double> correction;
    LinearSolution out;
    if (problem.kernel && !problem.kernel->alpha.empty()) {
        ResolventTable table = resolvent(*problem.kernel, bundle.grid, problem.resolvent_tol);
        correction = convolve(table, psi_vals, n);
        out.resolvent_order = table.n_max;
        out.resolvent_tail = table.tail_bound;
    }

    DensityPath density = stochastic_exponential(problem.coeffs, bundle);

    out.n_paths = n;
    out.y.assign(static_cast<std::size_t>(nodes) * n, 0.0);
    out.nodes.resize(nodes);
    out.numerator_coef.resize(nodes);
    out.denominator_coef.resize(nodes);

    parallel_for(static_cast<std::size_t>(nodes), [&](std::size_t i_) {
        const int i = static_cast<int>(i_);
        std::vector<double> payoff(n);
        for (int p = 0; p < n; ++p) {
            double base = psi_vals[static_cast<std::size_t>(i) * n + p];
            if (!correction.empty()) {
                base += correction[static_cast<std::size_t>(i) * n + p];
            }
            payoff[p] = sign * base;
        }

        NodeEstimate& est = out.nodes[i];
        double* target = out.y.data() + static_cast<std::size_t>(i) * n;
        if (i == nodes - 1) {
            // At t = T the conditional expectations are F_T-trivial:
            // Y(T) = sign * psi(T) path-wise.
            double mean = 0.0;
            for (int p = 0; p < n; ++p) {
                target[p] = payoff[p];
                mean += payoff[p];
            }
            mean /= n;
            double var = 0.0;
            for (int p = 0; p < n; ++p) {
                var += (payoff[p] - mean) * (payoff[p] - mean);
            }
            est.mean = mean;
            est.at_x0 = mean;
            est.std_error = std::sqrt(var / n) / std::sqrt(static_cast<double>(n));
            return;
        }

        RatioEstimate ratio = q_conditional_ratio(payoff, density, regressions, i, mode);
        std::copy(ratio.values.begin(), ratio.values.end(), target);
        est.mean = ratio.mean;
        est.std_error = ratio.std_error;
        est.at_x0 = ratio.at_x0;
        out.numerator_coef[i] = std::move(ratio.numerator_coef);
        out.denominator_coef[i] = std::move(ratio.denominator_coef);
    });
    return out;
}

} // namespace bsvie
