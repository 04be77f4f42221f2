#pragma once

#include <string>
#include <vector>

#include "bsvie/solver.hpp"

namespace bsvie {

/// Which comparison statement the instance claims to satisfy. The two
/// orientations pair different terminal-ordering directions with different
/// terminal signs, and the harness refuses mixed setups.
enum class Orientation {
    General,     // +psi convention, y-dependent drivers allowed; needs psi1 >= psi2
    YIndependent // -psi convention, y-independent drivers; needs psi1 <= psi2
};

struct ComparisonInstance {
    Driver g1, g2;
    TerminalProcess psi1, psi2;
    GirsanovCoefficients certificate; // theta-candidate for the jump-monotonicity condition
    Orientation orientation = Orientation::YIndependent;

    int sign() const { return orientation == Orientation::General ? 1 : -1; }
    void validate() const;
};

struct ConditionVerdict {
    std::string condition;
    bool pass = false;
    double worst_margin = 0.0; // smallest slack; negative = violated
    std::string worst_point;
};

struct HypothesisReport {
    std::vector<ConditionVerdict> verdicts;
    bool all_pass() const {
        for (const auto& v : verdicts) {
            if (!v.pass) {
                return false;
            }
        }
        return !verdicts.empty();
    }
    const ConditionVerdict* find(const std::string& name) const {
        for (const auto& v : verdicts) {
            if (v.condition == name) {
                return &v;
            }
        }
        return nullptr;
    }
};

/// Samples the theorem hypotheses: driver ordering and y-monotonicity on a
/// box plus the realized solution values, the jump-monotonicity inequality
/// at the realized K-coefficients with the certificate theta expanded in
/// the same mark basis, the certificate bounds, and the terminal ordering
/// node-wise per path.
HypothesisReport check_hypotheses(const ComparisonInstance& instance,
                                  const SolutionSurface& surface1,
                                  const SolutionSurface& surface2, const PathBundle& bundle,
                                  int sample_count, std::uint64_t seed = 20181223);

struct OrderingVerdict {
    bool pass = false;
    std::vector<int> violating_nodes;
    std::vector<double> difference;  // mean(Y1) - mean(Y2) per node
    std::vector<double> combined_se; // per node
};

/// Conclusion check: mean Y1 - mean Y2 >= -tol_multiplier * combined SE at
/// every node (common random numbers assumed).
OrderingVerdict verify_ordering(const SolutionSurface& surface1, const SolutionSurface& surface2,
                                double tol_multiplier = 3.0);

} // namespace bsvie
