#pragma once

#include "bsvie/errors.hpp"

namespace bsvie {

/// Uniform partition of [0, T] into N steps; nodes t_i = i*T/N.
struct TimeGrid {
    double horizon = 1.0;
    int steps = 1;

    TimeGrid() = default;
    TimeGrid(double T, int N) : horizon(T), steps(N) {
        if (!(T > 0.0)) {
            throw Error("time grid: horizon must be positive");
        }
        if (N < 1) {
            throw Error("time grid: step count must be at least 1");
        }
    }

    double dt() const { return horizon / steps; }
    double node(int i) const { return horizon * i / steps; }
    int node_count() const { return steps + 1; }
};

} // namespace bsvie
