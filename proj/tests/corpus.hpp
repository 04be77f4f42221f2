#pragma once

#include <vector>

// Expression corpus shared by the round-trip tests: drivers, coefficients,
// terminal functions and assorted stress cases.
inline const std::vector<const char*>& expression_corpus() {
    static const std::vector<const char*> corpus = {
        "0.5*z + max(y, 0)",
        "0.3*z + 0.2*u1",
        "0.5*abs(z) + 0.2*abs(u1)",
        "0.5*abs(z)",
        "0.2*y",
        "y*0 + x",
        "xt*x",
        "xt*x^2",
        "x + 0.05*x*s",
        "0.2*x",
        "0.05*x",
        "exp(-0.5*t)*x",
        "log(1 + abs(x))",
        "sqrt(abs(z) + 1)",
        "min(z, 0.5)",
        "max(x - 1, 0)",
        "ind(x - 1)",
        "zeta",
        "zeta^2",
        "0.2*zeta",
        "abs(zeta)",
        "1 - ind(t - 0.5)",
        "-x^2",
        "-(x + y)^2",
        "2^3^2",
        "t*s - s^2/2",
        "(t - s)*(t + s)",
        "u1 + u2*0.5 - u3/4",
        "exp(z) - 1",
        "1/(1 + x^2)",
        "0.5*(z + abs(z))",
        "max(min(y, 1), -1)",
        "x*exp(-(s - t))",
        "1e-3*z + 2.5e2",
        "((x))",
    };
    return corpus;
}
