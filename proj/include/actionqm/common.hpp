// Shared error types, tolerances and small helpers used across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace aqm {

// Contract violation on inputs (bad matrix, invalid config, broken invariant).
class validation_error : public std::invalid_argument {
public:
    explicit validation_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numerical failure (non-convergent quadrature, drift beyond tolerance).
// Carries the best estimate available at the time of failure.
class numerics_error : public std::runtime_error {
public:
    numerics_error(const std::string& msg, double best)
        : std::runtime_error(msg), best_estimate(best) {}
    explicit numerics_error(const std::string& msg)
        : std::runtime_error(msg), best_estimate(0.0) {}
    double best_estimate;
};

// Default tolerances; overridable through config where it matters.
struct Tolerances {
    double tol_sp = 1e-9;    // symplectic / algebraic identity residuals
    double tol_pd = 1e-12;   // positive-definiteness margin (smallest eigenvalue)
    double tol_flow = 1e-6;  // symplecticity drift of integrated linearizations
};

inline const Tolerances& default_tols() {
    static const Tolerances t;
    return t;
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw validation_error(msg);
}

} // namespace aqm
