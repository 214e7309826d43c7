// Gauss-Legendre nodes/weights and composite rules shared by the surface
// and time quadratures. Node order is fixed (ascending) so reductions are
// bit-reproducible.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "actionqm/common.hpp"

namespace aqm {

struct QuadRule {
    std::vector<double> nodes;   // on [0,1], ascending
    std::vector<double> weights; // sum to 1
};

// Gauss-Legendre rule on [0,1] computed with Newton iteration on P_n.
// Accuracy ~1e-15 for the orders used here (<= 64).
inline QuadRule gauss_legendre(int n) {
    require(n >= 1 && n <= 256, "gauss_legendre: order out of range");
    QuadRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // initial guess (Chebyshev-like), roots on (-1,1)
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            // evaluate P_n(x) and P_n'(x) by recurrence
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::fabs(dx) < 1e-15) break;
        }
        // map root to [0,1]; loop index runs over descending roots
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        double dp = n * (x * p1 - p0) / (x * x - 1.0);
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[n - 1 - i] = 0.5 * (x + 1.0);
        r.weights[n - 1 - i] = 0.5 * w;
    }
    return r;
}

// Cached lookup; rules are immutable after construction.
inline const QuadRule& gauss_legendre_cached(int n) {
    static std::vector<QuadRule> cache(257);
    if (cache[n].nodes.empty()) cache[n] = gauss_legendre(n);
    return cache[n];
}

// Composite Simpson over a knot grid; f is evaluated at knots and midpoints.
inline double composite_simpson(const std::vector<double>& knots,
                                const std::function<double(double)>& f) {
    require(knots.size() >= 2, "composite_simpson: need at least one interval");
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        double a = knots[i], b = knots[i + 1];
        double m = 0.5 * (a + b);
        sum += (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
    }
    return sum;
}

} // namespace aqm
