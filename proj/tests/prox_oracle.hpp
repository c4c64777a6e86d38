#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace apollo::testing {

// Scalar objective of the prox problem, in long double.
inline long double prox_objective(long double w, double z, double lambda, double gamma, double s, bool mcp) {
    const long double a = std::fabs(w);
    long double pen = 0;
    if (mcp) {
        pen = a <= gamma * lambda ? lambda * a - w * w / (2.0L * gamma) : 0.5L * gamma * lambda * lambda;
    } else {
        pen = lambda * a;
    }
    return 0.5L * s * (w - z) * (w - z) + pen;
}

// Slope of the scalar objective at w (w != 0, away from the kinks).
inline long double prox_slope(long double w, double z, double lambda, double gamma, double s, bool mcp) {
    const long double sign = w < 0 ? -1 : 1;
    long double pen = sign * lambda;
    if (mcp) pen = std::fabs(w) <= gamma * lambda ? sign * lambda - w / gamma : 0;
    return s * (w - z) + pen;
}

// Global minimizer by brute force: the kinks, plus a bisection on the slope
// inside every smooth piece, compared by objective value.
inline long double prox_oracle(double z, double lambda, double gamma, double s, bool mcp, bool nonneg) {
    const long double span = std::fabs(z) + gamma * lambda + 1;
    std::vector<long double> knots{-span, 0, span};
    if (mcp) {
        knots.push_back(gamma * lambda);
        knots.push_back(-gamma * lambda);
    }
    std::sort(knots.begin(), knots.end());
    std::vector<long double> cands(knots.begin(), knots.end());
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        long double a = knots[k], b = knots[k + 1];
        const long double mid = (a + b) / 2;
        long double fa = prox_slope(a + (mid - a) * 1e-12L, z, lambda, gamma, s, mcp);
        const long double fb = prox_slope(b - (b - mid) * 1e-12L, z, lambda, gamma, s, mcp);
        if ((fa < 0) == (fb < 0)) continue;
        for (int it = 0; it < 200; ++it) {
            const long double m = (a + b) / 2;
            if (m == a || m == b) break;
            const long double fm = prox_slope(m, z, lambda, gamma, s, mcp);
            if ((fm < 0) == (fa < 0)) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        cands.push_back((a + b) / 2);
    }
    long double best = 0;
    long double best_v = prox_objective(0, z, lambda, gamma, s, mcp);
    for (const auto w : cands) {
        if (nonneg && w < 0) continue;
        const auto v = prox_objective(w, z, lambda, gamma, s, mcp);
        if (v < best_v) {
            best_v = v;
            best = w;
        }
    }
    return best;
}

}  // namespace apollo::testing
