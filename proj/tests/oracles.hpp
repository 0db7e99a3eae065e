#pragma once

// Independent reference values used by the test suites. Nothing here calls
// into the solver code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

/// Black-Scholes call on spot s, strike k, volatility vol, maturity tau, rate r.
inline double bs_call(double s, double k, double vol, double tau, double r = 0.0) {
    if (tau <= 0.0) return std::max(s - k, 0.0);
    double sd = vol * std::sqrt(tau);
    double d1 = (std::log(s / k) + (r + 0.5 * vol * vol) * tau) / sd;
    return s * norm_cdf(d1) - k * std::exp(-r * tau) * norm_cdf(d1 - sd);
}

inline double bs_call_delta(double s, double k, double vol, double tau, double r = 0.0) {
    double sd = vol * std::sqrt(tau);
    double d1 = (std::log(s / k) + (r + 0.5 * vol * vol) * tau) / sd;
    return norm_cdf(d1);
}

inline double bs_call_spread(double s, double k1, double k2, double vol, double tau,
                             double r = 0.0) {
    return bs_call(s, k1, vol, tau, r) - bs_call(s, k2, vol, tau, r);
}

/// Composite Simpson rule on [a, b] with n (even) intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    double h = (b - a) / n, s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

/// Piecewise-constant-control value of the two-vol model with zero rates,
/// by quadrature on a fine x-grid: V_k(x) = max_a E V_{k+1}.
inline double piecewise_constant_uv(double lo, double hi, int segments, double x0) {
    const int n = 4001;
    const double xl = -3.0, xh = 3.0, dx = (xh - xl) / (n - 1);
    std::vector<double> V(n);
    for (int i = 0; i < n; ++i) {
        double s = std::exp(xl + i * dx);
        V[i] = std::max(s - 1.0, 0.0) - std::max(s - 1.4, 0.0);
    }
    auto interp = [&](const std::vector<double>& f, double x) {
        double u = std::clamp((x - xl) / dx, 0.0, n - 1.000001);
        int i = static_cast<int>(u);
        return f[i] + (u - i) * (f[i + 1] - f[i]);
    };
    // Trapezoid rule in z on [-8, 8]; the kinks need a dense rule.
    const int q = 1601;
    std::vector<double> nodes(q), weights(q);
    for (int j = 0; j < q; ++j) {
        nodes[j] = -8.0 + 16.0 * j / (q - 1);
        weights[j] = oracle::norm_pdf(nodes[j]) * 16.0 / (q - 1) * (j == 0 || j == q - 1 ? 0.5 : 1.0);
    }
    const double D = 1.0 / segments;
    for (int k = 0; k < segments; ++k) {
        std::vector<double> next(n, -1e300);
        for (double a : {lo, hi})
            for (int i = 0; i < n; ++i) {
                double s = 0.0;
                for (int j = 0; j < q; ++j)
                    s += weights[j] * interp(V, xl + i * dx - 0.5 * a * a * D + a * std::sqrt(D) * nodes[j]);
                next[i] = std::max(next[i], s);
            }
        V = next;
    }
    return interp(V, x0);
}

}  // namespace oracle
