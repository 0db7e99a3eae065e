#pragma once

/**
 * @file mollifier.hpp
 * @brief One-sided-in-time mollification of grid data.
 *
 * The kernel is psi(t', x') = phi_t(t') prod_j phi(x'_j) with
 *   phi(s)   = 315/256 (1 - s^2)^4   on [-1, 1],
 *   phi_t(s) = 2 phi(2 s + 1)        on [-1, 0],
 * each integrating to 1, and psi_delta(z) = delta^{-1-d} psi(z / delta).
 * The smoothed function is
 *   W(t, x) = int w(t + t', x + x') psi_delta(t', x') dt' dx',
 * which only looks at times in [t - delta, t]. w is the multilinear
 * interpolant of the node values, extended constantly outside the grid.
 *
 * Because w is piecewise polynomial along each axis and the kernel is a
 * polynomial, every one-dimensional integral is evaluated exactly by
 * Gauss-Legendre quadrature on each cell; derivatives of W come from the
 * exactly differentiated kernel.
 */

#include "hedgegame/grid.hpp"
#include "hedgegame/model.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace hedgegame {

namespace kernel {

inline constexpr double kNorm = 315.0 / 256.0;

inline double phi(double s) {
    if (s <= -1.0 || s >= 1.0) return 0.0;
    double u = 1.0 - s * s;
    return kNorm * u * u * u * u;
}
inline double dphi(double s) {
    if (s <= -1.0 || s >= 1.0) return 0.0;
    double u = 1.0 - s * s;
    return -8.0 * kNorm * s * u * u * u;
}
inline double d2phi(double s) {
    if (s <= -1.0 || s >= 1.0) return 0.0;
    double u = 1.0 - s * s;
    return -8.0 * kNorm * u * u * (1.0 - 7.0 * s * s);
}

/// Derivative of order m (0..2) of the space profile or the time profile.
inline double profile(bool time_axis, int m, double s) {
    if (time_axis) {
        double r = 2.0 * s + 1.0;
        switch (m) {
            case 0: return 2.0 * phi(r);
            case 1: return 4.0 * dphi(r);
            default: return 8.0 * d2phi(r);
        }
    }
    switch (m) {
        case 0: return phi(s);
        case 1: return dphi(s);
        default: return d2phi(s);
    }
}

// 5-point Gauss-Legendre on [-1, 1]; exact for polynomials of degree <= 9.
inline constexpr std::array<double, 5> kGaussX{-0.9061798459386640, -0.5384693101056831, 0.0,
                                               0.5384693101056831, 0.9061798459386640};
inline constexpr std::array<double, 5> kGaussW{0.2369268850561891, 0.4786286704993665,
                                               0.5688888888888889, 0.4786286704993665,
                                               0.2369268850561891};

/// Second moment int s^2 phi(s) ds of the space profile (exactly 1/11).
/// The integrand has degree 10, so each half is split into 16 cells.
inline double second_moment() {
    double acc = 0.0;
    const int cells = 32;
    for (int c = 0; c < cells; ++c) {
        double lo = -1.0 + 2.0 * c / cells, half = 1.0 / cells;
        for (std::size_t g = 0; g < kGaussX.size(); ++g) {
            double s = lo + half * (kGaussX[g] + 1.0);
            acc += half * kGaussW[g] * s * s * phi(s);
        }
    }
    return acc;
}

}  // namespace kernel

/// Weights of the nodes of one axis in the value and its first two
/// derivatives with respect to the evaluation coordinate.
struct AxisWeights {
    int first = 0;  ///< node index of w0[0]
    std::vector<double> w0, w1, w2;
};

/**
 * Integrates the hat functions of an axis with nodes lo + i h (i < n, the
 * last one exactly hi) against the kernel centered at c with radius delta.
 */
inline AxisWeights axis_weights(double c, double lo, double hi, double h, int n, double delta,
                                bool time_axis) {
    double s_lo = -1.0, s_hi = time_axis ? 0.0 : 1.0;
    double u_lo = c + delta * s_lo, u_hi = c + delta * s_hi;

    auto node_of = [&](double u) {
        double r = (u - lo) / h;
        return static_cast<int>(std::floor(r));
    };
    int i_lo = std::clamp(node_of(u_lo), 0, n - 1);
    int i_hi = std::clamp(node_of(u_hi) + 1, 0, n - 1);
    AxisWeights out;
    out.first = i_lo;
    std::size_t len = static_cast<std::size_t>(i_hi - i_lo + 1);
    out.w0.assign(len, 0.0);
    out.w1.assign(len, 0.0);
    out.w2.assign(len, 0.0);

    auto node_x = [&](int i) { return i == n - 1 ? hi : lo + i * h; };
    // Breakpoints: support ends and every node strictly inside.
    std::vector<double> cuts{u_lo};
    for (int i = i_lo; i <= i_hi; ++i) {
        double xi = node_x(i);
        if (xi > u_lo && xi < u_hi) cuts.push_back(xi);
    }
    cuts.push_back(u_hi);

    const double inv1 = 1.0 / delta, inv2 = inv1 * inv1, inv3 = inv2 * inv1;
    auto add = [&](int node, double weight, double s) {
        std::size_t k = static_cast<std::size_t>(node - i_lo);
        out.w0[k] += weight * kernel::profile(time_axis, 0, s) * inv1;
        out.w1[k] -= weight * kernel::profile(time_axis, 1, s) * inv2;
        out.w2[k] += weight * kernel::profile(time_axis, 2, s) * inv3;
    };
    for (std::size_t piece = 0; piece + 1 < cuts.size(); ++piece) {
        double a = cuts[piece], b = cuts[piece + 1];
        if (b <= a) continue;
        double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        for (std::size_t g = 0; g < kernel::kGaussX.size(); ++g) {
            double u = mid + half * kernel::kGaussX[g];
            double wq = half * kernel::kGaussW[g];
            double s = (u - c) * inv1;
            if (mid <= lo) {
                add(0, wq, s);
            } else if (mid >= hi) {
                add(n - 1, wq, s);
            } else {
                int cell = std::clamp(node_of(mid), 0, n - 2);
                double f = (u - node_x(cell)) / (node_x(cell + 1) - node_x(cell));
                add(cell, wq * (1.0 - f), s);
                add(cell + 1, wq * f, s);
            }
        }
    }
    return out;
}

/**
 * Mollified grid function. Immutable; eval is thread-safe.
 */
class SmoothSurface {
public:
    SmoothSurface() = default;
    /// time_offset: lattice time of model time 0 (the lattice may start
    /// before 0 so that the one-sided kernel has data at t = 0).
    SmoothSurface(Lattice lattice, std::vector<double> node_values, double delta,
                  double time_offset = 0.0)
        : lattice_(std::move(lattice)),
          nodes_(std::move(node_values)),
          delta_(delta),
          offset_(time_offset) {
        if (!(delta_ > 0.0)) throw ConfigError("mollifier requires delta > 0");
        if (nodes_.size() != lattice_.size())
            throw ConfigError("mollifier node count does not match the lattice");
        double cell = lattice_.dt();
        for (int j = 0; j < lattice_.dim(); ++j) cell = std::max(cell, lattice_.h(j));
        if (delta_ < cell)
            warnings_.push_back("delta " + std::to_string(delta_) +
                                " is smaller than one grid cell; quadrature is degenerate");
    }

    // Construction parameters, recorded for reports and caches.
    double eps = 0.0;
    double k = 0.0;
    double B_t_lo = 0.0, B_t_hi = 0.0;
    Vec B_lo, B_hi;

    const Lattice& lattice() const { return lattice_; }
    const std::vector<double>& node_values() const { return nodes_; }
    double delta() const { return delta_; }
    double time_offset() const { return offset_; }
    /// Model time of the last layer.
    double horizon() const { return lattice_.horizon() - offset_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    /// (W, dW/dt, DW, D^2 W) at model time t and point x.
    DerivativePack eval(double t, const Vec& x) const {
        const Lattice& lat = lattice_;
        const int d = lat.dim();
        const std::size_t S = lat.space_size();
        const double T = lat.horizon();
        AxisWeights wt = axis_weights(t + offset_, 0.0, T, lat.dt(), lat.layers(), delta_, true);
        std::array<AxisWeights, kMaxDim> wx;
        for (int j = 0; j < d; ++j)
            wx[j] = axis_weights(x(j), lat.spec().x_min(j), lat.spec().x_max(j), lat.h(j),
                                 lat.nodes(j), delta_, false);

        DerivativePack out = DerivativePack::zero(d);
        for (std::size_t a = 0; a < wt.w0.size(); ++a) {
            const double* layer = nodes_.data() + static_cast<std::size_t>(wt.first + a) * S;
            if (d == 1) {
                double v = 0, v1 = 0, v2 = 0;
                for (std::size_t i = 0; i < wx[0].w0.size(); ++i) {
                    double w = layer[wx[0].first + i];
                    v += w * wx[0].w0[i];
                    v1 += w * wx[0].w1[i];
                    v2 += w * wx[0].w2[i];
                }
                out.y += wt.w0[a] * v;
                out.q += wt.w1[a] * v;
                out.p(0) += wt.w0[a] * v1;
                out.M(0, 0) += wt.w0[a] * v2;
            } else {
                for (std::size_t j = 0; j < wx[1].w0.size(); ++j) {
                    const double* row = layer + static_cast<std::size_t>(wx[1].first + j) * lat.stride(1);
                    double v = 0, v1 = 0, v2 = 0;
                    for (std::size_t i = 0; i < wx[0].w0.size(); ++i) {
                        double w = row[wx[0].first + i];
                        v += w * wx[0].w0[i];
                        v1 += w * wx[0].w1[i];
                        v2 += w * wx[0].w2[i];
                    }
                    double b0 = wx[1].w0[j], b1 = wx[1].w1[j], b2 = wx[1].w2[j];
                    out.y += wt.w0[a] * b0 * v;
                    out.q += wt.w1[a] * b0 * v;
                    out.p(0) += wt.w0[a] * b0 * v1;
                    out.p(1) += wt.w0[a] * b1 * v;
                    out.M(0, 0) += wt.w0[a] * b0 * v2;
                    out.M(1, 1) += wt.w0[a] * b2 * v;
                    out.M(0, 1) += wt.w0[a] * b1 * v1;
                }
                out.M(1, 0) = out.M(0, 1);
            }
        }
        return out;
    }

    double value(double t, const Vec& x) const { return eval(t, x).y; }

private:
    Lattice lattice_;
    std::vector<double> nodes_;
    double delta_ = 1.0;
    double offset_ = 0.0;
    std::vector<std::string> warnings_;
};

/// Mollifies node values given on `lattice` with radius delta.
inline SmoothSurface mollify(const Lattice& lattice, std::vector<double> values, double delta,
                             double time_offset = 0.0) {
    return SmoothSurface(lattice, std::move(values), delta, time_offset);
}

}  // namespace hedgegame
