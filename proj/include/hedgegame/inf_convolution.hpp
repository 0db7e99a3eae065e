#pragma once

/**
 * @file inf_convolution.hpp
 * @brief Discrete quadratic inf-convolution on a rectangular node array
 *
 *   w^k(z) = min_{z'} w(z') + k |z - z'|^2,  |z|^2 = sum_j weight_j z_j^2,
 *
 * computed exactly by one lower-envelope pass per axis (Felzenszwalb and
 * Huttenlocher's distance transform of sampled functions).
 *
 * Arrays are flattened with axis 0 fastest. The quadratic terms are added
 * axis by axis in axis order, so the result is bitwise the minimum over z'
 * of (((w(z') + d_0) + d_1) + ...) with d_j = k * weight_j * (n_j h_j)^2.
 */

#include "hedgegame/parallel.hpp"
#include "hedgegame/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace hedgegame {

/// Shape and metric of the node array being convolved.
struct NodeArray {
    std::vector<int> shape;         ///< node count per axis
    std::vector<double> spacing;    ///< node spacing per axis
    std::vector<double> weights;    ///< metric weight per axis

    std::size_t size() const {
        std::size_t n = 1;
        for (int s : shape) n *= static_cast<std::size_t>(s);
        return n;
    }
    std::size_t stride(std::size_t axis) const {
        std::size_t s = 1;
        for (std::size_t j = 0; j < axis; ++j) s *= static_cast<std::size_t>(shape[j]);
        return s;
    }
};

/// d_j(n) = k * weight_j * (n h_j)^2 for n = 0 .. shape_j - 1.
inline std::vector<double> quadratic_terms(int nodes, double h, double k, double weight) {
    std::vector<double> tab(static_cast<std::size_t>(nodes));
    for (int n = 0; n < nodes; ++n) tab[n] = k * weight * ((n * h) * (n * h));
    return tab;
}

struct InfConvolution {
    std::vector<double> values;
    std::vector<std::size_t> argmin;  ///< flat index of the minimizing node
    double max_displacement_sq = 0.0; ///< max_z |z - argmin(z)|^2 in the weighted metric
};

namespace detail {

/**
 * 1-d pass: out[p] = min_q f[q] + tab[|p - q|], arg[p] the minimizing q
 * (lowest on ties). The envelope is built with floating-point intersections;
 * each output then compares the envelope parabola with its neighbours using
 * the exact term table, which absorbs rounding in the intersections.
 */
inline void lower_envelope(const double* f, int n, const std::vector<double>& tab, double c,
                           double* out, int* arg, std::vector<int>& v, std::vector<double>& z) {
    if (c <= 0.0) {
        int best = 0;
        for (int q = 1; q < n; ++q)
            if (f[q] < f[best]) best = q;
        for (int p = 0; p < n; ++p) {
            out[p] = f[best] + tab[0];
            arg[p] = best;
        }
        return;
    }
    v.assign(static_cast<std::size_t>(n), 0);
    z.assign(static_cast<std::size_t>(n) + 1, 0.0);
    const double inf = std::numeric_limits<double>::infinity();
    int kk = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    for (int q = 1; q < n; ++q) {
        auto cross = [&](int r) { return (f[q] - f[r]) / (2.0 * c * (q - r)) + 0.5 * (q + r); };
        double s = cross(v[kk]);
        while (s <= z[kk]) s = cross(v[--kk]);  // z[0] = -inf stops the loop
        ++kk;
        v[kk] = q;
        z[kk] = s;
        z[kk + 1] = inf;
    }
    int j = 0;
    for (int p = 0; p < n; ++p) {
        while (z[j + 1] < p) ++j;
        int lo = std::max(0, j - 2), hi = std::min(kk, j + 2);
        double best = inf;
        int best_q = 0;
        for (int e = lo; e <= hi; ++e) {
            int q = v[e];
            double val = f[q] + tab[static_cast<std::size_t>(std::abs(p - q))];
            if (val < best || (val == best && q < best_q)) {
                best = val;
                best_q = q;
            }
        }
        out[p] = best;
        arg[p] = best_q;
    }
}

}  // namespace detail

inline InfConvolution inf_convolution(const std::vector<double>& values, const NodeArray& grid,
                                      double k) {
    if (!(k > 0.0)) throw ConfigError("inf-convolution requires k > 0");
    const std::size_t axes = grid.shape.size();
    if (grid.spacing.size() != axes || grid.weights.size() != axes)
        throw ConfigError("inf-convolution shape, spacing and weights differ in length");
    const std::size_t N = grid.size();
    if (values.size() != N) throw ConfigError("inf-convolution value count does not match shape");

    InfConvolution out;
    out.values = values;
    // Per-axis argmin coordinate of every node, composed pass by pass.
    std::vector<std::vector<int>> coord(axes, std::vector<int>(N));
    for (std::size_t a = 0; a < axes; ++a) {
        std::size_t s = grid.stride(a);
        for (std::size_t f = 0; f < N; ++f)
            coord[a][f] = static_cast<int>((f / s) % static_cast<std::size_t>(grid.shape[a]));
    }

    for (std::size_t a = 0; a < axes; ++a) {
        const int n = grid.shape[a];
        const std::size_t s = grid.stride(a);
        const std::size_t rows = N / static_cast<std::size_t>(n);
        auto tab = quadratic_terms(n, grid.spacing[a], k, grid.weights[a]);
        double c = k * grid.weights[a] * grid.spacing[a] * grid.spacing[a];
        std::vector<double> next(N);
        std::vector<std::vector<int>> next_coord = coord;

        parallel_for(rows, [&](std::size_t r) {
            std::size_t base = (r / s) * s * static_cast<std::size_t>(n) + r % s;
            std::vector<double> row(static_cast<std::size_t>(n)), res(static_cast<std::size_t>(n));
            std::vector<int> arg(static_cast<std::size_t>(n)), v;
            std::vector<double> z;
            for (int i = 0; i < n; ++i) row[i] = out.values[base + i * s];
            detail::lower_envelope(row.data(), n, tab, c, res.data(), arg.data(), v, z);
            for (int i = 0; i < n; ++i) {
                std::size_t dst = base + i * s, src = base + static_cast<std::size_t>(arg[i]) * s;
                next[dst] = res[i];
                // The minimizer along this axis inherits the earlier axes'
                // choices recorded at the source node.
                for (std::size_t b = 0; b < a; ++b) next_coord[b][dst] = coord[b][src];
                next_coord[a][dst] = arg[i];
            }
        });
        out.values = std::move(next);
        coord = std::move(next_coord);
    }

    out.argmin.resize(N);
    for (std::size_t f = 0; f < N; ++f) {
        std::size_t g = 0;
        double d2 = 0.0;
        for (std::size_t a = 0; a < axes; ++a) {
            std::size_t s = grid.stride(a);
            int own = static_cast<int>((f / s) % static_cast<std::size_t>(grid.shape[a]));
            g += s * static_cast<std::size_t>(coord[a][f]);
            double dz = (own - coord[a][f]) * grid.spacing[a];
            d2 += grid.weights[a] * dz * dz;
        }
        out.argmin[f] = g;
        out.max_displacement_sq = std::max(out.max_displacement_sq, d2);
    }
    return out;
}

/**
 * Largest second difference of w^k - k|z|^2 over interior nodes and axes;
 * semi-concavity with constant k means this is <= 0 up to round-off.
 */
inline double semiconcavity_defect(const std::vector<double>& values, const NodeArray& grid,
                                   double k) {
    double worst = -std::numeric_limits<double>::infinity();
    const std::size_t N = grid.size();
    for (std::size_t a = 0; a < grid.shape.size(); ++a) {
        std::size_t s = grid.stride(a);
        double lift = 2.0 * k * grid.weights[a] * grid.spacing[a] * grid.spacing[a];
        for (std::size_t f = 0; f < N; ++f) {
            int i = static_cast<int>((f / s) % static_cast<std::size_t>(grid.shape[a]));
            if (i == 0 || i == grid.shape[a] - 1) continue;
            double d2 = values[f + s] - 2.0 * values[f] + values[f - s];
            worst = std::max(worst, d2 - lift);
        }
    }
    return worst;
}

}  // namespace hedgegame
