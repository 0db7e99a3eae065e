#pragma once

#include "hedgegame/regularize.hpp"

#include <cstdlib>
#include <limits>
#include <vector>

namespace brute {

using namespace hedgegame;

/// O(N^2) reference with the same summation order as the fast path.
inline InfConvolution inf_convolution(const std::vector<double>& w, const NodeArray& g, double k) {
    const std::size_t N = g.size(), axes = g.shape.size();
    std::vector<std::vector<double>> tabs;
    for (std::size_t a = 0; a < axes; ++a)
        tabs.push_back(quadratic_terms(g.shape[a], g.spacing[a], k, g.weights[a]));
    InfConvolution out;
    out.values.assign(N, 0.0);
    out.argmin.assign(N, 0);
    for (std::size_t z = 0; z < N; ++z) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t zp = 0; zp < N; ++zp) {
            double v = w[zp];
            for (std::size_t a = 0; a < axes; ++a) {
                std::size_t s = g.stride(a);
                long i = static_cast<long>((z / s) % g.shape[a]);
                long ip = static_cast<long>((zp / s) % g.shape[a]);
                v = v + tabs[a][static_cast<std::size_t>(std::labs(i - ip))];
            }
            if (v < best) {
                best = v;
                arg = zp;
            }
        }
        out.values[z] = best;
        out.argmin[z] = arg;
    }
    return out;
}

}  // namespace brute
