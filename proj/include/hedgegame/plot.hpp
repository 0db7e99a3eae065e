#pragma once

/**
 * @file plot.hpp
 * @brief gnuplot-ready TSV files: value slices, policy maps, shortfall
 * histograms and eps-curves. Numbers are written with %.17g so identical
 * inputs give identical bytes.
 */

#include "hedgegame/game.hpp"
#include "hedgegame/hjb.hpp"
#include "hedgegame/regularize.hpp"
#include "hedgegame/surface_io.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace hedgegame {

namespace detail {

inline std::ofstream open_tsv(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    return out;
}

}  // namespace detail

/// v(t, .) at the nearest layer: columns x0 [x1] value. In 2-d a blank line
/// separates rows of constant x1 (gnuplot splot layout).
inline void write_value_slice(const ValueSurface& s, double t, const std::string& path) {
    auto out = detail::open_tsv(path);
    const Lattice& lat = s.lattice();
    int n = std::clamp(static_cast<int>(std::lround(t / lat.dt())), 0, lat.layers() - 1);
    out << "# t=" << detail::fmt17(lat.t_at(n)) << "\n";
    out << (lat.dim() == 1 ? "# x\tvalue\n" : "# x0\tx1\tvalue\n");
    for (std::size_t f = 0; f < lat.space_size(); ++f) {
        Vec x = lat.point(f);
        if (lat.dim() == 2 && f > 0 && f % static_cast<std::size_t>(lat.nodes(0)) == 0) out << "\n";
        for (int j = 0; j < lat.dim(); ++j) out << detail::fmt17(x(j)) << '\t';
        out << detail::fmt17(s.at(n, f)) << '\n';
    }
}

/// Minimizing A-index over (t, x) for 1-d surfaces, every `stride`-th layer.
inline void write_policy_map(const ValueSurface& s, const std::string& path, int stride = 1) {
    auto out = detail::open_tsv(path);
    const Lattice& lat = s.lattice();
    if (lat.dim() != 1) throw ConfigError("policy maps are written for 1-d surfaces only");
    out << "# t\tx\tpolicy_index\n";
    stride = std::max(1, stride);
    for (int n = 0; n < lat.layers(); n += stride) {
        if (n > 0) out << "\n";
        std::string t = detail::fmt17(lat.t_at(n));
        for (std::size_t f = 0; f < lat.space_size(); ++f)
            out << t << '\t' << detail::fmt17(lat.point(f)(0)) << '\t' << s.policy_at(n, f) << '\n';
    }
}

/// Histogram of Y_T - g(X_T); columns: bin_lo bin_hi count.
inline void write_histogram(const Histogram& h, const std::string& path) {
    auto out = detail::open_tsv(path);
    out << "# bin_lo\tbin_hi\tcount\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        out << detail::fmt17(h.lo + static_cast<double>(i) * h.bin) << '\t'
            << detail::fmt17(h.lo + static_cast<double>(i + 1) * h.bin) << '\t' << h.counts[i] << '\n';
}

/// Columns: eps max_B(w_eps - w_0).
inline void write_eps_curve(const std::vector<EpsCurvePoint>& curve, const std::string& path) {
    auto out = detail::open_tsv(path);
    out << "# eps\tmax_B(w_eps-w_0)\n";
    for (const auto& p : curve) out << detail::fmt17(p.eps) << '\t' << detail::fmt17(p.c_B) << '\n';
}

}  // namespace hedgegame
