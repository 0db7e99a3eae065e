#pragma once

/**
 * @file surface_io.hpp
 * @brief Surface files.
 *
 * CSV: t_index,t,x0[,x1],value,policy_index, one row per node, layers in
 * time order, space flattened with axis 0 fastest.
 *
 * HJBSURF1 (little-endian):
 *   char[8] "HJBSURF1"
 *   u32 dim, i32 t_steps, f64 horizon, f64 x_min[dim], f64 x_max[dim],
 *   i32 x_steps[dim], u32 boundary_mode, u64 model_hash, u64 count,
 *   f64 values[count], i32 policy[count]
 *
 * SMOOTH1 (little-endian):
 *   char[8] "SMOOTH1\0", u32 dim
 *   f64 eps, k, delta, time_offset, B_t_lo, B_t_hi, B_lo[dim], B_hi[dim]
 *   followed by the same grid header and node array as HJBSURF1 (without
 *   the policy block); the grid horizon is that of the extended lattice.
 */

#include "hedgegame/hjb.hpp"
#include "hedgegame/mollifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace hedgegame {

static_assert(std::endian::native == std::endian::little, "surface files assume a little-endian host");

namespace detail {

class BinWriter {
public:
    explicit BinWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw ConfigError("cannot write " + path);
    }
    template <class T>
    void put(T v) {
        out_.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    template <class T>
    void put_array(const T* p, std::size_t n) {
        out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
    }
    void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }

private:
    std::ofstream out_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw ConfigError("cannot open " + path);
    }
    template <class T>
    T get() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof v);
        check();
        return v;
    }
    template <class T>
    void get_array(T* p, std::size_t n) {
        in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
        check();
    }
    void expect_magic(const char (&magic)[9], std::size_t len) {
        char buf[8] = {};
        in_.read(buf, 8);
        check();
        if (std::memcmp(buf, magic, len) != 0) throw ConfigError(path_ + ": bad magic, not a " + std::string(magic) + " file");
    }

private:
    void check() {
        if (!in_) throw ConfigError(path_ + ": truncated file");
    }
    std::ifstream in_;
    std::string path_;
};

inline void write_grid_header(BinWriter& w, const GridSpec& g, double horizon) {
    const int d = g.dim();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put<std::int32_t>(g.t_steps);
    w.put<double>(horizon);
    for (int j = 0; j < d; ++j) w.put<double>(g.x_min(j));
    for (int j = 0; j < d; ++j) w.put<double>(g.x_max(j));
    for (int j = 0; j < d; ++j) w.put<std::int32_t>(g.x_steps[static_cast<std::size_t>(j)]);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(g.boundary_mode));
}

inline Lattice read_grid_header(BinReader& r) {
    auto d = r.get<std::uint32_t>();
    if (d < 1 || d > static_cast<std::uint32_t>(kMaxDim)) throw ConfigError("surface file: bad dimension");
    GridSpec g;
    g.t_steps = r.get<std::int32_t>();
    double horizon = r.get<double>();
    g.x_min = Vec(d);
    g.x_max = Vec(d);
    for (std::uint32_t j = 0; j < d; ++j) g.x_min(j) = r.get<double>();
    for (std::uint32_t j = 0; j < d; ++j) g.x_max(j) = r.get<double>();
    for (std::uint32_t j = 0; j < d; ++j) g.x_steps.push_back(r.get<std::int32_t>());
    auto mode = r.get<std::uint32_t>();
    if (mode > 1) throw ConfigError("surface file: bad boundary mode");
    g.boundary_mode = static_cast<BoundaryMode>(mode);
    return Lattice(g, horizon);
}

inline std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_surface_csv(const ValueSurface& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    const Lattice& lat = s.lattice();
    const int d = lat.dim();
    out << "t_index,t";
    for (int j = 0; j < d; ++j) out << ",x" << j;
    out << ",value,policy_index\n";
    for (int n = 0; n < lat.layers(); ++n) {
        std::string t = detail::fmt17(lat.t_at(n));
        for (std::size_t f = 0; f < lat.space_size(); ++f) {
            Vec x = lat.point(f);
            out << n << ',' << t;
            for (int j = 0; j < d; ++j) out << ',' << detail::fmt17(x(j));
            out << ',' << detail::fmt17(s.at(n, f)) << ',' << s.policy_at(n, f) << '\n';
        }
    }
}

/// Reads a file written by write_surface_csv; the grid is recovered from the
/// distinct node coordinates, which must form a full uniform lattice.
inline ValueSurface read_surface_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
    const int cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    const int d = cols - 4;
    if (d < 1 || d > kMaxDim || line.rfind("t_index,t,", 0) != 0) throw ConfigError(path + ": not a surface CSV");
    struct Row {
        int n;
        double t;
        Vec x;
        double v;
        int p;
    };
    std::vector<Row> rows;
    int n_max = 0;
    double t_last = 0.0;
    std::vector<std::vector<double>> axis(static_cast<std::size_t>(d));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> f;
        std::size_t start = 0;
        while (true) {
            auto comma = line.find(',', start);
            try {
                f.push_back(std::stod(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
            } catch (const std::exception&) {
                throw ConfigError(path + ": bad number in row '" + line + "'");
            }
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (static_cast<int>(f.size()) != cols) throw ConfigError(path + ": ragged row '" + line + "'");
        Row r{static_cast<int>(f[0]), f[1], Vec(d), f[static_cast<std::size_t>(2 + d)],
              static_cast<int>(f[static_cast<std::size_t>(3 + d)])};
        for (int j = 0; j < d; ++j) {
            r.x(j) = f[static_cast<std::size_t>(2 + j)];
            if (r.n == 0) axis[static_cast<std::size_t>(j)].push_back(r.x(j));
        }
        if (r.n >= n_max) {
            n_max = r.n;
            t_last = r.t;
        }
        rows.push_back(std::move(r));
    }
    GridSpec g;
    g.t_steps = n_max;
    g.x_min = Vec(d);
    g.x_max = Vec(d);
    for (int j = 0; j < d; ++j) {
        auto& a = axis[static_cast<std::size_t>(j)];
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
        if (a.size() < 3) throw ConfigError(path + ": too few nodes on axis " + std::to_string(j));
        g.x_min(j) = a.front();
        g.x_max(j) = a.back();
        g.x_steps.push_back(static_cast<int>(a.size()) - 1);
    }
    if (n_max < 1) throw ConfigError(path + ": needs at least two time layers");
    Lattice lat(g, t_last);
    if (rows.size() != lat.size()) throw ConfigError(path + ": rows do not fill a full lattice");
    std::vector<double> values(lat.size());
    std::vector<int> pol(lat.size());
    for (const auto& r : rows) {
        std::size_t flat = 0, stride = 1;
        for (int j = 0; j < d; ++j) {
            long i = std::lround((r.x(j) - g.x_min(j)) / lat.h(j));
            if (i < 0 || i > g.x_steps[static_cast<std::size_t>(j)] ||
                std::abs(g.x_min(j) + static_cast<double>(i) * lat.h(j) - r.x(j)) > 1e-9 * (1.0 + std::abs(r.x(j))))
                throw ConfigError(path + ": node coordinates are not uniform");
            flat += static_cast<std::size_t>(i) * stride;
            stride *= static_cast<std::size_t>(lat.nodes(j));
        }
        std::size_t k = static_cast<std::size_t>(r.n) * lat.space_size() + flat;
        values[k] = r.v;
        pol[k] = r.p;
    }
    return ValueSurface(std::move(lat), std::move(values), std::move(pol), 0);
}

inline void write_surface_bin(const ValueSurface& s, const std::string& path) {
    detail::BinWriter w(path);
    w.raw("HJBSURF1", 8);
    detail::write_grid_header(w, s.grid(), s.lattice().horizon());
    w.put<std::uint64_t>(s.model_hash());
    w.put<std::uint64_t>(s.values().size());
    w.put_array(s.values().data(), s.values().size());
    std::vector<std::int32_t> pol(s.policy().begin(), s.policy().end());
    w.put_array(pol.data(), pol.size());
}

inline ValueSurface read_surface_bin(const std::string& path) {
    detail::BinReader r(path);
    r.expect_magic("HJBSURF1", 8);
    Lattice lat = detail::read_grid_header(r);
    auto hash = r.get<std::uint64_t>();
    auto count = r.get<std::uint64_t>();
    if (count != lat.size()) throw ConfigError(path + ": node count does not match the grid header");
    std::vector<double> values(count);
    r.get_array(values.data(), count);
    std::vector<std::int32_t> pol(count);
    r.get_array(pol.data(), count);
    return ValueSurface(std::move(lat), std::move(values), std::vector<int>(pol.begin(), pol.end()), hash);
}

inline void write_smooth_bin(const SmoothSurface& s, const std::string& path) {
    detail::BinWriter w(path);
    const int d = s.lattice().dim();
    w.raw("SMOOTH1\0", 8);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put<double>(s.eps);
    w.put<double>(s.k);
    w.put<double>(s.delta());
    w.put<double>(s.time_offset());
    w.put<double>(s.B_t_lo);
    w.put<double>(s.B_t_hi);
    for (int j = 0; j < d; ++j) w.put<double>(s.B_lo.size() == d ? s.B_lo(j) : 0.0);
    for (int j = 0; j < d; ++j) w.put<double>(s.B_hi.size() == d ? s.B_hi(j) : 0.0);
    detail::write_grid_header(w, s.lattice().spec(), s.lattice().horizon());
    w.put<std::uint64_t>(s.node_values().size());
    w.put_array(s.node_values().data(), s.node_values().size());
}

inline SmoothSurface read_smooth_bin(const std::string& path) {
    detail::BinReader r(path);
    r.expect_magic("SMOOTH1\0", 8);
    auto d = static_cast<int>(r.get<std::uint32_t>());
    if (d < 1 || d > kMaxDim) throw ConfigError(path + ": bad dimension");
    double eps = r.get<double>(), k = r.get<double>(), delta = r.get<double>();
    double offset = r.get<double>(), t_lo = r.get<double>(), t_hi = r.get<double>();
    Vec lo(d), hi(d);
    for (int j = 0; j < d; ++j) lo(j) = r.get<double>();
    for (int j = 0; j < d; ++j) hi(j) = r.get<double>();
    Lattice lat = detail::read_grid_header(r);
    if (lat.dim() != d) throw ConfigError(path + ": inconsistent dimension");
    auto count = r.get<std::uint64_t>();
    if (count != lat.size()) throw ConfigError(path + ": node count does not match the grid header");
    std::vector<double> nodes(count);
    r.get_array(nodes.data(), count);
    SmoothSurface s(std::move(lat), std::move(nodes), delta, offset);
    s.eps = eps;
    s.k = k;
    s.B_t_lo = t_lo;
    s.B_t_hi = t_hi;
    s.B_lo = lo;
    s.B_hi = hi;
    return s;
}

}  // namespace hedgegame
