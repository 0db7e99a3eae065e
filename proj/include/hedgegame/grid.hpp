#pragma once

#include "hedgegame/types.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace hedgegame {

enum class BoundaryMode { extrapolate_linear, clamp_payoff };

inline std::string to_string(BoundaryMode m) {
    return m == BoundaryMode::clamp_payoff ? "clamp_payoff" : "extrapolate_linear";
}

inline BoundaryMode boundary_mode_from(const std::string& s) {
    if (s == "extrapolate_linear") return BoundaryMode::extrapolate_linear;
    if (s == "clamp_payoff") return BoundaryMode::clamp_payoff;
    throw ConfigError("unknown boundary_mode '" + s + "'");
}

/// Rectangular truncation of [0,T] x R^d: t_steps intervals in time and
/// x_steps[j] intervals along spatial axis j.
struct GridSpec {
    int t_steps = 100;
    Vec x_min;
    Vec x_max;
    std::vector<int> x_steps;
    BoundaryMode boundary_mode = BoundaryMode::extrapolate_linear;

    int dim() const { return static_cast<int>(x_min.size()); }

    void validate() const {
        if (t_steps < 1) throw ConfigError("grid.t_steps must be positive");
        if (x_min.size() < 1 || x_min.size() > kMaxDim)
            throw ConfigError("grid dimension must be 1 or 2");
        if (x_max.size() != x_min.size() || static_cast<int>(x_steps.size()) != x_min.size())
            throw ConfigError("grid.x_min, x_max and x_steps must have equal length");
        for (int j = 0; j < dim(); ++j) {
            if (!(x_min(j) < x_max(j))) throw ConfigError("grid requires x_min < x_max");
            if (x_steps[j] < 2) throw ConfigError("grid.x_steps must be at least 2");
        }
    }
};

/**
 * Node geometry of a GridSpec over [0, T]. Spatial nodes are flattened with
 * axis 0 fastest; a space-time node is layer * space_size() + flat.
 */
class Lattice {
public:
    Lattice() = default;
    Lattice(GridSpec spec, double horizon_T) : spec_(std::move(spec)), T_(horizon_T) {
        spec_.validate();
        d_ = spec_.dim();
        space_size_ = 1;
        for (int j = 0; j < d_; ++j) {
            n_[j] = spec_.x_steps[j] + 1;
            h_[j] = (spec_.x_max(j) - spec_.x_min(j)) / spec_.x_steps[j];
            stride_[j] = space_size_;
            space_size_ *= n_[j];
        }
        dt_ = T_ / spec_.t_steps;
    }

    const GridSpec& spec() const { return spec_; }
    int dim() const { return d_; }
    double horizon() const { return T_; }
    int t_steps() const { return spec_.t_steps; }
    int layers() const { return spec_.t_steps + 1; }
    double dt() const { return dt_; }
    double h(int axis) const { return h_[axis]; }
    int nodes(int axis) const { return n_[axis]; }
    std::size_t stride(int axis) const { return stride_[axis]; }
    std::size_t space_size() const { return space_size_; }
    std::size_t size() const { return space_size_ * static_cast<std::size_t>(layers()); }

    double t_at(int layer) const {
        return layer == spec_.t_steps ? T_ : layer * dt_;
    }
    double x_at(int axis, int i) const {
        return i == n_[axis] - 1 ? spec_.x_max(axis) : spec_.x_min(axis) + i * h_[axis];
    }

    std::array<int, kMaxDim> unflatten(std::size_t flat) const {
        std::array<int, kMaxDim> idx{0, 0};
        for (int j = 0; j < d_; ++j) {
            idx[j] = static_cast<int>(flat % n_[j]);
            flat /= n_[j];
        }
        return idx;
    }

    std::size_t flatten(const std::array<int, kMaxDim>& idx) const {
        std::size_t f = 0;
        for (int j = 0; j < d_; ++j) f += stride_[j] * static_cast<std::size_t>(idx[j]);
        return f;
    }

    Vec point(std::size_t flat) const {
        auto idx = unflatten(flat);
        Vec x(d_);
        for (int j = 0; j < d_; ++j) x(j) = x_at(j, idx[j]);
        return x;
    }

    bool is_boundary(std::size_t flat) const {
        auto idx = unflatten(flat);
        for (int j = 0; j < d_; ++j)
            if (idx[j] == 0 || idx[j] == n_[j] - 1) return true;
        return false;
    }

    bool contains(double t, const Vec& x, double slack = 1e-12) const {
        if (t < -slack || t > T_ + slack) return false;
        for (int j = 0; j < d_; ++j)
            if (x(j) < spec_.x_min(j) - slack || x(j) > spec_.x_max(j) + slack) return false;
        return true;
    }

private:
    GridSpec spec_;
    double T_ = 1.0;
    int d_ = 1;
    std::array<int, kMaxDim> n_{1, 1};
    std::array<double, kMaxDim> h_{1.0, 1.0};
    std::array<std::size_t, kMaxDim> stride_{1, 1};
    std::size_t space_size_ = 1;
    double dt_ = 1.0;
};

/// Cell index and fractional offset of coordinate u on a uniform axis.
struct CellPos {
    int cell;
    double frac;
};

inline CellPos locate(double u, double lo, double h, int intervals) {
    double s = (u - lo) / h;
    double r = std::round(s);
    if (std::abs(s - r) < 1e-9) s = r;
    int c = static_cast<int>(std::floor(s));
    if (c < 0) c = 0;
    if (c > intervals - 1) c = intervals - 1;
    double f = s - c;
    return {c, f};
}

}  // namespace hedgegame
