#pragma once

/**
 * @file hjb.hpp
 * @brief Explicit monotone finite-difference solver for
 *
 *   L(t, x, v, dv/dt, Dv, D^2 v) = 0 on [0,T) x R^d,   v(T, .) = g,
 *
 * with L = min_a L^a, on a truncated rectangular grid.
 *
 * Stepping backward from T, each node solves
 *   v^n = v^{n+1} + dt * max_{a,b} F^a((t_n, x) + b, v^n, p, M)
 * where p and M are difference quotients of layer n+1 and b ranges over the
 * shake lattice (the origin only for the plain equation). The y-dependence
 * is resolved by a damped fixed-point iteration started from v^{n+1}.
 *
 * First differences along axis j are centered when the local effective
 * drift c_j = dF/dp_j satisfies |c_j| h_j <= (sigma sigma^T)_jj, which keeps
 * the stencil monotone, and upwinded by the sign of c_j otherwise.
 */

#include "hedgegame/grid.hpp"
#include "hedgegame/model.hpp"
#include "hedgegame/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

namespace hedgegame {

struct SolveOptions {
    double fixed_point_tol = 1e-10;
    int max_rounds = 50;
    double damping = 1.0;  ///< weight of the new iterate in the fixed-point update
    std::vector<Shake> shakes;  ///< empty = origin only
    double terminal_shift = 0.0;  ///< solve with terminal data g + shift
    bool enforce_cfl = true;
};

/// Value and policy on a space-time lattice. Immutable once built.
class ValueSurface {
public:
    ValueSurface() = default;
    ValueSurface(Lattice lattice, std::vector<double> values, std::vector<int> policy,
                 std::uint64_t model_hash)
        : lattice_(std::move(lattice)),
          values_(std::move(values)),
          policy_(std::move(policy)),
          model_hash_(model_hash) {}

    const Lattice& lattice() const { return lattice_; }
    const GridSpec& grid() const { return lattice_.spec(); }
    const std::vector<double>& values() const { return values_; }
    const std::vector<int>& policy() const { return policy_; }
    std::uint64_t model_hash() const { return model_hash_; }

    double at(int layer, std::size_t flat) const {
        return values_[static_cast<std::size_t>(layer) * lattice_.space_size() + flat];
    }
    int policy_at(int layer, std::size_t flat) const {
        return policy_[static_cast<std::size_t>(layer) * lattice_.space_size() + flat];
    }

    // Diagnostics recorded by the solver.
    double cfl = 0.0;           ///< max local sum dt * (stencil weights)
    double cfl_bound_K = 0.0;   ///< dt * sum_j (K^2/h_j^2 + K/h_j)
    double value_bound = 0.0;   ///< max|g| e^{KT} + KT
    int max_rounds_used = 0;

private:
    Lattice lattice_;
    std::vector<double> values_;
    std::vector<int> policy_;
    std::uint64_t model_hash_ = 0;
};

namespace detail {

struct Stencil {
    Vec forward, backward, second;
    double cross = 0.0;  ///< d = 2 mixed derivative
};

inline Stencil stencil_at(const Lattice& lat, const double* layer, std::size_t flat) {
    int d = lat.dim();
    Stencil s{Vec(d), Vec(d), Vec(d), 0.0};
    double v = layer[flat];
    for (int j = 0; j < d; ++j) {
        double h = lat.h(j);
        double up = layer[flat + lat.stride(j)];
        double dn = layer[flat - lat.stride(j)];
        s.forward(j) = (up - v) / h;
        s.backward(j) = (v - dn) / h;
        s.second(j) = (up - 2.0 * v + dn) / (h * h);
    }
    if (d == 2) {
        std::size_t s0 = lat.stride(0), s1 = lat.stride(1);
        s.cross = (layer[flat + s0 + s1] - layer[flat + s0 - s1] - layer[flat - s0 + s1] +
                   layer[flat - s0 - s1]) /
                  (4.0 * lat.h(0) * lat.h(1));
    }
    return s;
}

inline Mat hessian_of(const Stencil& s, int d) {
    Mat M = Mat::Zero(d, d);
    for (int j = 0; j < d; ++j) M(j, j) = s.second(j);
    if (d == 2) M(0, 1) = M(1, 0) = s.cross;
    return M;
}

/// One (a, b) branch at a node with its difference choice frozen:
/// F(y) = base - mu_Y_hat(t, x, y, z, a) with z = sigma^T p.
struct Branch {
    double t;
    Vec x;
    int a_index;
    Vec z;
    double base;
};

inline void apply_boundary(const Lattice& lat, const ModelSpec& model, int layer_index,
                           double terminal_shift, double* layer, int* pol) {
    int d = lat.dim();
    double t = lat.t_at(layer_index);
    auto fix_axis = [&](int axis, bool all_rows) {
        std::size_t stride = lat.stride(axis);
        int n = lat.nodes(axis);
        for (std::size_t f = 0; f < lat.space_size(); ++f) {
            auto idx = lat.unflatten(f);
            if (idx[axis] != 0 && idx[axis] != n - 1) continue;
            if (!all_rows) {
                bool other_boundary = false;
                for (int j = 0; j < d; ++j)
                    if (j != axis && (idx[j] == 0 || idx[j] == lat.nodes(j) - 1))
                        other_boundary = true;
                if (other_boundary) continue;
            }
            bool low = idx[axis] == 0;
            std::size_t in1 = low ? f + stride : f - stride;
            std::size_t in2 = low ? f + 2 * stride : f - 2 * stride;
            if (lat.spec().boundary_mode == BoundaryMode::extrapolate_linear) {
                layer[f] = 2.0 * layer[in1] - layer[in2];
            } else {
                Vec x = lat.point(f);
                double r = model.riskless_rate ? model.riskless_rate(t, x) : 0.0;
                layer[f] = (model.payoff_g(x) + terminal_shift) *
                           std::exp(-r * (model.horizon_T - t));
            }
            pol[f] = pol[in1];
        }
    };
    // Earlier axes skip rows that lie on a later axis' edge; the last axis
    // then fills every remaining edge node, corners included.
    for (int axis = 0; axis < d; ++axis) fix_axis(axis, axis + 1 == d);
}

}  // namespace detail

/**
 * Backward sweep. Throws NumericalError on a CFL violation (local stencil
 * weight sum above 1) or when a node's fixed-point iteration fails to reach
 * the tolerance within max_rounds.
 */
inline ValueSurface solve(const ModelSpec& model, const GridSpec& grid,
                          const SolveOptions& options = {}) {
    if (model.A_points.empty()) throw ModelError("A_points must be nonempty");
    Lattice lat(grid, model.horizon_T);
    if (lat.dim() != model.dim) throw ConfigError("grid dimension differs from model.dim");
    const int d = lat.dim();
    const std::size_t S = lat.space_size();
    const double dt = lat.dt();
    const int N = lat.t_steps();
    std::vector<Shake> shakes = options.shakes.empty()
                                    ? std::vector<Shake>{{0.0, Vec::Zero(d)}}
                                    : options.shakes;

    std::vector<double> values(lat.size());
    std::vector<int> policy(lat.size(), 0);

    double gmax = 0.0;
    for (std::size_t f = 0; f < S; ++f) {
        double g = model.payoff_g(lat.point(f));
        values[static_cast<std::size_t>(N) * S + f] = g + options.terminal_shift;
        gmax = std::max(gmax, std::abs(g));
    }

    double cfl_K = 0.0;
    for (int j = 0; j < d; ++j) {
        double K = model.lipschitz_K, h = lat.h(j);
        cfl_K += dt * (K * K / (h * h) + K / h);
    }

    std::vector<std::size_t> interior;
    for (std::size_t f = 0; f < S; ++f)
        if (!lat.is_boundary(f)) interior.push_back(f);

    std::vector<double> node_cfl(S, 0.0);
    std::vector<int> node_rounds(S, 0);
    double max_cfl = 0.0;
    int max_rounds_used = 0;

    for (int n = N - 1; n >= 0; --n) {
        const double* next = values.data() + static_cast<std::size_t>(n + 1) * S;
        double* cur = values.data() + static_cast<std::size_t>(n) * S;
        int* pol = policy.data() + static_cast<std::size_t>(n) * S;
        const double t = lat.t_at(n);

        parallel_for(interior.size(), [&](std::size_t k) {
            std::size_t f = interior[k];
            Vec x = lat.point(f);
            detail::Stencil st = detail::stencil_at(lat, next, f);
            Vec centered = 0.5 * (st.forward + st.backward);
            Mat M = detail::hessian_of(st, d);
            double y_prev = next[f];

            thread_local std::vector<detail::Branch> branches;
            branches.clear();
            double local_cfl = 0.0;
            for (std::size_t ia = 0; ia < model.A_points.size(); ++ia) {
                const Vec& a = model.A_points[ia];
                for (const auto& b : shakes) {
                    double ts = clamp_time(t + b.dt, model);
                    Vec xs = x + b.dx;
                    Mat sig = model.sigma_X(ts, xs, a);
                    Vec mu = model.mu_X(ts, xs, a);
                    Mat diff = sig * sig.transpose();
                    Vec p = centered;
                    double weight = 0.0;
                    for (int j = 0; j < d; ++j) {
                        // Effective drift dF/dp_j by a centered difference in p.
                        double hp = 1e-6 * (1.0 + std::abs(centered(j)));
                        Vec pu = centered, pd = centered;
                        pu(j) += hp;
                        pd(j) -= hp;
                        double drift =
                            mu(j) - (mu_Y_hat(ts, xs, y_prev, Vec(sig.transpose() * pu), a, model) -
                                     mu_Y_hat(ts, xs, y_prev, Vec(sig.transpose() * pd), a, model)) /
                                        (2.0 * hp);
                        double h = lat.h(j);
                        weight += diff(j, j) / (h * h);
                        if (std::abs(drift) * h > diff(j, j)) {
                            p(j) = drift > 0.0 ? st.forward(j) : st.backward(j);
                            weight += std::abs(drift) / h;
                        }
                    }
                    local_cfl = std::max(local_cfl, dt * weight);
                    double base = mu.dot(p) + 0.5 * diff.cwiseProduct(M).sum();
                    branches.push_back({ts, xs, static_cast<int>(ia), Vec(sig.transpose() * p), base});
                }
            }
            node_cfl[f] = local_cfl;

            double y = y_prev;
            int best_a = 0;
            int rounds = 0;
            double gap = std::numeric_limits<double>::infinity();
            while (rounds < options.max_rounds) {
                ++rounds;
                double best = -std::numeric_limits<double>::infinity();
                for (const auto& br : branches) {
                    double F = br.base - mu_Y_hat(br.t, br.x, y, br.z,
                                                  model.A_points[static_cast<std::size_t>(br.a_index)],
                                                  model);
                    if (F > best) {
                        best = F;
                        best_a = br.a_index;
                    }
                }
                double target = y_prev + dt * best;
                double y_new = (1.0 - options.damping) * y + options.damping * target;
                gap = std::abs(target - y);
                y = y_new;
                if (gap <= options.fixed_point_tol * std::max(1.0, std::abs(y))) break;
            }
            if (!(gap <= options.fixed_point_tol * std::max(1.0, std::abs(y)))) {
                std::ostringstream os;
                os << "fixed-point iteration did not converge at layer " << n << " node "
                   << describe_point(t, x, model.A_points.front()) << ", residual " << gap;
                throw NumericalError(os.str());
            }
            node_rounds[f] = rounds;
            cur[f] = y;
            pol[f] = best_a;
        });

        for (std::size_t f : interior) {
            max_cfl = std::max(max_cfl, node_cfl[f]);
            max_rounds_used = std::max(max_rounds_used, node_rounds[f]);
        }
        if (options.enforce_cfl && max_cfl > 1.0 + 1e-12) {
            std::ostringstream os;
            os << "CFL condition violated: local stencil weight " << max_cfl
               << " > 1 (reduce dt or widen dx)";
            throw NumericalError(os.str());
        }
        detail::apply_boundary(lat, model, n, options.terminal_shift, cur, pol);
    }
    // The terminal layer carries the policy of the last interior layer.
    std::copy(policy.begin() + static_cast<std::ptrdiff_t>((N - 1) * S),
              policy.begin() + static_cast<std::ptrdiff_t>(N * S),
              policy.begin() + static_cast<std::ptrdiff_t>(N * S));

    ValueSurface out(std::move(lat), std::move(values), std::move(policy), model.digest);
    out.cfl = max_cfl;
    out.cfl_bound_K = cfl_K;
    double K = model.lipschitz_K, T = model.horizon_T;
    out.value_bound = gmax * std::exp(K * T) + K * T;
    out.max_rounds_used = max_rounds_used;
    return out;
}

/// Per-node minimizing A-index (the worst-case adversary) as used in the
/// final fixed-point round.
struct PolicyView {
    const ValueSurface* surface = nullptr;

    int at(int layer, std::size_t flat) const { return surface->policy_at(layer, flat); }

    /// Policy at the node nearest to x on the layer whose interval contains t.
    int lookup(double t, const Vec& x) const {
        const Lattice& lat = surface->lattice();
        int layer = static_cast<int>(std::floor(std::clamp(t, 0.0, lat.horizon()) / lat.dt()));
        layer = std::clamp(layer, 0, lat.t_steps());
        std::array<int, kMaxDim> idx{0, 0};
        for (int j = 0; j < lat.dim(); ++j) {
            double s = (x(j) - lat.spec().x_min(j)) / lat.h(j);
            idx[j] = std::clamp(static_cast<int>(std::lround(s)), 0, lat.nodes(j) - 1);
        }
        return surface->policy_at(layer, lat.flatten(idx));
    }
};

inline PolicyView policy(const ValueSurface& surface) { return {&surface}; }

struct ResidualSummary {
    double max_abs = 0.0;
    double min = 0.0;
    std::size_t count = 0;
};

/// L evaluated with centered differences of the stored layer values; NaN at
/// boundary nodes and on the terminal layer.
struct ResidualGrid {
    Lattice lattice;
    std::vector<double> values;

    /// Summary over interior nodes with t <= t_max and x inside [lo, hi].
    ResidualSummary summarize(double t_max, const Vec& lo, const Vec& hi) const {
        ResidualSummary s{0.0, std::numeric_limits<double>::infinity(), 0};
        for (int n = 0; n < lattice.t_steps(); ++n) {
            if (lattice.t_at(n) > t_max + 1e-12) continue;
            for (std::size_t f = 0; f < lattice.space_size(); ++f) {
                double r = values[static_cast<std::size_t>(n) * lattice.space_size() + f];
                if (std::isnan(r)) continue;
                Vec x = lattice.point(f);
                bool inside = true;
                for (int j = 0; j < lattice.dim(); ++j)
                    if (x(j) < lo(j) - 1e-12 || x(j) > hi(j) + 1e-12) inside = false;
                if (!inside) continue;
                s.max_abs = std::max(s.max_abs, std::abs(r));
                s.min = std::min(s.min, r);
                ++s.count;
            }
        }
        if (s.count == 0) s.min = 0.0;
        return s;
    }

    ResidualSummary summarize() const {
        return summarize(lattice.horizon(), lattice.spec().x_min, lattice.spec().x_max);
    }
};

inline ResidualGrid residual(const ValueSurface& surface, const ModelSpec& model) {
    const Lattice& lat = surface.lattice();
    const std::size_t S = lat.space_size();
    ResidualGrid out{lat, std::vector<double>(lat.size(), std::numeric_limits<double>::quiet_NaN())};
    for (int n = 0; n < lat.t_steps(); ++n) {
        const double* cur = surface.values().data() + static_cast<std::size_t>(n) * S;
        const double* next = cur + S;
        for (std::size_t f = 0; f < S; ++f) {
            if (lat.is_boundary(f)) continue;
            detail::Stencil st = detail::stencil_at(lat, cur, f);
            DerivativePack pack{cur[f], (next[f] - cur[f]) / lat.dt(),
                                Vec(0.5 * (st.forward + st.backward)),
                                detail::hessian_of(st, lat.dim())};
            out.values[static_cast<std::size_t>(n) * S + f] =
                operator_L(lat.t_at(n), lat.point(f), pack, model).value;
        }
    }
    return out;
}

/**
 * Interpolated (value, q, p, M) at (t, x). Values are multilinear in (t, x)
 * and exact at nodes; p and M are interpolated from nodal centered
 * differences (one-sided at the edges), q is the layer difference quotient.
 */
inline DerivativePack eval(const ValueSurface& surface, double t, const Vec& x) {
    const Lattice& lat = surface.lattice();
    if (!lat.contains(t, x)) {
        std::ostringstream os;
        os << "query outside surface domain at t=" << t;
        throw NumericalError(os.str());
    }
    const int d = lat.dim();
    const std::size_t S = lat.space_size();
    CellPos tc = locate(t, 0.0, lat.dt(), lat.t_steps());
    std::array<CellPos, kMaxDim> xc{};
    for (int j = 0; j < d; ++j)
        xc[j] = locate(x(j), lat.spec().x_min(j), lat.h(j), lat.spec().x_steps[j]);

    auto nodal = [&](const double* layer, std::size_t f, Vec& p, Mat& M) {
        auto idx = lat.unflatten(f);
        p = Vec::Zero(d);
        M = Mat::Zero(d, d);
        for (int j = 0; j < d; ++j) {
            std::size_t s = lat.stride(j);
            double h = lat.h(j);
            int n = lat.nodes(j);
            // Interior stencil centre for axis j (shifted inward at edges).
            std::size_t c = f;
            if (idx[j] == 0) c = f + s;
            if (idx[j] == n - 1) c = f - s;
            if (idx[j] == 0)
                p(j) = (layer[f + s] - layer[f]) / h;
            else if (idx[j] == n - 1)
                p(j) = (layer[f] - layer[f - s]) / h;
            else
                p(j) = (layer[f + s] - layer[f - s]) / (2.0 * h);
            M(j, j) = (layer[c + s] - 2.0 * layer[c] + layer[c - s]) / (h * h);
        }
        if (d == 2) {
            auto clampi = [](int i, int n) { return std::clamp(i, 1, n - 2); };
            std::array<int, kMaxDim> cidx{clampi(idx[0], lat.nodes(0)), clampi(idx[1], lat.nodes(1))};
            std::size_t c = lat.flatten(cidx);
            std::size_t s0 = lat.stride(0), s1 = lat.stride(1);
            double cross = (layer[c + s0 + s1] - layer[c + s0 - s1] - layer[c - s0 + s1] +
                            layer[c - s0 - s1]) /
                           (4.0 * lat.h(0) * lat.h(1));
            M(0, 1) = M(1, 0) = cross;
        }
    };

    DerivativePack out = DerivativePack::zero(d);
    double v_lo = 0.0, v_hi = 0.0;
    int corners = 1 << d;
    for (int layer_off = 0; layer_off < 2; ++layer_off) {
        int layer = std::min(tc.cell + layer_off, lat.t_steps());
        double wt = layer_off == 0 ? 1.0 - tc.frac : tc.frac;
        const double* vals = surface.values().data() + static_cast<std::size_t>(layer) * S;
        double v_layer = 0.0;
        for (int c = 0; c < corners; ++c) {
            std::array<int, kMaxDim> idx{0, 0};
            double w = 1.0;
            for (int j = 0; j < d; ++j) {
                int bit = (c >> j) & 1;
                idx[j] = xc[j].cell + bit;
                w *= bit ? xc[j].frac : 1.0 - xc[j].frac;
            }
            if (w == 0.0) continue;
            std::size_t f = lat.flatten(idx);
            Vec p;
            Mat M;
            nodal(vals, f, p, M);
            v_layer += w * vals[f];
            out.p += wt * w * p;
            out.M += wt * w * M;
        }
        out.y += wt * v_layer;
        (layer_off == 0 ? v_lo : v_hi) = v_layer;
    }
    out.q = (v_hi - v_lo) / lat.dt();
    return out;
}

/// Value of the surface at (t, x); exact at nodes.
inline double value_at(const ValueSurface& surface, double t, const Vec& x) {
    return eval(surface, t, x).y;
}

}  // namespace hedgegame
