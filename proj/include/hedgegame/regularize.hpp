#pragma once

/**
 * @file regularize.hpp
 * @brief Smooth supersolutions from the shaken equation.
 *
 * Pipeline: solve the equation with the shaken operator H_eps and terminal
 * data g + 2 eps, take the quadratic inf-convolution of the space-time node
 * values, mollify with the one-sided kernel, and check the operator at the
 * nodes of a check grid using the analytic derivatives.
 *
 * The kernel only looks backward in time, so the smooth surface at t = 0
 * needs data at negative times. All solves therefore run on [-tau, T] with
 * the coefficients frozen at their t = 0 values on [-tau, 0].
 */

#include "hedgegame/hjb.hpp"
#include "hedgegame/inf_convolution.hpp"
#include "hedgegame/mollifier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

namespace hedgegame {

/// Compact box [t_lo, t_hi] x [x_lo, x_hi] in model time.
struct TimeBox {
    double t_lo = 0.0;
    double t_hi = 1.0;
    Vec x_lo;
    Vec x_hi;

    bool contains(double t, const Vec& x, double slack = 1e-12) const {
        if (t < t_lo - slack || t > t_hi + slack) return false;
        for (Eigen::Index j = 0; j < x.size(); ++j)
            if (x(j) < x_lo(j) - slack || x(j) > x_hi(j) + slack) return false;
        return true;
    }
};

/**
 * Model whose clock starts tau earlier: model time s corresponds to
 * original time s - tau, clamped to [0, T]. Horizon becomes T + tau.
 */
inline ModelSpec extend_backward(const ModelSpec& m, double tau) {
    if (!(tau >= 0.0)) throw ConfigError("backward extension requires tau >= 0");
    if (tau == 0.0) return m;
    const double T = m.horizon_T;
    auto ct = [tau, T](double s) { return std::clamp(s - tau, 0.0, T); };
    ModelSpec e = m;
    e.mu_X = [f = m.mu_X, ct](double s, const Vec& x, const Vec& a) { return f(ct(s), x, a); };
    e.sigma_X = [f = m.sigma_X, ct](double s, const Vec& x, const Vec& a) { return f(ct(s), x, a); };
    e.mu_Y = [f = m.mu_Y, ct](double s, const Vec& x, double y, const Vec& u, const Vec& a) {
        return f(ct(s), x, y, u, a);
    };
    e.sigma_Y = [f = m.sigma_Y, ct](double s, const Vec& x, double y, const Vec& u, const Vec& a) {
        return f(ct(s), x, y, u, a);
    };
    e.u_hat = [f = m.u_hat, ct](double s, const Vec& x, double y, const Vec& z, const Vec& a) {
        return f(ct(s), x, y, z, a);
    };
    if (m.riskless_rate)
        e.riskless_rate = [f = m.riskless_rate, ct](double s, const Vec& x) { return f(ct(s), x); };
    if (m.finance) {
        FinanceSpec fs = *m.finance;
        fs.mu = e.mu_X;
        fs.sigma = e.sigma_X;
        fs.r_lend = [f = m.finance->r_lend, ct](double s, const Vec& x, const Vec& a) {
            return f(ct(s), x, a);
        };
        fs.r_borrow = [f = m.finance->r_borrow, ct](double s, const Vec& x, const Vec& a) {
            return f(ct(s), x, a);
        };
        e.finance = fs;
    }
    e.horizon_T = T + tau;
    return e;
}

struct ShakenSurface {
    double eps = 0.0;
    std::vector<Shake> shakes;
    ValueSurface surface;  ///< solution with H_eps and terminal g + 2 eps
    /// max |w_eps - g - 2 eps| / sqrt(T - t) over interior nodes of the
    /// layers with T - t <= T / 4.
    double c_reg = 0.0;
    /// (eps / c_reg)^2, capped at T / 4: w_eps >= g + eps for T - t <= c_eps.
    double c_eps = 0.0;
};

/// Empirical constant of |w_eps - g_eps| <= c sqrt(T - t).
inline double estimate_c_reg(const ValueSurface& s, const ModelSpec& model, double shift) {
    const Lattice& lat = s.lattice();
    const double T = lat.horizon();
    double c = 0.0;
    for (int n = lat.t_steps() - 1; n >= 0; --n) {
        double tau = T - lat.t_at(n);
        if (tau > 0.25 * T + 1e-12) break;
        for (std::size_t f = 0; f < lat.space_size(); ++f) {
            if (lat.is_boundary(f)) continue;
            double g = model.payoff_g(lat.point(f)) + shift;
            c = std::max(c, std::abs(s.at(n, f) - g) / std::sqrt(tau));
        }
    }
    return c;
}

/**
 * Solves the shaken equation. An empty shake set means the lattice
 * {-eps, 0, eps}^{1+d} inside the ball; eps = 0 reproduces solve() exactly.
 */
inline ShakenSurface solve_shaken(const ModelSpec& model, const GridSpec& grid, double eps,
                                  std::vector<Shake> shakes = {}, SolveOptions options = {}) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("eps must lie in [0, 1]");
    if (shakes.empty()) shakes = shake_lattice(eps, model.dim);
    for (const auto& b : shakes) {
        double r2 = b.dt * b.dt + b.dx.squaredNorm();
        if (static_cast<int>(b.dx.size()) != model.dim)
            throw ConfigError("shake point dimension differs from model.dim");
        if (r2 > eps * eps * (1.0 + 1e-12) + 1e-300)
            throw ConfigError("shake point outside the closed eps-ball");
    }
    ShakenSurface out;
    out.eps = eps;
    out.shakes = shakes;
    options.shakes = std::move(shakes);
    options.terminal_shift = 2.0 * eps;
    out.surface = solve(model, grid, options);
    out.c_reg = estimate_c_reg(out.surface, model, 2.0 * eps);
    double quarter = 0.25 * out.surface.lattice().horizon();
    out.c_eps = out.c_reg > 0.0 ? std::min(quarter, (eps / out.c_reg) * (eps / out.c_reg)) : quarter;
    return out;
}

/// Space-time node array of a surface: space axes first, time last.
inline NodeArray node_array(const Lattice& lat, const std::vector<double>& weights_tx = {}) {
    NodeArray a;
    const int d = lat.dim();
    for (int j = 0; j < d; ++j) {
        a.shape.push_back(lat.nodes(j));
        a.spacing.push_back(lat.h(j));
    }
    a.shape.push_back(lat.layers());
    a.spacing.push_back(lat.dt());
    if (weights_tx.empty()) {
        a.weights.assign(static_cast<std::size_t>(d) + 1, 1.0);
    } else {
        if (weights_tx.size() != static_cast<std::size_t>(d) + 1)
            throw ConfigError("metric weights need one entry for t and one per space axis");
        for (int j = 0; j < d; ++j) a.weights.push_back(weights_tx[static_cast<std::size_t>(j) + 1]);
        a.weights.push_back(weights_tx[0]);
    }
    for (double w : a.weights)
        if (!(w > 0.0)) throw ConfigError("metric weights must be positive");
    return a;
}

/// Tensor check grid over a box: t_points rows starting at t_lo (t_hi
/// excluded) and x_points nodes per axis including both ends.
struct CheckGrid {
    TimeBox box;
    int t_points = 100;
    int x_points = 50;
};

struct CertReport {
    bool passed = false;
    double tol = 0.0;
    double min_residual = std::numeric_limits<double>::infinity();
    double argmin_t = 0.0;
    Vec argmin_x;
    double terminal_margin = std::numeric_limits<double>::infinity();  ///< min W(T,.) - g
    std::size_t nodes_checked = 0;
    /// min (phi - W) over the check nodes; NaN when no target was given.
    double phi_margin = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::vector<Vec> box_points(const TimeBox& box, int x_points) {
    const int d = static_cast<int>(box.x_lo.size());
    std::vector<Vec> pts;
    auto coord = [&](int j, int i) {
        return x_points == 1 ? 0.5 * (box.x_lo(j) + box.x_hi(j))
                             : box.x_lo(j) + (box.x_hi(j) - box.x_lo(j)) * i / (x_points - 1);
    };
    if (d == 1) {
        for (int i = 0; i < x_points; ++i) pts.push_back(vec_of({coord(0, i)}));
    } else {
        for (int i1 = 0; i1 < x_points; ++i1)
            for (int i0 = 0; i0 < x_points; ++i0) pts.push_back(vec_of({coord(0, i0), coord(1, i1)}));
    }
    return pts;
}

}  // namespace detail

/**
 * Evaluates L with the analytic derivatives of the smooth surface at every
 * check node, and W - g at the terminal time over the box's x nodes.
 * PASS iff min L >= -tol, the terminal margin is >= -tol and, when phi is
 * given, W <= phi at every check node.
 */
inline CertReport verify_supersolution(const SmoothSurface& smooth, const ModelSpec& model,
                                       const CheckGrid& check, double tol,
                                       const std::function<double(double, const Vec&)>& phi = {}) {
    if (check.t_points < 1 || check.x_points < 1)
        throw ConfigError("check grid needs at least one node per axis");
    if (static_cast<int>(check.box.x_lo.size()) != model.dim ||
        static_cast<int>(check.box.x_hi.size()) != model.dim)
        throw ConfigError("check box dimension differs from model.dim");
    const double T = model.horizon_T;
    auto xs = detail::box_points(check.box, check.x_points);
    const std::size_t rows = static_cast<std::size_t>(check.t_points);

    struct RowResult {
        double min_res;
        std::size_t arg;
        double phi_margin;
    };
    std::vector<RowResult> res(rows);
    parallel_for(rows, [&](std::size_t n) {
        double t = check.box.t_lo + (check.box.t_hi - check.box.t_lo) * static_cast<double>(n) /
                                        static_cast<double>(rows);
        RowResult r{std::numeric_limits<double>::infinity(), 0,
                    std::numeric_limits<double>::infinity()};
        for (std::size_t i = 0; i < xs.size(); ++i) {
            DerivativePack pk = smooth.eval(t, xs[i]);
            double L = operator_L(t, xs[i], pk, model).value;
            if (L < r.min_res) {
                r.min_res = L;
                r.arg = i;
            }
            if (phi) r.phi_margin = std::min(r.phi_margin, phi(t, xs[i]) - pk.y);
        }
        res[n] = r;
    });

    CertReport rep;
    rep.tol = tol;
    rep.argmin_x = xs.front();
    double phi_margin = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < rows; ++n) {
        if (res[n].min_res < rep.min_residual) {
            rep.min_residual = res[n].min_res;
            rep.argmin_t = check.box.t_lo + (check.box.t_hi - check.box.t_lo) *
                                                 static_cast<double>(n) / static_cast<double>(rows);
            rep.argmin_x = xs[res[n].arg];
        }
        phi_margin = std::min(phi_margin, res[n].phi_margin);
    }
    rep.nodes_checked = rows * xs.size();
    for (const auto& x : xs)
        rep.terminal_margin = std::min(rep.terminal_margin, smooth.value(T, x) - model.payoff_g(x));
    if (phi) rep.phi_margin = phi_margin;
    rep.passed = rep.min_residual >= -tol && rep.terminal_margin >= -tol &&
                 (!phi || rep.phi_margin >= 0.0);
    return rep;
}

struct RegularizeOptions {
    GridSpec grid;  ///< time steps refer to [0, T]
    std::vector<double> eps_ladder{0.2, 0.1, 0.05, 0.025, 0.0125};
    double tol = 1e-3;
    int check_t = 100;
    int check_x = 50;
    int delta_halvings = 2;        ///< attempts after delta = eps / 2
    std::vector<double> weights;   ///< inf-convolution metric (t, x...); empty = 1
    SolveOptions solve;
};

struct DeltaAttempt {
    double delta = 0.0;
    double min_residual = 0.0;
    double terminal_margin = 0.0;
    double phi_margin = 0.0;
    bool passed = false;
};

struct RungRecord {
    double eps = 0.0;
    double c_B = 0.0;    ///< max over B nodes of w_eps - w_0
    double w_sup = 0.0;  ///< max |w_eps|
    double c_reg = 0.0;
    double k = 0.0;      ///< 0 when the rung was not smoothed
    double max_displacement_sq = 0.0;
    std::vector<DeltaAttempt> attempts;
};

/// Target phi on B: an explicit function of (t, x), or the grid solution v
/// plus a constant margin.
struct Target {
    std::function<double(double, const Vec&)> phi;
    std::optional<double> v_margin;

    static Target function(std::function<double(double, const Vec&)> f) { return {std::move(f), {}}; }
    static Target v_plus(double margin) { return {{}, margin}; }
};

struct RegularizeResult {
    SmoothSurface surface;
    CertReport cert;
    std::vector<RungRecord> ladder;
    ValueSurface base;  ///< w_0 on the extended lattice
    double time_offset = 0.0;
};

/// Max over the lattice nodes inside B of a - b (both on the same lattice).
inline double max_diff_on_box(const ValueSurface& a, const ValueSurface& b, const TimeBox& box,
                              double time_offset) {
    const Lattice& lat = a.lattice();
    double best = -std::numeric_limits<double>::infinity();
    for (int n = 0; n < lat.layers(); ++n) {
        double t = lat.t_at(n) - time_offset;
        if (t < box.t_lo - 1e-12 || t > box.t_hi + 1e-12) continue;
        for (std::size_t f = 0; f < lat.space_size(); ++f) {
            if (!box.contains(t, lat.point(f))) continue;
            best = std::max(best, a.at(n, f) - b.at(n, f));
        }
    }
    if (best == -std::numeric_limits<double>::infinity())
        throw ConfigError("B box contains no grid node");
    return best;
}

/**
 * Walks the eps ladder. At each rung with c_B <= eta / 2 it picks
 * k = ceil(8 |w_eps|_inf / eps^2), convolves, and tries delta = eps / 2
 * and its halvings until the certificate (L >= -tol on the check grid,
 * terminal margin >= 0, W <= phi on B) passes.
 */
inline RegularizeResult build_smooth_supersolution(const ModelSpec& model, const Target& target,
                                                   const TimeBox& B, double eta,
                                                   const RegularizeOptions& opt) {
    if (!(eta > 0.0)) throw ConfigError("eta must be positive");
    if (opt.eps_ladder.empty()) throw ConfigError("eps ladder is empty");
    for (std::size_t i = 0; i < opt.eps_ladder.size(); ++i) {
        double e = opt.eps_ladder[i];
        if (!(e > 0.0 && e <= 1.0)) throw ConfigError("eps ladder entries must lie in (0, 1]");
        if (i > 0 && !(e < opt.eps_ladder[i - 1]))
            throw ConfigError("eps ladder must be strictly decreasing");
    }
    if (B.t_lo < 0.0 || B.t_hi > model.horizon_T || !(B.t_lo <= B.t_hi))
        throw ConfigError("B time range must lie in [0, T]");
    // Backward extension covering the widest kernel.
    Lattice plain(opt.grid, model.horizon_T);
    const double dt = plain.dt();
    const int extra = static_cast<int>(std::ceil(0.5 * opt.eps_ladder.front() / dt - 1e-9));
    const double offset = extra * dt;
    ModelSpec ext = extend_backward(model, offset);
    GridSpec grid = opt.grid;
    grid.t_steps += extra;

    RegularizeResult out;
    out.time_offset = offset;
    out.base = solve(ext, grid, opt.solve);
    const Lattice& lat = out.base.lattice();
    if (!target.phi && !target.v_margin) throw ConfigError("target phi is missing");
    std::function<double(double, const Vec&)> phi = target.phi;
    if (!phi) {
        const ValueSurface* base = &out.base;
        double m = *target.v_margin;
        phi = [base, m, offset](double t, const Vec& x) { return value_at(*base, t + offset, x) + m; };
    }

    // phi must dominate v + eta on B.
    double worst_gap = std::numeric_limits<double>::infinity();
    for (int n = 0; n < lat.layers(); ++n) {
        double t = lat.t_at(n) - offset;
        if (t < B.t_lo - 1e-12 || t > B.t_hi + 1e-12) continue;
        for (std::size_t f = 0; f < lat.space_size(); ++f) {
            Vec x = lat.point(f);
            if (!B.contains(t, x)) continue;
            worst_gap = std::min(worst_gap, phi(t, x) - out.base.at(n, f) - eta);
        }
    }
    if (worst_gap == std::numeric_limits<double>::infinity())
        throw ConfigError("B box contains no grid node");
    if (worst_gap < -1e-12) {
        std::ostringstream os;
        os << "target phi does not dominate v + eta on B (worst gap " << worst_gap << ")";
        throw ConfigError(os.str());
    }

    CheckGrid check{B, opt.check_t, opt.check_x};
    double best_residual = -std::numeric_limits<double>::infinity();
    for (double eps : opt.eps_ladder) {
        ShakenSurface we = solve_shaken(ext, grid, eps, {}, opt.solve);
        RungRecord rec;
        rec.eps = eps;
        rec.c_B = max_diff_on_box(we.surface, out.base, B, offset);
        rec.c_reg = we.c_reg;
        for (double v : we.surface.values()) rec.w_sup = std::max(rec.w_sup, std::abs(v));
        // Relative slack: with coefficients constant in (t, x), c_B is 2 eps
        // up to round-off and may sit exactly on eta / 2.
        if (rec.c_B > 0.5 * eta * (1.0 + 1e-9)) {
            out.ladder.push_back(rec);
            continue;
        }
        rec.k = std::ceil(8.0 * rec.w_sup / (eps * eps));
        NodeArray arr = node_array(lat, opt.weights);
        InfConvolution ic = inf_convolution(we.surface.values(), arr, rec.k);
        rec.max_displacement_sq = ic.max_displacement_sq;
        std::vector<double> convolved = std::move(ic.values);
        ic = InfConvolution{};

        double delta = 0.5 * eps;
        for (int attempt = 0; attempt <= opt.delta_halvings; ++attempt, delta *= 0.5) {
            SmoothSurface sm(lat, convolved, delta, offset);
            sm.eps = eps;
            sm.k = rec.k;
            sm.B_t_lo = B.t_lo;
            sm.B_t_hi = B.t_hi;
            sm.B_lo = B.x_lo;
            sm.B_hi = B.x_hi;
            CertReport cert = verify_supersolution(sm, model, check, opt.tol, phi);
            cert.passed = cert.passed && cert.terminal_margin >= 0.0;
            rec.attempts.push_back(
                {delta, cert.min_residual, cert.terminal_margin, cert.phi_margin, cert.passed});
            best_residual = std::max(best_residual, cert.min_residual);
            if (cert.passed) {
                out.ladder.push_back(rec);
                out.surface = std::move(sm);
                out.cert = cert;
                return out;
            }
        }
        out.ladder.push_back(rec);
    }
    std::ostringstream os;
    os << "eps ladder exhausted without certification; best min residual " << best_residual;
    if (best_residual == -std::numeric_limits<double>::infinity())
        os << " (no rung reached c_B <= eta/2 = " << 0.5 * eta << ")";
    throw CertificationError(os.str());
}

/// max_B (w_eps - w_0) for every eps (the convergence curve), on the same
/// extended lattice the pipeline uses.
struct EpsCurvePoint {
    double eps;
    double c_B;
};

inline std::vector<EpsCurvePoint> epsilon_curve(const ModelSpec& model, const GridSpec& grid,
                                                const std::vector<double>& ladder,
                                                const TimeBox& B, const SolveOptions& options = {}) {
    std::vector<EpsCurvePoint> out;
    ValueSurface base = solve(model, grid, options);
    for (double eps : ladder) {
        ShakenSurface we = solve_shaken(model, grid, eps, {}, options);
        out.push_back({eps, max_diff_on_box(we.surface, base, B, 0.0)});
    }
    return out;
}

}  // namespace hedgegame
