#pragma once

/**
 * @file dual.hpp
 * @brief Regression Monte Carlo for the controlled backward equation
 *
 *   Y_t = g(X_T) + 2 eps - int_t^T f((s, X_s) + b_s, Y_s, Z_s, a_s) ds - int_t^T Z_s dW_s,
 *   f = mu_Y_hat,
 *
 * maximized over controls (a, b) that are constant between knots.
 *
 * Per segment [tau_k, tau_{k+1}] and per control point gamma, paths start
 * from sampled states at tau_k, run with gamma's (shifted) coefficients on
 * a few Euler sub-steps, and the backward equation is stepped explicitly:
 *
 *   E_j = P[Y_{j+1}],  Z_j = P[(Y_{j+1} - E_j) dW_j] / dt_j,
 *   Y_j = Y_{j+1} - dt_j f(t_j, X_j, E_j, Z_j),
 *
 * with P the least-squares projection on polynomials of X_j. Paths carry
 * Y_end - sum_l dt_l f_l rather than the projected value, so only the
 * driver sees fitted quantities and the last step keeps pathwise noise for
 * the bootstrap. The value
 * function at tau_k is the pointwise maximum over gamma of the fitted
 * polynomials, and is the terminal function of the previous segment.
 *
 * States at the knots come from exploration paths started at (t0, x0)
 * that pick a uniformly random control point on every segment.
 */

#include "hedgegame/model.hpp"
#include "hedgegame/parallel.hpp"
#include "hedgegame/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace hedgegame {

struct ControlPoint {
    int a_index = 0;
    Shake shift;
};

struct ControlLattice {
    std::vector<double> time_knots;  ///< increasing, first t0, last T
    std::vector<ControlPoint> gamma_points;

    int segments() const { return static_cast<int>(time_knots.size()) - 1; }

    void validate(const ModelSpec& model, double eps) const {
        if (time_knots.size() < 2) throw ConfigError("control lattice needs at least two knots");
        for (std::size_t i = 1; i < time_knots.size(); ++i)
            if (!(time_knots[i] > time_knots[i - 1])) throw ConfigError("knots must be increasing");
        if (std::abs(time_knots.back() - model.horizon_T) > 1e-12)
            throw ConfigError("last knot must be T");
        if (gamma_points.empty()) throw ConfigError("gamma_points must be nonempty");
        for (const auto& g : gamma_points) {
            if (g.a_index < 0 || g.a_index >= static_cast<int>(model.A_points.size()))
                throw ConfigError("gamma point A-index out of range");
            if (static_cast<int>(g.shift.dx.size()) != model.dim)
                throw ConfigError("gamma point shift has the wrong dimension");
            double r2 = g.shift.dt * g.shift.dt + g.shift.dx.squaredNorm();
            if (r2 > eps * eps * (1.0 + 1e-12) + 1e-300)
                throw ConfigError("gamma point shift outside the closed eps-ball");
        }
    }
};

/// Equally spaced knots on [t0, T] (`segments` intervals) and every pair of
/// an A-point with a point of the shake lattice.
inline ControlLattice make_control_lattice(const ModelSpec& model, double eps, double t0,
                                           int segments) {
    if (segments < 1) throw ConfigError("knot count must be at least 1");
    ControlLattice lat;
    const double T = model.horizon_T;
    for (int k = 0; k <= segments; ++k)
        lat.time_knots.push_back(k == segments ? T : t0 + (T - t0) * k / segments);
    for (std::size_t i = 0; i < model.A_points.size(); ++i)
        for (const auto& b : shake_lattice(eps, model.dim))
            lat.gamma_points.push_back({static_cast<int>(i), b});
    return lat;
}

struct DualEstimate {
    double value = 0.0;
    double std_error = 0.0;
    int n_paths = 0;
    int basis_degree = 0;
    int knot_count = 0;  ///< number of control intervals
    std::vector<std::string> warnings;
};

struct DualOptions {
    int basis_degree = 2;
    int n_paths = 100000;
    std::uint64_t seed = 1;
    int total_steps = 32;   ///< Euler sub-steps over [t0, T], split across segments
    int bundles = 0;        ///< quantile cells per axis; 0 picks 16 (d = 1) or 4 (d = 2)
    int bootstrap = 200;

    int cells_per_axis(int dim) const { return bundles > 0 ? bundles : (dim == 1 ? 16 : 4); }
};

namespace detail {

/// Monomials of total degree <= degree in centered, scaled coordinates.
struct PolyBasis {
    int dim = 1;
    int degree = 0;
    Vec center, scale;

    int size() const { return dim == 1 ? degree + 1 : (degree + 1) * (degree + 2) / 2; }

    void fill(const Vec& x, double* out) const {
        if (dim == 1) {
            double u = (x(0) - center(0)) / scale(0), p = 1.0;
            for (int e = 0; e <= degree; ++e, p *= u) out[e] = p;
            return;
        }
        double u = (x(0) - center(0)) / scale(0), v = (x(1) - center(1)) / scale(1);
        int k = 0;
        for (int tot = 0; tot <= degree; ++tot)
            for (int e1 = 0; e1 <= tot; ++e1) out[k++] = std::pow(u, tot - e1) * std::pow(v, e1);
    }
};

inline constexpr std::size_t kBlocks = 64;

/// Fixed-order blocked sum over paths: result independent of worker count.
template <class Fn>
Eigen::MatrixXd blocked_sum(std::size_t n, Eigen::Index rows, Eigen::Index cols, Fn&& add) {
    std::vector<Eigen::MatrixXd> part(kBlocks, Eigen::MatrixXd::Zero(rows, cols));
    parallel_for(kBlocks, [&](std::size_t b) {
        std::size_t lo = n * b / kBlocks, hi = n * (b + 1) / kBlocks;
        for (std::size_t i = lo; i < hi; ++i) add(i, part[b]);
    });
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(rows, cols);
    for (const auto& p : part) total += p;
    return total;
}

/// Quantile cells per axis; points outside the training range are clamped.
struct Partition {
    int dim = 1;
    std::vector<std::vector<double>> cuts;  ///< interior cut points per axis
    Vec lo, hi;

    int cells() const {
        int c = 1;
        for (const auto& v : cuts) c *= static_cast<int>(v.size()) + 1;
        return c;
    }

    Vec clamp(const Vec& x) const { return x.cwiseMax(lo).cwiseMin(hi); }

    int cell_of(const Vec& x) const {
        int c = 0;
        for (int j = 0; j < dim; ++j) {
            const auto& v = cuts[static_cast<std::size_t>(j)];
            int i = static_cast<int>(std::upper_bound(v.begin(), v.end(), x(j)) - v.begin());
            c = c * (static_cast<int>(v.size()) + 1) + i;
        }
        return c;
    }
};

inline Partition make_partition(const std::vector<Vec>& xs, int per_axis) {
    const int d = static_cast<int>(xs.front().size());
    Partition p;
    p.dim = d;
    p.cuts.resize(static_cast<std::size_t>(d));
    p.lo = xs.front();
    p.hi = xs.front();
    std::vector<double> v(xs.size());
    for (int j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < xs.size(); ++i) v[i] = xs[i](j);
        std::sort(v.begin(), v.end());
        p.lo(j) = v.front();
        p.hi(j) = v.back();
        if (v.back() - v.front() < 1e-12) continue;
        auto& c = p.cuts[static_cast<std::size_t>(j)];
        for (int q = 1; q < per_axis; ++q) {
            double cut = v[v.size() * static_cast<std::size_t>(q) / static_cast<std::size_t>(per_axis)];
            if (c.empty() || cut > c.back()) c.push_back(cut);
        }
    }
    return p;
}

/// Least-squares fit of several responses on polynomials within each cell;
/// a cell's degree is lowered until its Gram matrix is well conditioned.
struct Fit {
    Partition part;
    std::vector<PolyBasis> basis;       ///< per cell
    std::vector<Eigen::MatrixXd> coef;  ///< per cell: basis size x responses

    double eval(const Vec& x, Eigen::Index col) const {
        Vec xc = part.clamp(x);
        auto c = static_cast<std::size_t>(part.cell_of(xc));
        double phi[16];
        basis[c].fill(xc, phi);
        double s = 0.0;
        for (int k = 0; k < basis[c].size(); ++k) s += phi[k] * coef[c](k, col);
        return s;
    }
};

inline Fit fit(const std::vector<Vec>& xs, const Partition& part,
               const std::function<void(std::size_t, double*)>& responses, int n_resp, int degree,
               std::vector<std::string>* warnings, const std::string& where) {
    const std::size_t n = xs.size();
    const int d = part.dim;
    const int C = part.cells();
    std::vector<int> cell(n);
    parallel_for(n, [&](std::size_t i) { cell[i] = part.cell_of(xs[i]); });

    // Per-cell count, first and second moments, response sums.
    Eigen::MatrixXd mom = blocked_sum(n, C, 1 + 2 * d + n_resp, [&](std::size_t i, Eigen::MatrixXd& acc) {
        double r[8];
        responses(i, r);
        auto c = cell[i];
        acc(c, 0) += 1.0;
        for (int j = 0; j < d; ++j) {
            acc(c, 1 + j) += xs[i](j);
            acc(c, 1 + d + j) += xs[i](j) * xs[i](j);
        }
        for (int q = 0; q < n_resp; ++q) acc(c, 1 + 2 * d + q) += r[q];
    });
    Fit f;
    f.part = part;
    f.basis.assign(static_cast<std::size_t>(C), PolyBasis{d, degree, Vec::Zero(d), Vec::Ones(d)});
    f.coef.assign(static_cast<std::size_t>(C), Eigen::MatrixXd::Zero(1, n_resp));
    std::vector<char> done(static_cast<std::size_t>(C), 0);
    Eigen::RowVectorXd global = mom.rightCols(n_resp).colwise().sum() / static_cast<double>(n);
    for (int c = 0; c < C; ++c) {
        auto& b = f.basis[static_cast<std::size_t>(c)];
        double cnt = mom(c, 0);
        bool flat = true;
        for (int j = 0; j < d && cnt > 0; ++j) {
            double mean = mom(c, 1 + j) / cnt;
            double var = std::max(0.0, mom(c, 1 + d + j) / cnt - mean * mean);
            b.center(j) = mean;
            b.scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
            if (var > 1e-24) flat = false;
        }
        if (cnt == 0 || flat) {
            // Empty cell or a single repeated point: a constant fit.
            b.degree = 0;
            f.coef[static_cast<std::size_t>(c)].row(0) =
                cnt > 0 ? Eigen::RowVectorXd(mom.block(c, 1 + 2 * d, 1, n_resp) / cnt) : global;
            done[static_cast<std::size_t>(c)] = 1;
        }
    }
    for (int round = 0; round <= degree; ++round) {
        if (std::all_of(done.begin(), done.end(), [](char v) { return v != 0; })) break;
        const int m = d == 1 ? degree + 1 : (degree + 1) * (degree + 2) / 2;
        Eigen::MatrixXd sums = blocked_sum(n, C * m, m + n_resp, [&](std::size_t i, Eigen::MatrixXd& acc) {
            auto c = static_cast<std::size_t>(cell[i]);
            if (done[c]) return;
            double phi[16], r[8];
            const auto& b = f.basis[c];
            const int mc = b.size();
            b.fill(xs[i], phi);
            responses(i, r);
            const Eigen::Index row = static_cast<Eigen::Index>(c) * m;
            for (int a = 0; a < mc; ++a) {
                for (int q = 0; q < mc; ++q) acc(row + a, q) += phi[a] * phi[q];
                for (int q = 0; q < n_resp; ++q) acc(row + a, m + q) += phi[a] * r[q];
            }
        });
        for (int c = 0; c < C; ++c) {
            if (done[static_cast<std::size_t>(c)]) continue;
            auto& b = f.basis[static_cast<std::size_t>(c)];
            const int mc = b.size();
            const double cnt = mom(c, 0);
            Eigen::MatrixXd G = sums.block(static_cast<Eigen::Index>(c) * m, 0, mc, mc) / cnt;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
            double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
            if (b.degree > 0 && (!(lo > 1e-10 * hi) || cnt < 2.0 * mc)) {
                --b.degree;
                continue;
            }
            if (b.degree < degree && warnings) {
                std::ostringstream os;
                os << "regression rank deficient at " << where << " cell " << c << "; degree lowered to "
                   << b.degree;
                warnings->push_back(os.str());
            }
            f.coef[static_cast<std::size_t>(c)] =
                G.ldlt().solve(sums.block(static_cast<Eigen::Index>(c) * m, m, mc, n_resp) / cnt);
            done[static_cast<std::size_t>(c)] = 1;
        }
    }
    return f;
}

/// Terminal or continuation value: max over gamma fits, or a plain function.
struct ValueFunction {
    std::function<double(const Vec&)> plain;
    std::vector<Fit> fits;  ///< one per gamma point (single response each)

    double operator()(const Vec& x) const {
        if (plain) return plain(x);
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& f : fits) best = std::max(best, f.eval(x, 0));
        return best;
    }
};

struct CoreResult {
    DualEstimate estimate;
    ValueFunction first;  ///< value function at the first knot
};

inline std::vector<int> split_steps(const std::vector<double>& knots, int total) {
    std::vector<int> m;
    double span = knots.back() - knots.front();
    for (std::size_t k = 0; k + 1 < knots.size(); ++k)
        m.push_back(std::max(1, static_cast<int>(std::lround(total * (knots[k + 1] - knots[k]) / span))));
    return m;
}

/**
 * Backward induction over `knots` with terminal function `terminal`.
 * Exploration paths start at (t_start, x0) with t_start <= knots[0].
 */
inline CoreResult lsmc_core(const ModelSpec& model, const std::vector<double>& knots,
                            const std::vector<ControlPoint>& gammas, const ValueFunction& terminal,
                            double t_start, const Vec& x0, const DualOptions& opt,
                            std::uint64_t leg) {
    const int d = model.dim;
    const std::size_t N = static_cast<std::size_t>(opt.n_paths);
    const int K = static_cast<int>(knots.size()) - 1;
    const std::size_t G = gammas.size();
    std::vector<double> all_knots = knots;
    const bool lead_in = t_start < knots.front() - 1e-15;
    if (lead_in) all_knots.insert(all_knots.begin(), t_start);
    std::vector<int> steps = split_steps(all_knots, opt.total_steps);
    const int off = lead_in ? 1 : 0;

    auto coeffs = [&](const ControlPoint& g, double s, const Vec& x, Vec& mu, Mat& sig) {
        double ts = clamp_time(s + g.shift.dt, model);
        Vec xs = x + g.shift.dx;
        const Vec& a = model.A_points[static_cast<std::size_t>(g.a_index)];
        mu = model.mu_X(ts, xs, a);
        sig = model.sigma_X(ts, xs, a);
    };

    // Exploration states at every knot (index in all_knots).
    std::vector<std::vector<Vec>> states(all_knots.size(), std::vector<Vec>(N, x0));
    parallel_for(N, [&](std::size_t i) {
        Engine rng = make_stream({opt.seed, leg, i, kStreamDualForward});
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> pick(0, G - 1);
        Vec x = x0;
        Vec mu;
        Mat sig;
        for (std::size_t k = 0; k + 1 < all_knots.size(); ++k) {
            const ControlPoint& g = gammas[pick(rng)];
            double h = (all_knots[k + 1] - all_knots[k]) / steps[k];
            for (int j = 0; j < steps[k]; ++j) {
                coeffs(g, all_knots[k] + j * h, x, mu, sig);
                Vec dW(d);
                for (int c = 0; c < d; ++c) dW(c) = std::sqrt(h) * normal(rng);
                x = x + mu * h + sig * dW;
            }
            states[k + 1][i] = x;
        }
    });

    CoreResult out;
    out.estimate.n_paths = opt.n_paths;
    out.estimate.basis_degree = opt.basis_degree;
    out.estimate.knot_count = K;
    ValueFunction next = terminal;
    // Raw data of the first Euler step from x0, per gamma, for the bootstrap.
    struct FirstStep {
        std::vector<double> Y1;
        Eigen::MatrixXd dW;
        double h, ts;
        Vec x;
        Vec a;
    };
    std::vector<FirstStep> first;

    for (int k = K - 1; k >= 0; --k) {
        const int kk = k + off;
        const int m = steps[static_cast<std::size_t>(kk)];
        const double h = (knots[k + 1] - knots[k]) / m;
        const std::vector<Vec>& start = states[static_cast<std::size_t>(kk)];
        // Shared increments for all gamma points on this segment.
        std::vector<double> dW(N * static_cast<std::size_t>(m * d));
        parallel_for(N, [&](std::size_t i) {
            Engine rng = make_stream({opt.seed, leg, i, kStreamDualSegment, static_cast<std::uint64_t>(k)});
            std::normal_distribution<double> normal(0.0, 1.0);
            for (int c = 0; c < m * d; ++c) dW[i * static_cast<std::size_t>(m * d) + c] = std::sqrt(h) * normal(rng);
        });

        ValueFunction here;
        for (std::size_t gi = 0; gi < G; ++gi) {
            const ControlPoint& g = gammas[gi];
            const Vec& a = model.A_points[static_cast<std::size_t>(g.a_index)];
            std::vector<std::vector<Vec>> path(static_cast<std::size_t>(m) + 1, std::vector<Vec>(N));
            path[0] = start;
            parallel_for(N, [&](std::size_t i) {
                Vec x = start[i], mu;
                Mat sig;
                for (int j = 0; j < m; ++j) {
                    coeffs(g, knots[k] + j * h, x, mu, sig);
                    Vec w(d);
                    for (int c = 0; c < d; ++c) w(c) = dW[i * static_cast<std::size_t>(m * d) + j * d + c];
                    x = x + mu * h + sig * w;
                    path[static_cast<std::size_t>(j) + 1][i] = x;
                }
            });
            std::vector<double> Y(N);
            parallel_for(N, [&](std::size_t i) { Y[i] = next(path[static_cast<std::size_t>(m)][i]); });

            for (int j = m - 1; j >= 0; --j) {
                const auto& xs = path[static_cast<std::size_t>(j)];
                std::ostringstream where;
                where << "knot " << k << " step " << j;
                Partition part = make_partition(xs, opt.cells_per_axis(d));
                Fit fe = fit(xs, part, [&](std::size_t i, double* r) { r[0] = Y[i]; }, 1, opt.basis_degree,
                             &out.estimate.warnings, where.str());
                std::vector<double> E(N);
                parallel_for(N, [&](std::size_t i) { E[i] = fe.eval(xs[i], 0); });
                auto dw = [&](std::size_t i, int c) { return dW[i * static_cast<std::size_t>(m * d) + j * d + c]; };
                Fit fz = fit(
                    xs, part,
                    [&](std::size_t i, double* r) {
                        for (int c = 0; c < d; ++c) r[c] = (Y[i] - E[i]) * dw(i, c) / h;
                    },
                    d, opt.basis_degree, &out.estimate.warnings, where.str());
                double t = knots[k] + j * h;
                double ts = clamp_time(t + g.shift.dt, model);
                if (k == 0 && j == 0 && !lead_in) {
                    FirstStep fs{std::vector<double>(Y), Eigen::MatrixXd(N, d), h, ts, x0 + g.shift.dx, a};
                    for (std::size_t i = 0; i < N; ++i)
                        for (int c = 0; c < d; ++c) fs.dW(static_cast<Eigen::Index>(i), c) = dw(i, c);
                    first.push_back(std::move(fs));
                }
                parallel_for(N, [&](std::size_t i) {
                    Vec z(d);
                    for (int c = 0; c < d; ++c) z(c) = fz.eval(xs[i], c);
                    Vec xsh = xs[i] + g.shift.dx;
                    Y[i] -= h * mu_Y_hat(ts, xsh, E[i], z, a, model);
                });
            }
            std::ostringstream where;
            where << "knot " << k;
            here.fits.push_back(fit(start, make_partition(start, opt.cells_per_axis(d)),
                                    [&](std::size_t i, double* r) { r[0] = Y[i]; }, 1, opt.basis_degree,
                                    nullptr, where.str()));
        }
        next = std::move(here);
    }
    out.first = next;

    // With every path at x0 the first step reduces to sample means, so the
    // estimate is max over gamma of E - h f(E, Z) and the bootstrap resamples
    // the (Y_1, dW_0) pairs. Otherwise average the fitted maximum.
    if (!lead_in) {
        auto estimate = [&](const std::vector<std::size_t>* idx) {
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& fs : first) {
                double e = 0.0;
                for (std::size_t r = 0; r < N; ++r) e += fs.Y1[idx ? (*idx)[r] : r];
                e /= static_cast<double>(N);
                Vec z = Vec::Zero(d);
                for (std::size_t r = 0; r < N; ++r) {
                    std::size_t i = idx ? (*idx)[r] : r;
                    z += (fs.Y1[i] - e) * fs.dW.row(static_cast<Eigen::Index>(i)).transpose();
                }
                z /= static_cast<double>(N) * fs.h;
                best = std::max(best, e - fs.h * mu_Y_hat(fs.ts, fs.x, e, z, fs.a, model));
            }
            return best;
        };
        out.estimate.value = estimate(nullptr);
        Engine rng = make_stream({opt.seed, leg, kStreamBootstrap});
        std::uniform_int_distribution<std::size_t> pick(0, N - 1);
        std::vector<std::size_t> idx(N);
        double s = 0.0, s2 = 0.0;
        for (int b = 0; b < opt.bootstrap; ++b) {
            for (auto& v : idx) v = pick(rng);
            double e = estimate(&idx);
            s += e;
            s2 += e * e;
        }
        double nb = std::max(1, opt.bootstrap);
        out.estimate.std_error = std::sqrt(std::max(0.0, s2 / nb - (s / nb) * (s / nb)));
    } else {
        const auto& s0 = states[static_cast<std::size_t>(off)];
        double s = 0.0;
        for (const auto& x : s0) s += out.first(x);
        out.estimate.value = s / static_cast<double>(N);
    }
    return out;
}

}  // namespace detail

/**
 * Estimate of w_eps(t0, x0) over piecewise-constant controls on the
 * lattice's knots (time_knots.front() is t0).
 */
inline DualEstimate dual_value_lsmc(const ModelSpec& model, double eps, const Vec& x0,
                                    const ControlLattice& lattice, const DualOptions& opt) {
    lattice.validate(model, eps);
    if (opt.basis_degree < 1) throw ConfigError("basis_degree must be at least 1");
    if (opt.n_paths < 2) throw ConfigError("n_paths must be at least 2");
    if (static_cast<int>(x0.size()) != model.dim) throw ConfigError("x0 dimension differs from model.dim");
    if (model.dim > 2 || opt.basis_degree > 4) throw ConfigError("basis supports d <= 2 and degree <= 4");
    detail::ValueFunction terminal;
    terminal.plain = [&model, eps](const Vec& x) { return model.payoff_g(x) + 2.0 * eps; };
    return detail::lsmc_core(model, lattice.time_knots, lattice.gamma_points, terminal,
                             lattice.time_knots.front(), x0, opt, 0)
        .estimate;
}

/// Terminal consistency: at t0 = T the estimate is g(x0) + 2 eps.
inline DualEstimate dual_value_at_maturity(const ModelSpec& model, double eps, const Vec& x0) {
    DualEstimate e;
    e.value = model.payoff_g(x0) + 2.0 * eps;
    return e;
}

struct DppReport {
    DualEstimate direct;
    DualEstimate composed;
    double difference = 0.0;
    double combined_std_error = 0.0;
    double inner_mean = 0.0;  ///< mean of the inner value function at mid_time
};

/**
 * Direct estimate on [t0, T] against the composition of an inner estimate
 * on [mid, T] (a function of x) with an outer one on [t0, mid] that uses
 * the inner function as terminal data. mid is inserted as a knot.
 */
inline DppReport dpp_check(const ModelSpec& model, double eps, const Vec& x0, double mid_time,
                           const ControlLattice& lattice, const DualOptions& opt) {
    lattice.validate(model, eps);
    const double t0 = lattice.time_knots.front(), T = model.horizon_T;
    if (!(t0 < mid_time && mid_time < T)) throw ConfigError("dpp_check requires t0 < mid < T");
    std::vector<double> outer_k, inner_k{mid_time};
    for (double t : lattice.time_knots) {
        if (t < mid_time - 1e-12) outer_k.push_back(t);
        if (t > mid_time + 1e-12) inner_k.push_back(t);
    }
    outer_k.push_back(mid_time);

    DppReport rep;
    ControlLattice full = lattice;
    full.time_knots = outer_k;
    full.time_knots.insert(full.time_knots.end(), inner_k.begin() + 1, inner_k.end());
    rep.direct = dual_value_lsmc(model, eps, x0, full, opt);

    detail::ValueFunction terminal;
    terminal.plain = [&model, eps](const Vec& x) { return model.payoff_g(x) + 2.0 * eps; };
    DualOptions inner_opt = opt;
    inner_opt.total_steps = std::max(1, static_cast<int>(std::lround(opt.total_steps * (T - mid_time) / (T - t0))));
    auto inner = detail::lsmc_core(model, inner_k, lattice.gamma_points, terminal, t0, x0, inner_opt, 1);
    rep.inner_mean = inner.estimate.value;

    DualOptions outer_opt = opt;
    outer_opt.total_steps = std::max(1, opt.total_steps - inner_opt.total_steps);
    // The inner function already carries the 2 eps terminal shift.
    auto outer = detail::lsmc_core(model, outer_k, lattice.gamma_points, inner.first, t0, x0,
                                   outer_opt, 2);
    rep.composed = outer.estimate;
    rep.composed.warnings.insert(rep.composed.warnings.end(), inner.estimate.warnings.begin(),
                                 inner.estimate.warnings.end());
    rep.difference = std::abs(rep.direct.value - rep.composed.value);
    rep.combined_std_error = std::hypot(rep.direct.std_error, rep.composed.std_error);
    return rep;
}

}  // namespace hedgegame
