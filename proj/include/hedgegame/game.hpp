#pragma once

/**
 * @file game.hpp
 * @brief Feedback hedging strategies and Monte Carlo play of the game.
 *
 * The hedger uses u = u_hat(t, X, Y, sigma_X(t,X,a)^T Dw(t,X), a) for a
 * value surface w; the adversary picks a from A_points. Both state
 * equations are advanced by Euler-Maruyama with one Brownian increment per
 * step shared by X and Y.
 */

#include "hedgegame/hjb.hpp"
#include "hedgegame/mollifier.hpp"
#include "hedgegame/parallel.hpp"
#include "hedgegame/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace hedgegame {

/**
 * Feedback rule derived from a value surface. Queries outside the surface
 * domain are clamped to its boundary and flagged.
 */
class StrategyMap {
public:
    StrategyMap() = default;

    static StrategyMap from_surface(const ValueSurface& s, const ModelSpec& model) {
        StrategyMap m;
        m.model_ = &model;
        m.grid_ = &s;
        m.T_ = s.lattice().horizon();
        m.lo_ = s.grid().x_min;
        m.hi_ = s.grid().x_max;
        return m;
    }

    static StrategyMap from_smooth(const SmoothSurface& s, const ModelSpec& model) {
        StrategyMap m;
        m.model_ = &model;
        m.smooth_ = &s;
        m.t_lo_ = 0.0;
        m.T_ = s.horizon();
        m.lo_ = s.lattice().spec().x_min;
        m.hi_ = s.lattice().spec().x_max;
        return m;
    }

    bool valid() const { return model_ != nullptr && (grid_ != nullptr || smooth_ != nullptr); }

    /// Value and gradient of the source at the clamped query point.
    DerivativePack pack(double t, const Vec& x, bool* clamped = nullptr) const {
        double tc = std::clamp(t, t_lo_, T_);
        Vec xc = x.cwiseMax(lo_).cwiseMin(hi_);
        if (clamped) *clamped = tc != t || xc != x;
        return grid_ ? eval(*grid_, tc, xc) : smooth_->eval(tc, xc);
    }

    double value(double t, const Vec& x) const { return pack(t, x).y; }

    /// Control at (t, x, y) against adversary point a.
    Vec rule(double t, const Vec& x, double y, const Vec& a, bool* clamped = nullptr) const {
        Vec p = pack(t, x, clamped).p;
        Mat s = model_->sigma_X(t, x, a);
        return model_->u_hat(t, x, y, Vec(s.transpose() * p), a);
    }

    const ModelSpec& model() const { return *model_; }

private:
    const ModelSpec* model_ = nullptr;
    const ValueSurface* grid_ = nullptr;
    const SmoothSurface* smooth_ = nullptr;
    double t_lo_ = 0.0;
    double T_ = 1.0;
    Vec lo_, hi_;
};

inline StrategyMap make_strategy(const ValueSurface& s, const ModelSpec& model) {
    return StrategyMap::from_surface(s, model);
}
inline StrategyMap make_strategy(const SmoothSurface& s, const ModelSpec& model) {
    return StrategyMap::from_smooth(s, model);
}

/**
 * Adversary controls. Each step consumes exactly one uniform from the
 * adversary's stream, so the control at step n depends only on (t_n, X_n)
 * and the first n + 1 uniforms.
 */
struct Adversary {
    enum class Kind { constant, piecewise_random, markov_worst };
    Kind kind = Kind::constant;
    int a_index = 0;
    double switch_rate = 4.0;      ///< piecewise_random: switches per unit time
    std::uint64_t stream = 0;      ///< piecewise_random: sub-stream id
    const ValueSurface* policy_source = nullptr;  ///< markov_worst

    static Adversary constant(int i) { return {Kind::constant, i, 0.0, 0, nullptr}; }
    static Adversary random(double rate, std::uint64_t stream = 0) {
        return {Kind::piecewise_random, 0, rate, stream, nullptr};
    }
    static Adversary worst(const ValueSurface& s) { return {Kind::markov_worst, 0, 0.0, 0, &s}; }

    std::string label() const {
        switch (kind) {
            case Kind::constant: return "constant:" + std::to_string(a_index);
            case Kind::piecewise_random: return "random:" + std::to_string(switch_rate);
            case Kind::markov_worst: return "worst";
        }
        return "";
    }

    /// Next index given the current one (-1 before the first step).
    int next(int current, double t, const Vec& x, double dt, double uniform, int n_points) const {
        switch (kind) {
            case Kind::constant: return a_index;
            case Kind::piecewise_random: {
                double p = current < 0 ? 1.0 : -std::expm1(-switch_rate * dt);
                if (uniform >= p) return current;
                int i = static_cast<int>(uniform / p * n_points);
                return std::min(i, n_points - 1);
            }
            case Kind::markov_worst: return policy(*policy_source).lookup(t, x);
        }
        return 0;
    }
};

struct PathOutcome {
    Vec x_T;
    double y_T = 0.0;
    double shortfall = 0.0;  ///< (g(X_T) - Y_T)^+
    bool finite = true;
};

struct SimReport {
    std::string adversary;
    int n_paths = 0;
    int n_steps = 0;
    std::uint64_t seed = 0;
    double t0 = 0.0;
    Vec x0;
    double y0 = 0.0;
    double shortfall_mean = 0.0;
    double shortfall_std_error = 0.0;
    std::size_t non_finite = 0;   ///< paths excluded for a non-finite state
    std::size_t clamped = 0;      ///< strategy queries outside the surface
    std::vector<double> surplus;  ///< Y_T - g(X_T) of finite paths, sorted
    std::vector<PathOutcome> paths;

    /// Fraction of finite paths with shortfall above tol.
    double shortfall_prob(double tol) const {
        if (surplus.empty()) return 0.0;
        auto it = std::lower_bound(surplus.begin(), surplus.end(), -tol);
        // surplus < -tol  <=>  shortfall > tol
        return static_cast<double>(it - surplus.begin()) / static_cast<double>(surplus.size());
    }

    /// Empirical quantile of Y_T - g(X_T) (lower order statistic).
    double quantile(double q) const {
        if (surplus.empty()) return std::numeric_limits<double>::quiet_NaN();
        std::size_t i = static_cast<std::size_t>(std::floor(q * static_cast<double>(surplus.size() - 1)));
        return surplus[std::min(i, surplus.size() - 1)];
    }
};

struct SimParams {
    double t0 = 0.0;
    Vec x0;
    int n_paths = 10000;
    int n_steps = 400;
    std::uint64_t seed = 1;
};

/**
 * Euler-Maruyama play of the game from (t0, x0, y0). Path i draws its
 * Brownian increments from stream (seed, i, brownian) and the adversary's
 * uniforms from (seed, i, adversary, adversary.stream); results are
 * independent of the worker count.
 */
inline SimReport simulate(const ModelSpec& model, const StrategyMap& strategy,
                          const Adversary& adversary, const SimParams& prm, double y0) {
    if (prm.n_steps < 1) throw ConfigError("n_steps must be at least 1");
    if (prm.n_paths < 1) throw ConfigError("n_paths must be at least 1");
    if (static_cast<int>(prm.x0.size()) != model.dim) throw ConfigError("x0 dimension differs from model.dim");
    const double T = model.horizon_T;
    if (!(prm.t0 >= 0.0 && prm.t0 < T)) throw ConfigError("t0 must lie in [0, T)");
    const int nA = static_cast<int>(model.A_points.size());
    if (adversary.kind == Adversary::Kind::constant && (adversary.a_index < 0 || adversary.a_index >= nA))
        throw ConfigError("constant adversary index out of range");
    if (adversary.kind == Adversary::Kind::markov_worst && adversary.policy_source == nullptr)
        throw ConfigError("markov_worst adversary needs a policy surface");
    const int d = model.dim;
    const double dt = (T - prm.t0) / prm.n_steps;
    const double sq = std::sqrt(dt);

    std::vector<PathOutcome> paths(static_cast<std::size_t>(prm.n_paths));
    std::vector<std::size_t> clamps(paths.size(), 0);
    parallel_for(paths.size(), [&](std::size_t i) {
        Engine bm = make_stream({prm.seed, i, kStreamBrownian});
        Engine adv = make_stream({prm.seed, i, kStreamAdversary, adversary.stream});
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        Vec x = prm.x0;
        double y = y0;
        int a_idx = -1;
        std::size_t clamp_count = 0;
        bool finite = true;
        for (int n = 0; n < prm.n_steps; ++n) {
            double t = prm.t0 + n * dt;
            a_idx = adversary.next(a_idx, t, x, dt, unif(adv), nA);
            const Vec& a = model.A_points[static_cast<std::size_t>(a_idx)];
            bool clamped = false;
            Vec u = strategy.rule(t, x, y, a, &clamped);
            if (clamped) ++clamp_count;
            Vec dW(d);
            for (int j = 0; j < d; ++j) dW(j) = sq * normal(bm);
            Vec mx = model.mu_X(t, x, a);
            Mat sx = model.sigma_X(t, x, a);
            double my = model.mu_Y(t, x, y, u, a);
            Vec sy = model.sigma_Y(t, x, y, u, a);
            x = x + mx * dt + sx * dW;
            y = y + my * dt + sy.dot(dW);
            if (!std::isfinite(y) || !x.allFinite()) {
                finite = false;
                break;
            }
        }
        PathOutcome& out = paths[i];
        out.x_T = x;
        out.y_T = y;
        out.finite = finite;
        out.shortfall = finite ? std::max(model.payoff_g(x) - y, 0.0) : 0.0;
        clamps[i] = clamp_count;
    });

    SimReport rep;
    rep.adversary = adversary.label();
    rep.n_paths = prm.n_paths;
    rep.n_steps = prm.n_steps;
    rep.seed = prm.seed;
    rep.t0 = prm.t0;
    rep.x0 = prm.x0;
    rep.y0 = y0;
    double sum = 0.0, sum2 = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        rep.clamped += clamps[i];
        if (!paths[i].finite) {
            ++rep.non_finite;
            continue;
        }
        sum += paths[i].shortfall;
        sum2 += paths[i].shortfall * paths[i].shortfall;
        rep.surplus.push_back(paths[i].y_T - model.payoff_g(paths[i].x_T));
        ++count;
    }
    if (count > 0) {
        rep.shortfall_mean = sum / static_cast<double>(count);
        double var = sum2 / static_cast<double>(count) - rep.shortfall_mean * rep.shortfall_mean;
        rep.shortfall_std_error = count > 1 ? std::sqrt(std::max(var, 0.0) / static_cast<double>(count - 1)) : 0.0;
    }
    std::sort(rep.surplus.begin(), rep.surplus.end());
    rep.paths = std::move(paths);
    return rep;
}

struct SuperhedgeParams {
    SimParams sim;
    double tol_sim = 0.02;
    double p_sim = 0.05;
    double switch_rate = 4.0;
};

struct SuperhedgeResult {
    bool passed = false;
    double y0 = 0.0;
    std::vector<SimReport> reports;  ///< constant per A-point, random, worst
};

/**
 * Plays the strategy from y0 = w(t0, x0) + margin against every constant
 * adversary, a piecewise-random one and the worst-case feedback from
 * `policy_source`. PASS iff every run has shortfall_prob(tol_sim) <= p_sim
 * and no non-finite path.
 */
inline SuperhedgeResult superhedge_check(const ModelSpec& model, const StrategyMap& strategy,
                                         const ValueSurface& policy_source, double margin,
                                         const SuperhedgeParams& prm) {
    if (!(margin >= 0.0)) throw ConfigError("margin must be nonnegative");
    SuperhedgeResult res;
    res.y0 = strategy.value(prm.sim.t0, prm.sim.x0) + margin;
    std::vector<Adversary> advs;
    for (std::size_t i = 0; i < model.A_points.size(); ++i)
        advs.push_back(Adversary::constant(static_cast<int>(i)));
    advs.push_back(Adversary::random(prm.switch_rate));
    advs.push_back(Adversary::worst(policy_source));
    res.passed = true;
    for (const auto& a : advs) {
        SimReport r = simulate(model, strategy, a, prm.sim, res.y0);
        if (r.shortfall_prob(prm.tol_sim) > prm.p_sim || r.non_finite > 0) res.passed = false;
        res.reports.push_back(std::move(r));
    }
    return res;
}

/// Counts of surplus values per bin of width `bin` (for histograms).
struct Histogram {
    double lo = 0.0;
    double bin = 0.0;
    std::vector<std::size_t> counts;
};

inline Histogram shortfall_histogram(const SimReport& r, int bins = 40) {
    Histogram h;
    if (r.surplus.empty() || bins < 1) return h;
    double lo = r.surplus.front(), hi = r.surplus.back();
    if (hi <= lo) hi = lo + 1.0;
    h.lo = lo;
    h.bin = (hi - lo) / bins;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    for (double s : r.surplus) {
        int b = std::min(bins - 1, static_cast<int>((s - lo) / h.bin));
        ++h.counts[static_cast<std::size_t>(b)];
    }
    return h;
}

}  // namespace hedgegame
