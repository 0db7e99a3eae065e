#pragma once

// Model and grid builders shared by the test suites and the acceptance run.

#include "hedgegame/coefficients.hpp"
#include "hedgegame/grid.hpp"
#include "hedgegame/model.hpp"

#include <cmath>
#include <vector>

namespace fixture {

using namespace hedgegame;

inline Payoff call(double strike = 1.0, double scale = 1.0) {
    Payoff p;
    p.kind = Payoff::Kind::call;
    p.strike = strike;
    p.scale = scale;
    return p;
}

inline Payoff call_spread(double k1 = 1.0, double k2 = 1.4) {
    Payoff p;
    p.kind = Payoff::Kind::call_spread;
    p.strike = k1;
    p.cap = k2;
    return p;
}

inline Payoff constant(double c) {
    Payoff p;
    p.kind = Payoff::Kind::constant;
    p.level = c;
    return p;
}

/// 1-d finance model with sigma(a) = a over the given A-points.
inline ModelSpec finance_1d(std::vector<double> sigmas, Payoff g, double r_lend = 0.0,
                            double r_borrow = 0.0, double mu = 0.0, double T = 1.0) {
    FinanceParams fp;
    fp.dim = 1;
    fp.mu = CoefficientSpec::constant(mu);
    fp.sigma = CoefficientSpec::affine_in_a();
    fp.r_lend = CoefficientSpec::constant(r_lend);
    fp.r_borrow = CoefficientSpec::constant(r_borrow);
    fp.payoff = g;
    for (double s : sigmas) fp.A_points.push_back(vec_of({s}));
    fp.horizon_T = T;
    fp.lipschitz_K = 1.0;
    return make_finance_preset(fp);
}

inline ModelSpec black_scholes(Payoff g, double sigma = 0.2) { return finance_1d({sigma}, g); }

inline ModelSpec uncertain_vol(Payoff g, double lo = 0.1, double hi = 0.3) {
    return finance_1d({lo, hi}, g);
}

/**
 * Single-rate model written out directly: mu_Y = u (mu + sigma^2/2) + r (y - u),
 * sigma_Y = sigma u. Used as the fixed-rate reference.
 */
inline ModelSpec single_rate_1d(double sigma, double r, Payoff g, double mu = 0.0) {
    ModelSpec m;
    m.dim = 1;
    m.mu_X = [mu](double, const Vec&, const Vec&) { return vec_of({mu}); };
    m.sigma_X = [](double, const Vec&, const Vec& a) {
        Mat s(1, 1);
        s(0, 0) = a(0);
        return s;
    };
    m.mu_Y = [mu, r](double, const Vec&, double y, const Vec& u, const Vec& a) {
        Vec drift = vec_of({mu + 0.5 * a(0) * a(0)});
        return u.dot(drift) + r * (y - u.sum());
    };
    m.sigma_Y = [](double, const Vec&, double, const Vec& u, const Vec& a) {
        return Vec(vec_of({a(0) * u(0)}));
    };
    m.u_hat = [](double, const Vec&, double, const Vec& z, const Vec& a) {
        return Vec(vec_of({z(0) / a(0)}));
    };
    m.payoff_g = [g](const Vec& x) { return g(x); };
    m.A_points = {vec_of({sigma})};
    m.horizon_T = 1.0;
    m.lipschitz_K = 1.0;
    m.riskless_rate = [r](double, const Vec&) { return r; };
    m.sample_lo = Vec::Constant(1, -2.0);
    m.sample_hi = Vec::Constant(1, 2.0);
    return m;
}

/// Two-asset basket (average price) with diagonal vol, singleton A.
inline ModelSpec two_asset_basket(Payoff g = call_spread(), double s1 = 0.2, double s2 = 0.25) {
    FinanceParams fp;
    fp.dim = 2;
    fp.mu = CoefficientSpec::constant(0.0);
    fp.sigma = CoefficientSpec::affine_in_a();
    fp.payoff = g;
    fp.A_points = {vec_of({s1, s2})};
    return make_finance_preset(fp);
}

/// Symmetric log-price grid of `width` standard deviations at vol sigma_max.
inline GridSpec log_grid(double sigma_max, int x_steps = 200, int t_steps = 400,
                         double width = 6.0, double T = 1.0) {
    double half = width * sigma_max * std::sqrt(T);
    GridSpec g;
    g.t_steps = t_steps;
    g.x_min = vec_of({-half});
    g.x_max = vec_of({half});
    g.x_steps = {x_steps};
    return g;
}

}  // namespace fixture
