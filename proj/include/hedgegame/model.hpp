#pragma once

/**
 * @file model.hpp
 * @brief Coefficients of the controlled state/wealth system and the
 *        pointwise operators of its terminal-value HJB equation.
 *
 * The state X (dimension d) and the wealth Y follow
 *
 *   dX = mu_X(t,X,a) dt + sigma_X(t,X,a) dW
 *   dY = mu_Y(t,X,Y,u,a) dt + sigma_Y(t,X,Y,u,a)^T dW
 *
 * with a chosen by the adversary from the finite set A_points and u by the
 * hedger. u_hat inverts u -> sigma_Y, so the hedger's control is determined
 * by the diffusion it wants to match.
 */

#include "hedgegame/payoff.hpp"
#include "hedgegame/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

namespace hedgegame {

using DriftX = std::function<Vec(double t, const Vec& x, const Vec& a)>;
using DiffusionX = std::function<Mat(double t, const Vec& x, const Vec& a)>;
using DriftY =
    std::function<double(double t, const Vec& x, double y, const Vec& u, const Vec& a)>;
using DiffusionY =
    std::function<Vec(double t, const Vec& x, double y, const Vec& u, const Vec& a)>;
using ControlInverse =
    std::function<Vec(double t, const Vec& x, double y, const Vec& z, const Vec& a)>;
using ScalarField = std::function<double(double t, const Vec& x, const Vec& a)>;

/// Market coefficients in log-price coordinates.
struct FinanceSpec {
    DriftX mu;
    DiffusionX sigma;
    ScalarField r_lend;
    ScalarField r_borrow;
};

struct ModelSpec {
    int dim = 1;
    DriftX mu_X;
    DiffusionX sigma_X;
    DriftY mu_Y;
    DiffusionY sigma_Y;
    ControlInverse u_hat;
    std::function<double(const Vec& x)> payoff_g;
    std::vector<Vec> A_points;
    double horizon_T = 1.0;
    double lipschitz_K = 1.0;

    std::optional<FinanceSpec> finance;
    std::optional<Payoff> payoff;  ///< named payoff, when g came from one
    /// Riskless discount rate used by the clamp_payoff boundary mode.
    std::function<double(double t, const Vec& x)> riskless_rate;

    /// Box sampled by validate_assumptions.
    Vec sample_lo;
    Vec sample_hi;

    std::uint64_t digest = 0;  ///< hash of the defining config
};

/// Arguments (y, q, p, M) of the operators: value, time derivative,
/// gradient and Hessian.
struct DerivativePack {
    double y = 0.0;
    double q = 0.0;
    Vec p;
    Mat M;

    static DerivativePack zero(int d) { return {0.0, 0.0, Vec::Zero(d), Mat::Zero(d, d)}; }
};

inline std::string describe_point(double t, const Vec& x, const Vec& a) {
    std::ostringstream os;
    os << "(t=" << t << ", x=[";
    for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? "," : "") << x(i);
    os << "], a=[";
    for (Eigen::Index i = 0; i < a.size(); ++i) os << (i ? "," : "") << a(i);
    os << "])";
    return os.str();
}

/// [s]^+ r_lend - [s]^- r_borrow with s = y - sum(u).
inline double rho_value(double y, double position, double r_lend, double r_borrow) {
    double cash = y - position;
    return cash >= 0.0 ? cash * r_lend : cash * r_borrow;
}

inline double rho(double t, const Vec& x, double y, const Vec& u, const Vec& a,
                  const FinanceSpec& finance) {
    return rho_value(y, u.sum(), finance.r_lend(t, x, a), finance.r_borrow(t, x, a));
}

/// Diagonal of sigma sigma^T.
inline Vec gamma_of(const Mat& sigma) { return (sigma * sigma.transpose()).diagonal(); }

/// The unique u with sigma^T u = z, i.e. u = (sigma^{-1})^T z.
inline Vec u_hat_finance(double t, const Vec& x, double /*y*/, const Vec& z, const Vec& a,
                         const FinanceSpec& finance) {
    Mat s = finance.sigma(t, x, a);
    const Eigen::Index d = s.rows();
    double scale = s.cwiseAbs().maxCoeff();
    double det = d == 1 ? s(0, 0) : s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
    if (scale == 0.0 || !(std::abs(det) > 1e-14 * (d == 1 ? scale : scale * scale)))
        throw ModelError("singular volatility matrix at " + describe_point(t, x, a));
    Vec u(d);
    if (d == 1) {
        u(0) = z(0) / s(0, 0);
    } else {
        // Solve s^T u = z by Cramer's rule.
        u(0) = (s(1, 1) * z(0) - s(1, 0) * z(1)) / det;
        u(1) = (s(0, 0) * z(1) - s(0, 1) * z(0)) / det;
    }
    return u;
}

/// mu_Y evaluated at the control that produces diffusion z.
inline double mu_Y_hat(double t, const Vec& x, double y, const Vec& z, const Vec& a,
                       const ModelSpec& model) {
    return model.mu_Y(t, x, y, model.u_hat(t, x, y, z, a), a);
}

/**
 * Assembles the generic model of a market with log-prices X, amounts u held
 * in each stock, and separate lending/borrowing rates:
 *   mu_Y = u^T (mu + gamma/2) + rho,  sigma_Y = sigma^T u.
 */
inline ModelSpec make_finance_model(FinanceSpec finance, std::function<double(const Vec&)> g,
                                    std::vector<Vec> A_points, double horizon_T,
                                    double lipschitz_K, int dim) {
    ModelSpec m;
    m.dim = dim;
    m.mu_X = finance.mu;
    m.sigma_X = finance.sigma;
    m.mu_Y = [f = finance](double t, const Vec& x, double y, const Vec& u, const Vec& a) {
        Mat s = f.sigma(t, x, a);
        Vec drift = f.mu(t, x, a) + 0.5 * gamma_of(s);
        return u.dot(drift) + rho(t, x, y, u, a, f);
    };
    m.sigma_Y = [f = finance](double t, const Vec& x, double, const Vec& u, const Vec& a) {
        return Vec(f.sigma(t, x, a).transpose() * u);
    };
    m.u_hat = [f = finance](double t, const Vec& x, double y, const Vec& z, const Vec& a) {
        return u_hat_finance(t, x, y, z, a, f);
    };
    m.payoff_g = std::move(g);
    m.A_points = std::move(A_points);
    m.horizon_T = horizon_T;
    m.lipschitz_K = lipschitz_K;
    m.riskless_rate = [f = finance, first = m.A_points.empty() ? Vec::Zero(dim) : m.A_points.front()](
                          double t, const Vec& x) { return f.r_lend(t, x, first); };
    m.sample_lo = Vec::Constant(dim, -2.0);
    m.sample_hi = Vec::Constant(dim, 2.0);
    m.finance = std::move(finance);
    return m;
}

/// Coefficients are extended constantly in time outside [0, T].
inline double clamp_time(double t, const ModelSpec& model) {
    return std::clamp(t, 0.0, model.horizon_T);
}

/**
 * Scheme form of one branch of the operator:
 *   F^a(y, p, M) = mu_X^T p + 1/2 Tr[sigma sigma^T M] - mu_Y_hat(y, sigma^T p),
 * so that L^a = -q - F^a.
 */
inline double hamiltonian(double t, const Vec& x, double y, const Vec& p, const Mat& M,
                          const Vec& a, const ModelSpec& model) {
    Mat s = model.sigma_X(t, x, a);
    Vec z = s.transpose() * p;
    return model.mu_X(t, x, a).dot(p) + 0.5 * (s * s.transpose()).cwiseProduct(M).sum() -
           mu_Y_hat(t, x, y, z, a, model);
}

inline double operator_La(double t, const Vec& x, const DerivativePack& pack, const Vec& a,
                          const ModelSpec& model) {
    return -pack.q - hamiltonian(t, x, pack.y, pack.p, pack.M, a, model);
}

struct OperatorValue {
    double value = 0.0;
    int argmin = 0;  ///< index into A_points, lowest index on ties
};

inline OperatorValue operator_L(double t, const Vec& x, const DerivativePack& pack,
                                const ModelSpec& model) {
    OperatorValue best{std::numeric_limits<double>::infinity(), 0};
    for (std::size_t i = 0; i < model.A_points.size(); ++i) {
        double v = operator_La(t, x, pack, model.A_points[i], model);
        if (v < best.value) best = {v, static_cast<int>(i)};
    }
    return best;
}

/// Shift b = (b_t, b_x) of the base point (t, x).
struct Shake {
    double dt = 0.0;
    Vec dx;
};

/**
 * Discretization of the closed ball of radius eps in R^{1+d}: the lattice
 * {-eps, 0, eps}^{1+d} intersected with the ball, which is the origin plus
 * the 2(1+d) axis points. eps = 0 yields the origin only.
 */
inline std::vector<Shake> shake_lattice(double eps, int dim) {
    std::vector<Shake> out{{0.0, Vec::Zero(dim)}};
    if (eps <= 0.0) return out;
    for (double s : {-eps, eps}) out.push_back({s, Vec::Zero(dim)});
    for (int j = 0; j < dim; ++j) {
        for (double s : {-eps, eps}) {
            Vec dx = Vec::Zero(dim);
            dx(j) = s;
            out.push_back({0.0, dx});
        }
    }
    return out;
}

inline double operator_H_eps(double t, const Vec& x, const DerivativePack& pack,
                             const std::vector<Shake>& shake_points, const ModelSpec& model) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : shake_points) {
        double ts = clamp_time(t + b.dt, model);
        best = std::min(best, operator_L(ts, x + b.dx, pack, model).value);
    }
    return best;
}

/// As above, after checking that every shake lies in the closed eps-ball.
inline double operator_H_eps(double t, const Vec& x, const DerivativePack& pack, double eps,
                             const std::vector<Shake>& shake_points, const ModelSpec& model) {
    for (const auto& b : shake_points) {
        double r2 = b.dt * b.dt + b.dx.squaredNorm();
        if (r2 > eps * eps * (1.0 + 1e-12) + 1e-300)
            throw ModelError("shake point outside the closed eps-ball");
    }
    return operator_H_eps(t, x, pack, shake_points, model);
}

}  // namespace hedgegame
