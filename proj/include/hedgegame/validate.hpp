#pragma once

/**
 * @file validate.hpp
 * @brief Randomized numerical checks of the standing assumptions on a model.
 *
 * Each check samples (t, x, y, z, a) in the model's sample box and records
 * the worst empirical constant together with the point that produced it.
 * Failures are reported, never thrown; callers decide what to do.
 */

#include "hedgegame/model.hpp"
#include "hedgegame/rng.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace hedgegame {

struct AssumptionCheck {
    std::string id;
    std::string description;
    double worst = 0.0;   ///< worst empirical constant (or defect)
    double limit = 0.0;
    bool lower_bound = false;  ///< true when worst must be >= limit
    bool passed = true;
    std::string witness;
};

struct ValidationReport {
    std::vector<AssumptionCheck> checks;
    std::size_t samples = 0;
    std::uint64_t seed = 0;

    bool passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
    const AssumptionCheck* find(const std::string& id) const {
        for (const auto& c : checks)
            if (c.id == id) return &c;
        return nullptr;
    }
    std::vector<const AssumptionCheck*> failures() const {
        std::vector<const AssumptionCheck*> out;
        for (const auto& c : checks)
            if (!c.passed) out.push_back(&c);
        return out;
    }
    std::string summary() const {
        std::ostringstream os;
        for (const auto* c : failures())
            os << c->id << ": worst " << c->worst << (c->lower_bound ? " < " : " > ") << c->limit
               << " at " << c->witness << "; ";
        return os.str();
    }
};

namespace detail {

class CheckAccumulator {
public:
    CheckAccumulator(std::string id, std::string description, double limit, bool lower_bound)
        : check_{std::move(id), std::move(description),
                 lower_bound ? std::numeric_limits<double>::infinity() : 0.0, limit, lower_bound,
                 true, ""} {}

    void record(double value, const std::string& where) {
        if (!std::isfinite(value)) {
            check_.worst = value;
            check_.witness = where;
            nonfinite_ = true;
            return;
        }
        if (nonfinite_) return;
        bool worse = check_.lower_bound ? value < check_.worst : value > check_.worst;
        if (worse) {
            check_.worst = value;
            check_.witness = where;
        }
    }

    AssumptionCheck finish() {
        if (check_.lower_bound && std::isinf(check_.worst) && check_.worst > 0) check_.worst = 0.0;
        check_.passed = !nonfinite_ && (check_.lower_bound ? check_.worst >= check_.limit
                                                           : check_.worst <= check_.limit);
        return check_;
    }

private:
    AssumptionCheck check_;
    bool nonfinite_ = false;
};

}  // namespace detail

/**
 * Runs every check with `sample_count` random sample pairs drawn from a
 * stream derived from `rng_seed`.
 */
inline ValidationReport validate_assumptions(const ModelSpec& model, std::size_t sample_count,
                                             std::uint64_t rng_seed) {
    if (sample_count < 1) throw ConfigError("sample_count must be at least 1");
    if (model.A_points.empty()) throw ModelError("A_points must be nonempty");
    const int d = model.dim;
    const double K = model.lipschitz_K;
    Vec lo = model.sample_lo.size() == d ? model.sample_lo : Vec::Constant(d, -2.0);
    Vec hi = model.sample_hi.size() == d ? model.sample_hi : Vec::Constant(d, 2.0);

    Engine eng = make_stream({rng_seed, kStreamValidation});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, model.A_points.size() - 1);
    auto draw_x = [&] {
        Vec x(d);
        for (int j = 0; j < d; ++j) x(j) = lo(j) + (hi(j) - lo(j)) * unit(eng);
        return x;
    };
    auto draw_box = [&](double r) {
        Vec v(d);
        for (int j = 0; j < d; ++j) v(j) = -r + 2.0 * r * unit(eng);
        return v;
    };
    auto draw_t = [&] { return model.horizon_T * unit(eng); };
    auto draw_y = [&] { return -3.0 + 6.0 * unit(eng); };

    detail::CheckAccumulator bound("coefficient_bound", "|mu_X| + |sigma_X| <= K", K, false);
    detail::CheckAccumulator lip_x("lipschitz_x", "mu_X, sigma_X Lipschitz in x with constant K",
                                   K, false);
    detail::CheckAccumulator lip_y("lipschitz_y", "mu_Y, sigma_Y Lipschitz in y with constant K",
                                   K, false);
    detail::CheckAccumulator inversion("inversion", "sigma_Y(u_hat(z)) = z", 1e-10, false);
    detail::CheckAccumulator ratio("drift_over_diffusion",
                                   "|mu_Y| / (1 + |sigma_Y|) locally bounded", 1e6, false);
    detail::CheckAccumulator growth("linear_growth",
                                    "|mu_Y_hat(y, z)| <= K (1 + |y| + |z|)", K, false);
    detail::CheckAccumulator concave("concavity",
                                     "(y, p) -> L^a(y, 0, p, 0) midpoint concave", -1e-9, true);
    detail::CheckAccumulator g_bound("payoff_bounded", "payoff bounded on the sample box",
                                     std::numeric_limits<double>::max(), false);
    detail::CheckAccumulator g_lip("payoff_lipschitz", "payoff Lipschitz on the sample box",
                                   std::numeric_limits<double>::max(), false);

    auto op_norm = [](const Mat& m) {
        Eigen::JacobiSVD<Mat> svd(m);
        return svd.singularValues()(0);
    };
    auto trace_free_L = [&](double t, const Vec& x, double y, const Vec& p, const Vec& a) {
        Mat s = model.sigma_X(t, x, a);
        return mu_Y_hat(t, x, y, Vec(s.transpose() * p), a, model) - model.mu_X(t, x, a).dot(p);
    };

    for (std::size_t i = 0; i < sample_count; ++i) {
        double t = draw_t();
        Vec x = draw_x(), x2 = draw_x();
        const Vec& a = model.A_points[pick(eng)];
        double y = draw_y(), y2 = draw_y();
        Vec z = draw_box(2.0), u = draw_box(2.0);
        std::string where = describe_point(t, x, a);

        Vec mu = model.mu_X(t, x, a), mu2 = model.mu_X(t, x2, a);
        Mat sig = model.sigma_X(t, x, a), sig2 = model.sigma_X(t, x2, a);
        bound.record(mu.norm() + op_norm(sig), where);
        double dx = (x - x2).norm();
        if (dx > 1e-12)
            lip_x.record(((mu - mu2).norm() + op_norm(sig - sig2)) / dx, where);

        double dy = std::abs(y - y2);
        if (dy > 1e-12) {
            double dmu = std::abs(model.mu_Y(t, x, y, u, a) - model.mu_Y(t, x, y2, u, a));
            double dsig = (model.sigma_Y(t, x, y, u, a) - model.sigma_Y(t, x, y2, u, a)).norm();
            lip_y.record((dmu + dsig) / dy, where);
        }

        Vec uz = model.u_hat(t, x, y, z, a);
        inversion.record((model.sigma_Y(t, x, y, uz, a) - z).norm(), where);

        ratio.record(std::abs(model.mu_Y(t, x, y, u, a)) /
                         (1.0 + model.sigma_Y(t, x, y, u, a).norm()),
                     where);
        growth.record(std::abs(mu_Y_hat(t, x, y, z, a, model)) / (1.0 + std::abs(y) + z.norm()),
                      where);

        // Midpoint concavity on a random pair, and on a pair straddling the
        // kink of the wealth drift in y at the same p.
        Vec p = draw_box(2.0), p2 = draw_box(2.0);
        auto defect = [&](double ya, const Vec& pa, double yb, const Vec& pb) {
            double mid = trace_free_L(t, x, 0.5 * (ya + yb), Vec(0.5 * (pa + pb)), a);
            return mid - 0.5 * (trace_free_L(t, x, ya, pa, a) + trace_free_L(t, x, yb, pb, a));
        };
        concave.record(defect(y, p, y2, p2), where);
        double position = model.u_hat(t, x, y, Vec(sig.transpose() * p), a).sum();
        double spread = 0.05 + unit(eng);
        concave.record(defect(position + spread, p, position - spread, p), where);

        double g = model.payoff_g(x);
        g_bound.record(std::abs(g), describe_point(model.horizon_T, x, a));
        if (dx > 1e-12)
            g_lip.record(std::abs(g - model.payoff_g(x2)) / dx,
                         describe_point(model.horizon_T, x, a));
    }

    ValidationReport report;
    report.samples = sample_count;
    report.seed = rng_seed;
    for (auto* acc : {&bound, &lip_x, &lip_y, &inversion, &ratio, &growth, &concave, &g_bound,
                      &g_lip})
        report.checks.push_back(acc->finish());

    if (model.finance) {
        const FinanceSpec& f = *model.finance;
        detail::CheckAccumulator order("rate_order", "r_borrow >= r_lend", 0.0, true);
        detail::CheckAccumulator lam("lambda_bounded", "lambda^b, lambda^l bounded", 1e6, false);
        detail::CheckAccumulator lam_x("lambda_x_independent", "lambda^b, lambda^l free of x",
                                       1e-10, false);
        auto lambdas = [&](double t, const Vec& x, const Vec& a) {
            Mat s = f.sigma(t, x, a);
            Vec drift = f.mu(t, x, a) + 0.5 * gamma_of(s);
            Eigen::FullPivLU<Mat> lu(s);
            Vec one = Vec::Ones(d);
            Vec lb = lu.solve(Vec(drift - f.r_borrow(t, x, a) * one));
            Vec ll = lu.solve(Vec(drift - f.r_lend(t, x, a) * one));
            return std::pair<Vec, Vec>{lb, ll};
        };
        for (std::size_t i = 0; i < sample_count; ++i) {
            double t = draw_t();
            Vec x = draw_x(), x2 = draw_x();
            const Vec& a = model.A_points[pick(eng)];
            std::string where = describe_point(t, x, a);
            order.record(f.r_borrow(t, x, a) - f.r_lend(t, x, a), where);
            auto [lb, ll] = lambdas(t, x, a);
            auto [lb2, ll2] = lambdas(t, x2, a);
            lam.record(std::max(lb.norm(), ll.norm()), where);
            lam_x.record(std::max((lb - lb2).norm(), (ll - ll2).norm()), where);
        }
        report.checks.push_back(order.finish());
        report.checks.push_back(lam.finish());
        report.checks.push_back(lam_x.finish());
    }
    return report;
}

}  // namespace hedgegame
