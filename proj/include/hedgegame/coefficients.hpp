#pragma once

/**
 * @file coefficients.hpp
 * @brief Named built-in coefficient functions for the finance preset.
 *
 *  constant       value (scalar broadcast, or per-axis list)
 *  affine_in_a    offset + scale * a_j           (axis j; scalars use a_0)
 *  modulated_in_x scale * a_j * (1 + amplitude * sin(frequency * x_j))
 *
 * Matrix-valued coefficients are diagonal.
 */

#include "hedgegame/model.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace hedgegame {

struct CoefficientSpec {
    enum class Kind { constant, affine_in_a, modulated_in_x };
    Kind kind = Kind::constant;
    std::vector<double> value{0.0};
    double offset = 0.0;
    double scale = 1.0;
    double amplitude = 0.1;
    double frequency = 1.0;

    static CoefficientSpec constant(double v) { return {Kind::constant, {v}}; }
    static CoefficientSpec affine_in_a(double scale = 1.0, double offset = 0.0) {
        CoefficientSpec c;
        c.kind = Kind::affine_in_a;
        c.scale = scale;
        c.offset = offset;
        return c;
    }
    static CoefficientSpec modulated_in_x(double amplitude, double frequency = 1.0,
                                          double scale = 1.0) {
        CoefficientSpec c;
        c.kind = Kind::modulated_in_x;
        c.amplitude = amplitude;
        c.frequency = frequency;
        c.scale = scale;
        return c;
    }

    /// Component j at (x, a).
    double component(int j, const Vec& x, const Vec& a) const {
        switch (kind) {
            case Kind::constant:
                return value.size() == 1 ? value[0] : value.at(static_cast<std::size_t>(j));
            case Kind::affine_in_a: return offset + scale * a(std::min<Eigen::Index>(j, a.size() - 1));
            case Kind::modulated_in_x:
                return scale * a(std::min<Eigen::Index>(j, a.size() - 1)) *
                       (1.0 + amplitude * std::sin(frequency * x(j)));
        }
        return 0.0;
    }

    bool depends_on_x() const { return kind == Kind::modulated_in_x; }
};

inline std::string to_string(CoefficientSpec::Kind k) {
    switch (k) {
        case CoefficientSpec::Kind::constant: return "constant";
        case CoefficientSpec::Kind::affine_in_a: return "affine_in_a";
        case CoefficientSpec::Kind::modulated_in_x: return "modulated_in_x";
    }
    return "constant";
}

inline DriftX vector_field(CoefficientSpec c, int d) {
    return [c, d](double, const Vec& x, const Vec& a) {
        Vec v(d);
        for (int j = 0; j < d; ++j) v(j) = c.component(j, x, a);
        return v;
    };
}

inline DiffusionX diagonal_field(CoefficientSpec c, int d) {
    return [c, d](double, const Vec& x, const Vec& a) {
        Mat m = Mat::Zero(d, d);
        for (int j = 0; j < d; ++j) m(j, j) = c.component(j, x, a);
        return m;
    };
}

inline ScalarField scalar_field(CoefficientSpec c) {
    return [c](double, const Vec& x, const Vec& a) { return c.component(0, x, a); };
}

/// Parameters of the finance preset in built-in form.
struct FinanceParams {
    int dim = 1;
    CoefficientSpec mu = CoefficientSpec::constant(0.0);
    CoefficientSpec sigma = CoefficientSpec::affine_in_a();
    CoefficientSpec r_lend = CoefficientSpec::constant(0.0);
    CoefficientSpec r_borrow = CoefficientSpec::constant(0.0);
    Payoff payoff;
    std::vector<Vec> A_points;
    double horizon_T = 1.0;
    double lipschitz_K = 1.0;
};

inline FinanceSpec finance_spec(const FinanceParams& p) {
    return {vector_field(p.mu, p.dim), diagonal_field(p.sigma, p.dim), scalar_field(p.r_lend),
            scalar_field(p.r_borrow)};
}

inline ModelSpec make_finance_preset(const FinanceParams& p) {
    Payoff g = p.payoff;
    ModelSpec m = make_finance_model(finance_spec(p), [g](const Vec& x) { return g(x); },
                                     p.A_points, p.horizon_T, p.lipschitz_K, p.dim);
    m.payoff = g;
    return m;
}

}  // namespace hedgegame
