#pragma once

#include "hedgegame/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hedgegame {

/**
 * Named terminal payoffs written on the arithmetic mean of the prices
 * exp(x_i), where x is the log-price state. `scale` multiplies the whole
 * payoff, so scale = -1 gives the short (concave) counterpart.
 */
struct Payoff {
    enum class Kind { call, put, call_spread, digital_smoothed, constant };

    Kind kind = Kind::constant;
    double strike = 1.0;
    double cap = 1.4;     ///< upper strike of call_spread
    double width = 0.1;   ///< ramp width of digital_smoothed
    double level = 1.0;   ///< value of constant
    double scale = 1.0;

    double operator()(const Vec& x) const {
        double price = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) price += std::exp(x(i));
        price /= static_cast<double>(std::max<Eigen::Index>(1, x.size()));
        return scale * of_price(price);
    }

    double of_price(double s) const {
        switch (kind) {
            case Kind::call: return std::max(s - strike, 0.0);
            case Kind::put: return std::max(strike - s, 0.0);
            case Kind::call_spread:
                return std::max(s - strike, 0.0) - std::max(s - cap, 0.0);
            case Kind::digital_smoothed: {
                double lo = strike - 0.5 * width;
                return std::clamp((s - lo) / width, 0.0, 1.0);
            }
            case Kind::constant: return level;
        }
        return 0.0;
    }

    /// Bounded on all of R^d (the call is bounded only on a truncated domain).
    bool bounded() const { return kind != Kind::call || scale == 0.0; }
};

inline std::string to_string(Payoff::Kind k) {
    switch (k) {
        case Payoff::Kind::call: return "call";
        case Payoff::Kind::put: return "put";
        case Payoff::Kind::call_spread: return "call_spread";
        case Payoff::Kind::digital_smoothed: return "digital_smoothed";
        case Payoff::Kind::constant: return "constant";
    }
    return "constant";
}

inline Payoff::Kind payoff_kind_from(const std::string& s) {
    if (s == "call") return Payoff::Kind::call;
    if (s == "put") return Payoff::Kind::put;
    if (s == "call_spread") return Payoff::Kind::call_spread;
    if (s == "digital_smoothed") return Payoff::Kind::digital_smoothed;
    if (s == "constant") return Payoff::Kind::constant;
    throw ConfigError("unknown payoff type '" + s + "'");
}

}  // namespace hedgegame
