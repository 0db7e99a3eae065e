#pragma once

/**
 * @file config.hpp
 * @brief Run configuration: strict JSON schema, dotted overrides, model build.
 *
 * Sections: model, grid, query, regularize, sim, dual, output. Every key is
 * optional except model.A_points and the grid bounds; unknown keys are
 * rejected. to_json writes every field, so parse -> serialize -> parse is
 * the identity.
 */

#include "hedgegame/coefficients.hpp"
#include "hedgegame/grid.hpp"
#include "hedgegame/model.hpp"
#include "hedgegame/payoff.hpp"
#include "hedgegame/regularize.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace hedgegame {

using json = nlohmann::json;

/// Piecewise-linear sigma(x, a) for d = 1: one row of node values per A-point.
struct TabulatedConfig {
    std::vector<double> x_nodes;
    std::vector<std::vector<double>> sigma;
    std::vector<double> mu;  ///< empty = zero drift
};

struct ModelConfig {
    std::string kind = "finance";  ///< "finance" | "custom-tabulated"
    int dim = 1;
    std::vector<std::vector<double>> A_points;
    double horizon_T = 1.0;
    double lipschitz_K = 1.0;
    CoefficientSpec mu = CoefficientSpec::constant(0.0);
    CoefficientSpec sigma = CoefficientSpec::affine_in_a();
    CoefficientSpec r_lend = CoefficientSpec::constant(0.0);
    CoefficientSpec r_borrow = CoefficientSpec::constant(0.0);
    Payoff payoff;
    TabulatedConfig tabulated;
};

struct QueryConfig {
    double t0 = 0.0;
    std::vector<double> x0;  ///< empty = origin
};

struct RegularizeConfig {
    std::vector<double> eps_ladder{0.2, 0.1, 0.05, 0.025, 0.0125};
    double eta = 0.1;
    double tol = 1e-3;
    double B_t_lo = 0.0, B_t_hi = 1.0;
    std::vector<double> B_x_lo, B_x_hi;  ///< empty = central half of the grid
    std::string phi = "v-plus-margin:0.1";
    int check_t = 100;
    int check_x = 50;
    int delta_halvings = 2;
    std::vector<double> weights;  ///< inf-convolution metric (t, x...); empty = 1
};

struct SimConfig {
    int paths = 10000;
    int steps = 400;
    std::uint64_t seed = 1;
    double tol_sim = 0.02;
    double p_sim = 0.05;
    double margin = 0.0;
    double switch_rate = 4.0;
    std::string adversary = "all";  ///< all | constant:<i> | random:<rate> | worst
    std::string y0 = "auto";        ///< auto | <number>
    std::string surface;            ///< optional HJBSURF1 file; empty = solve
};

struct DualConfig {
    int knots = 4;
    int degree = 2;
    int paths = 100000;
    double eps = 0.0;
    std::uint64_t seed = 1;
    int steps = 32;
    int bundles = 0;
    std::string gamma_grid = "full";  ///< full | a-only
    std::optional<double> mid;
};

struct OutputConfig {
    std::string directory = "out";
    std::vector<std::string> formats{"csv", "bin", "json", "tsv"};

    bool wants(const std::string& f) const {
        for (const auto& s : formats)
            if (s == f) return true;
        return false;
    }
};

struct RunConfig {
    ModelConfig model;
    GridSpec grid;
    QueryConfig query;
    RegularizeConfig regularize;
    SimConfig sim;
    DualConfig dual;
    OutputConfig output;

    Vec x0() const {
        if (query.x0.empty()) return Vec::Zero(model.dim);
        return Eigen::Map<const Vec>(query.x0.data(), static_cast<Eigen::Index>(query.x0.size()));
    }
};

namespace detail {

/// Reads keys of one JSON object and rejects the ones nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    template <class T>
    void require(const char* key, T& out) {
        if (!j_.contains(key)) throw ConfigError("missing required key " + path_ + "." + key);
        get(key, out);
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }
    const json& at(const char* key) const { return j_.at(key); }
    std::string child(const char* key) const { return path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown key " + path_ + "." + it.key());
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline CoefficientSpec coefficient_from_json(const json& j, const std::string& path) {
    Section s(j, path);
    std::string type = "constant";
    s.get("type", type);
    CoefficientSpec c;
    if (type == "constant") {
        c.kind = CoefficientSpec::Kind::constant;
        if (s.has("value")) {
            const json& v = s.at("value");
            if (v.is_array()) {
                c.value = v.get<std::vector<double>>();
            } else if (v.is_number()) {
                c.value = {v.get<double>()};
            } else {
                throw ConfigError(path + ".value must be a number or an array");
            }
            if (c.value.empty()) throw ConfigError(path + ".value must be nonempty");
        }
    } else if (type == "affine_in_a") {
        c.kind = CoefficientSpec::Kind::affine_in_a;
        s.get("scale", c.scale);
        s.get("offset", c.offset);
    } else if (type == "modulated_in_x") {
        c.kind = CoefficientSpec::Kind::modulated_in_x;
        s.get("scale", c.scale);
        s.get("amplitude", c.amplitude);
        s.get("frequency", c.frequency);
    } else {
        throw ConfigError(path + ".type: unknown coefficient type '" + type + "'");
    }
    s.finish();
    return c;
}

inline json coefficient_to_json(const CoefficientSpec& c) {
    json j;
    j["type"] = to_string(c.kind);
    switch (c.kind) {
        case CoefficientSpec::Kind::constant:
            if (c.value.size() == 1) {
                j["value"] = c.value[0];
            } else {
                j["value"] = c.value;
            }
            break;
        case CoefficientSpec::Kind::affine_in_a:
            j["scale"] = c.scale;
            j["offset"] = c.offset;
            break;
        case CoefficientSpec::Kind::modulated_in_x:
            j["scale"] = c.scale;
            j["amplitude"] = c.amplitude;
            j["frequency"] = c.frequency;
            break;
    }
    return j;
}

inline Payoff payoff_from_json(const json& j, const std::string& path) {
    Section s(j, path);
    Payoff p;
    std::string type = "constant";
    s.require("type", type);
    p.kind = payoff_kind_from(type);
    s.get("strike", p.strike);
    s.get("cap", p.cap);
    s.get("width", p.width);
    s.get("level", p.level);
    s.get("scale", p.scale);
    s.finish();
    return p;
}

inline json payoff_to_json(const Payoff& p) {
    return {{"type", to_string(p.kind)}, {"strike", p.strike}, {"cap", p.cap},
            {"width", p.width},          {"level", p.level},   {"scale", p.scale}};
}

inline const char* boundary_name(BoundaryMode m) {
    return m == BoundaryMode::clamp_payoff ? "clamp_payoff" : "extrapolate_linear";
}

inline Vec to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> from_vec(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

inline RunConfig config_from_json(const json& root) {
    RunConfig c;
    detail::Section top(root, "config");

    if (!top.has("model")) throw ConfigError("missing required section model");
    {
        detail::Section s(top.at("model"), "model");
        auto& m = c.model;
        s.get("kind", m.kind);
        if (m.kind != "finance" && m.kind != "custom-tabulated")
            throw ConfigError("model.kind must be 'finance' or 'custom-tabulated'");
        s.get("dim", m.dim);
        if (m.dim < 1 || m.dim > kMaxDim) throw ConfigError("model.dim must be 1 or 2");
        s.require("A_points", m.A_points);
        if (m.A_points.empty()) throw ConfigError("model.A_points must be nonempty");
        for (const auto& a : m.A_points)
            if (a.empty()) throw ConfigError("model.A_points entries must be nonempty");
        s.get("horizon_T", m.horizon_T);
        if (!(m.horizon_T > 0.0)) throw ConfigError("model.horizon_T must be positive");
        s.get("lipschitz_K", m.lipschitz_K);
        if (s.has("finance")) {
            detail::Section f(s.at("finance"), "model.finance");
            if (f.has("mu")) m.mu = detail::coefficient_from_json(f.at("mu"), "model.finance.mu");
            if (f.has("sigma")) m.sigma = detail::coefficient_from_json(f.at("sigma"), "model.finance.sigma");
            if (f.has("r_lend")) m.r_lend = detail::coefficient_from_json(f.at("r_lend"), "model.finance.r_lend");
            if (f.has("r_borrow"))
                m.r_borrow = detail::coefficient_from_json(f.at("r_borrow"), "model.finance.r_borrow");
            f.finish();
        }
        if (!s.has("payoff")) throw ConfigError("missing required key model.payoff");
        m.payoff = detail::payoff_from_json(s.at("payoff"), "model.payoff");
        if (s.has("tabulated")) {
            detail::Section t(s.at("tabulated"), "model.tabulated");
            t.require("x_nodes", m.tabulated.x_nodes);
            t.require("sigma", m.tabulated.sigma);
            t.get("mu", m.tabulated.mu);
            t.finish();
        }
        if (m.kind == "custom-tabulated") {
            const auto& tab = m.tabulated;
            if (m.dim != 1) throw ConfigError("custom-tabulated models are one-dimensional");
            if (tab.x_nodes.size() < 2) throw ConfigError("model.tabulated.x_nodes needs two or more nodes");
            for (std::size_t i = 1; i < tab.x_nodes.size(); ++i)
                if (!(tab.x_nodes[i] > tab.x_nodes[i - 1]))
                    throw ConfigError("model.tabulated.x_nodes must be increasing");
            if (tab.sigma.size() != m.A_points.size())
                throw ConfigError("model.tabulated.sigma needs one row per A-point");
            for (const auto& row : tab.sigma) {
                if (row.size() != tab.x_nodes.size())
                    throw ConfigError("model.tabulated.sigma rows must match x_nodes");
                for (double v : row)
                    if (!(v > 0.0)) throw ConfigError("model.tabulated.sigma must be positive");
            }
            if (!tab.mu.empty() && tab.mu.size() != tab.x_nodes.size())
                throw ConfigError("model.tabulated.mu must match x_nodes");
        }
        s.finish();
    }

    if (!top.has("grid")) throw ConfigError("missing required section grid");
    {
        detail::Section s(top.at("grid"), "grid");
        std::vector<double> lo, hi;
        s.get("t_steps", c.grid.t_steps);
        s.require("x_min", lo);
        s.require("x_max", hi);
        s.require("x_steps", c.grid.x_steps);
        c.grid.x_min = detail::to_vec(lo);
        c.grid.x_max = detail::to_vec(hi);
        std::string mode = "extrapolate_linear";
        s.get("boundary_mode", mode);
        if (mode == "extrapolate_linear") {
            c.grid.boundary_mode = BoundaryMode::extrapolate_linear;
        } else if (mode == "clamp_payoff") {
            c.grid.boundary_mode = BoundaryMode::clamp_payoff;
        } else {
            throw ConfigError("grid.boundary_mode must be extrapolate_linear or clamp_payoff");
        }
        s.finish();
        c.grid.validate();
        if (c.grid.dim() != c.model.dim) throw ConfigError("grid dimension differs from model.dim");
    }

    if (top.has("query")) {
        detail::Section s(top.at("query"), "query");
        s.get("t0", c.query.t0);
        s.get("x0", c.query.x0);
        s.finish();
    }
    if (!c.query.x0.empty() && static_cast<int>(c.query.x0.size()) != c.model.dim)
        throw ConfigError("query.x0 dimension differs from model.dim");
    if (c.query.t0 < 0.0 || c.query.t0 > c.model.horizon_T) throw ConfigError("query.t0 must lie in [0, T]");

    if (top.has("regularize")) {
        detail::Section s(top.at("regularize"), "regularize");
        auto& r = c.regularize;
        s.get("eps_ladder", r.eps_ladder);
        s.get("eta", r.eta);
        s.get("tol", r.tol);
        if (s.has("B")) {
            detail::Section b(s.at("B"), "regularize.B");
            b.get("t_lo", r.B_t_lo);
            b.get("t_hi", r.B_t_hi);
            b.get("x_lo", r.B_x_lo);
            b.get("x_hi", r.B_x_hi);
            b.finish();
        }
        s.get("phi", r.phi);
        s.get("check_t", r.check_t);
        s.get("check_x", r.check_x);
        s.get("delta_halvings", r.delta_halvings);
        s.get("weights", r.weights);
        if (!r.weights.empty() && static_cast<int>(r.weights.size()) != c.model.dim + 1)
            throw ConfigError("regularize.weights needs one entry for t and one per space axis");
        s.finish();
    }
    if (top.has("sim")) {
        detail::Section s(top.at("sim"), "sim");
        auto& m = c.sim;
        s.get("paths", m.paths);
        s.get("steps", m.steps);
        s.get("seed", m.seed);
        s.get("tol_sim", m.tol_sim);
        s.get("p_sim", m.p_sim);
        s.get("margin", m.margin);
        s.get("switch_rate", m.switch_rate);
        s.get("adversary", m.adversary);
        if (s.has("y0")) {
            const json& y = s.at("y0");
            if (y.is_number()) {
                std::ostringstream os;
                os.precision(17);
                os << y.get<double>();
                m.y0 = os.str();
            } else {
                s.get("y0", m.y0);
            }
        }
        s.get("surface", m.surface);
        s.finish();
        if (m.paths < 1 || m.steps < 1) throw ConfigError("sim.paths and sim.steps must be positive");
    }
    if (top.has("dual")) {
        detail::Section s(top.at("dual"), "dual");
        auto& d = c.dual;
        s.get("knots", d.knots);
        s.get("degree", d.degree);
        s.get("paths", d.paths);
        s.get("eps", d.eps);
        s.get("seed", d.seed);
        s.get("steps", d.steps);
        s.get("bundles", d.bundles);
        s.get("gamma_grid", d.gamma_grid);
        if (s.has("mid") && !s.at("mid").is_null()) {
            double mid = 0.0;
            s.get("mid", mid);
            d.mid = mid;
        }
        s.finish();
        if (d.gamma_grid != "full" && d.gamma_grid != "a-only")
            throw ConfigError("dual.gamma_grid must be 'full' or 'a-only'");
    }
    if (top.has("output")) {
        detail::Section s(top.at("output"), "output");
        s.get("directory", c.output.directory);
        s.get("formats", c.output.formats);
        s.finish();
        for (const auto& f : c.output.formats)
            if (f != "csv" && f != "bin" && f != "json" && f != "tsv" && f != "paths")
                throw ConfigError("output.formats: unknown format '" + f + "'");
    }
    top.finish();
    return c;
}

inline json config_to_json(const RunConfig& c) {
    json j;
    const auto& m = c.model;
    j["model"] = {{"kind", m.kind},
                  {"dim", m.dim},
                  {"A_points", m.A_points},
                  {"horizon_T", m.horizon_T},
                  {"lipschitz_K", m.lipschitz_K},
                  {"finance",
                   {{"mu", detail::coefficient_to_json(m.mu)},
                    {"sigma", detail::coefficient_to_json(m.sigma)},
                    {"r_lend", detail::coefficient_to_json(m.r_lend)},
                    {"r_borrow", detail::coefficient_to_json(m.r_borrow)}}},
                  {"payoff", detail::payoff_to_json(m.payoff)}};
    if (m.kind == "custom-tabulated" || !m.tabulated.x_nodes.empty())
        j["model"]["tabulated"] = {{"x_nodes", m.tabulated.x_nodes},
                                   {"sigma", m.tabulated.sigma},
                                   {"mu", m.tabulated.mu}};
    j["grid"] = {{"t_steps", c.grid.t_steps},
                 {"x_min", detail::from_vec(c.grid.x_min)},
                 {"x_max", detail::from_vec(c.grid.x_max)},
                 {"x_steps", c.grid.x_steps},
                 {"boundary_mode", detail::boundary_name(c.grid.boundary_mode)}};
    j["query"] = {{"t0", c.query.t0}, {"x0", c.query.x0}};
    const auto& r = c.regularize;
    j["regularize"] = {{"eps_ladder", r.eps_ladder},
                       {"eta", r.eta},
                       {"tol", r.tol},
                       {"B", {{"t_lo", r.B_t_lo}, {"t_hi", r.B_t_hi}, {"x_lo", r.B_x_lo}, {"x_hi", r.B_x_hi}}},
                       {"phi", r.phi},
                       {"check_t", r.check_t},
                       {"check_x", r.check_x},
                       {"delta_halvings", r.delta_halvings},
                       {"weights", r.weights}};
    const auto& s = c.sim;
    j["sim"] = {{"paths", s.paths},         {"steps", s.steps},     {"seed", s.seed},
                {"tol_sim", s.tol_sim},     {"p_sim", s.p_sim},     {"margin", s.margin},
                {"switch_rate", s.switch_rate}, {"adversary", s.adversary}, {"y0", s.y0},
                {"surface", s.surface}};
    const auto& d = c.dual;
    j["dual"] = {{"knots", d.knots}, {"degree", d.degree}, {"paths", d.paths},
                 {"eps", d.eps},     {"seed", d.seed},     {"steps", d.steps},
                 {"bundles", d.bundles}, {"gamma_grid", d.gamma_grid},
                 {"mid", d.mid ? json(*d.mid) : json(nullptr)}};
    j["output"] = {{"directory", c.output.directory}, {"formats", c.output.formats}};
    return j;
}

/// Applies "a.b.c=value" to a JSON tree. The value is parsed as JSON when
/// possible and taken as a string otherwise.
inline void apply_override(json& root, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
    std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &root;
    std::size_t start = 0;
    while (true) {
        auto dot = path.find('.', start);
        std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("empty key in override " + assignment);
        if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
    return j;
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    json j = read_json_file(path);
    for (const auto& o : overrides) apply_override(j, o);
    return config_from_json(j);
}

/// FNV-1a 64 of a byte string.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the canonical (sorted-key) serialization.
inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a(config_to_json(c).dump())); }

namespace detail {

inline double interp_linear(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
    double w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    return ys[i] + w * (ys[i + 1] - ys[i]);
}

}  // namespace detail

inline ModelSpec build_model(const ModelConfig& mc) {
    std::vector<Vec> A;
    for (const auto& a : mc.A_points) A.push_back(detail::to_vec(a));
    ModelSpec m;
    if (mc.kind == "finance") {
        FinanceParams fp;
        fp.dim = mc.dim;
        fp.mu = mc.mu;
        fp.sigma = mc.sigma;
        fp.r_lend = mc.r_lend;
        fp.r_borrow = mc.r_borrow;
        fp.payoff = mc.payoff;
        fp.A_points = A;
        fp.horizon_T = mc.horizon_T;
        fp.lipschitz_K = mc.lipschitz_K;
        m = make_finance_preset(fp);
    } else {
        // sigma(x, a_i) from row i of the table; A-points are matched exactly.
        auto tab = mc.tabulated;
        auto row_of = [A](const Vec& a) {
            for (std::size_t i = 0; i < A.size(); ++i)
                if (A[i].size() == a.size() && A[i] == a) return i;
            throw ModelError("custom-tabulated model queried at an A-point it does not tabulate");
        };
        FinanceSpec f;
        f.mu = [tab](double, const Vec& x, const Vec&) {
            return Vec(Vec::Constant(1, tab.mu.empty() ? 0.0 : detail::interp_linear(tab.x_nodes, tab.mu, x(0))));
        };
        f.sigma = [tab, row_of](double, const Vec& x, const Vec& a) {
            Mat s(1, 1);
            s(0, 0) = detail::interp_linear(tab.x_nodes, tab.sigma[row_of(a)], x(0));
            return s;
        };
        f.r_lend = scalar_field(mc.r_lend);
        f.r_borrow = scalar_field(mc.r_borrow);
        Payoff g = mc.payoff;
        m = make_finance_model(f, [g](const Vec& x) { return g(x); }, A, mc.horizon_T, mc.lipschitz_K, 1);
        m.payoff = g;
    }
    RunConfig holder;
    holder.model = mc;
    m.digest = fnv1a(config_to_json(holder)["model"].dump());
    return m;
}

}  // namespace hedgegame
