#pragma once

/**
 * @file cli.hpp
 * @brief Command-line front end: price, solve, regularize, simulate, dual.
 *
 *   hedgegame <subcommand> --config FILE [--set key.path=value]... [--out DIR]
 *
 * Subcommand flags are shorthands for --set on the matching config key.
 * Exit codes: 0 ok, 2 config or model error, 3 numerical failure,
 * 4 certification or acceptance failure. Errors are also reported as one
 * JSON object on stderr. Every run writes manifest.json into the output
 * directory; all other artifacts are byte-reproducible.
 */

#include "hedgegame/config.hpp"
#include "hedgegame/dual.hpp"
#include "hedgegame/game.hpp"
#include "hedgegame/hjb.hpp"
#include "hedgegame/plot.hpp"
#include "hedgegame/regularize.hpp"
#include "hedgegame/surface_io.hpp"
#include "hedgegame/parallel.hpp"
#include "hedgegame/validate.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hedgegame {

inline constexpr const char* kVersion = "0.1.0";

namespace cli {

namespace fs = std::filesystem;

struct Context {
    RunConfig cfg;
    std::string hash;
    fs::path out;
    std::vector<std::string> artifacts;
    json seeds = json::object();
    std::ostream* stdout_ = &std::cout;

    std::string file(const std::string& name) {
        artifacts.push_back(name);
        return (out / name).string();
    }

    void write_json(const std::string& name, json j) {
        j["config_hash"] = hash;
        std::ofstream f(file(name));
        if (!f) throw ConfigError("cannot write " + (out / name).string());
        f << j.dump(2) << '\n';
    }
};

inline json vec_json(const Vec& v) { return detail::from_vec(v); }

inline std::vector<double> parse_list(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("bad number '" + item + "' in list '" + text + "'");
        }
    }
    return v;
}

/// Assumptions whose failure makes the run meaningless; others become warnings.
inline json check_assumptions(const ModelSpec& model) {
    ValidationReport rep = validate_assumptions(model, 2000, 1);
    json warnings = json::array();
    for (const auto* c : rep.failures()) {
        std::ostringstream os;
        os << c->id << ": " << c->description << "; worst " << c->worst << " at " << c->witness;
        if (c->id == "concavity" || c->id == "rate_order") throw ModelError("assumption violation: " + os.str());
        warnings.push_back(os.str());
    }
    return warnings;
}

inline ValueSurface solve_config(const RunConfig& cfg, const ModelSpec& model) {
    return solve(model, cfg.grid);
}

inline TimeBox box_from(const RunConfig& cfg) {
    const auto& r = cfg.regularize;
    TimeBox B;
    B.t_lo = r.B_t_lo;
    B.t_hi = std::min(r.B_t_hi, cfg.model.horizon_T);
    const int d = cfg.model.dim;
    if (r.B_x_lo.empty() && r.B_x_hi.empty()) {
        Vec mid = 0.5 * (cfg.grid.x_min + cfg.grid.x_max), half = 0.25 * (cfg.grid.x_max - cfg.grid.x_min);
        B.x_lo = mid - half;
        B.x_hi = mid + half;
    } else {
        if (static_cast<int>(r.B_x_lo.size()) != d || static_cast<int>(r.B_x_hi.size()) != d)
            throw ConfigError("regularize.B.x_lo and x_hi need model.dim entries");
        B.x_lo = detail::to_vec(r.B_x_lo);
        B.x_hi = detail::to_vec(r.B_x_hi);
    }
    return B;
}

inline json cert_json(const CertReport& c) {
    return {{"passed", c.passed},
            {"tol", c.tol},
            {"min_residual", c.min_residual},
            {"argmin_t", c.argmin_t},
            {"argmin_x", vec_json(c.argmin_x)},
            {"terminal_margin", c.terminal_margin},
            {"nodes_checked", c.nodes_checked},
            {"phi_margin", std::isnan(c.phi_margin) ? json(nullptr) : json(c.phi_margin)}};
}

inline json report_json(const SimReport& r, double tol_sim) {
    json q = json::object();
    for (double p : {0.01, 0.05, 0.5, 0.95, 0.99}) q[detail::fmt17(p)] = r.quantile(p);
    return {{"adversary", r.adversary},
            {"n_paths", r.n_paths},
            {"n_steps", r.n_steps},
            {"seed", r.seed},
            {"y0", r.y0},
            {"shortfall_mean", r.shortfall_mean},
            {"shortfall_std_error", r.shortfall_std_error},
            {"shortfall_prob", r.shortfall_prob(tol_sim)},
            {"quantiles_surplus", q},
            {"non_finite", r.non_finite},
            {"clamped", r.clamped}};
}

inline std::string safe_label(std::string s) {
    for (char& c : s)
        if (c == ':' || c == '.') c = '_';
    return s;
}

inline Adversary parse_adversary(const std::string& spec, const ValueSurface& surface, const ModelSpec& model) {
    if (spec == "worst") return Adversary::worst(surface);
    auto colon = spec.find(':');
    std::string kind = spec.substr(0, colon), arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
    try {
        if (kind == "constant") {
            int i = std::stoi(arg);
            if (i < 0 || i >= static_cast<int>(model.A_points.size()))
                throw ConfigError("adversary constant index out of range");
            return Adversary::constant(i);
        }
        if (kind == "random") return Adversary::random(arg.empty() ? 4.0 : std::stod(arg));
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad adversary argument in '" + spec + "'");
    }
    throw ConfigError("adversary must be all, constant:<i>, random:<rate> or worst");
}

// ---------------------------------------------------------------- commands

inline int cmd_price(Context& ctx) {
    ModelSpec model = build_model(ctx.cfg.model);
    json warnings = check_assumptions(model);
    ValueSurface s = solve_config(ctx.cfg, model);
    double v = value_at(s, ctx.cfg.query.t0, ctx.cfg.x0());
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    *ctx.stdout_ << buf << '\n';
    ctx.write_json("price.json", {{"value", v},
                                  {"t0", ctx.cfg.query.t0},
                                  {"x0", vec_json(ctx.cfg.x0())},
                                  {"cfl", s.cfl},
                                  {"warnings", warnings}});
    return 0;
}

inline int cmd_solve(Context& ctx) {
    const auto& cfg = ctx.cfg;
    ModelSpec model = build_model(cfg.model);
    json warnings = check_assumptions(model);
    ValueSurface s = solve_config(cfg, model);
    ResidualGrid res = residual(s, model);
    ResidualSummary all = res.summarize(cfg.model.horizon_T, cfg.grid.x_min, cfg.grid.x_max);
    // Away from the terminal layer and the artificial boundary.
    Vec mid = 0.5 * (cfg.grid.x_min + cfg.grid.x_max), half = 0.25 * (cfg.grid.x_max - cfg.grid.x_min);
    ResidualSummary inner = res.summarize(0.9 * cfg.model.horizon_T, mid - half, mid + half);
    double v = value_at(s, cfg.query.t0, cfg.x0());
    if (cfg.output.wants("csv")) write_surface_csv(s, ctx.file("surface.csv"));
    if (cfg.output.wants("bin")) write_surface_bin(s, ctx.file("surface.bin"));
    if (cfg.output.wants("tsv")) {
        write_value_slice(s, cfg.query.t0, ctx.file("value_slice.tsv"));
        if (model.dim == 1) write_policy_map(s, ctx.file("policy_map.tsv"), std::max(1, cfg.grid.t_steps / 100));
    }
    ctx.write_json("solve_summary.json",
                   {{"price", v},
                    {"t0", cfg.query.t0},
                    {"x0", vec_json(cfg.x0())},
                    {"residual", {{"max_abs", all.max_abs}, {"min", all.min}, {"nodes", all.count}}},
                    {"residual_interior", {{"max_abs", inner.max_abs}, {"min", inner.min}, {"nodes", inner.count}}},
                    {"cfl", s.cfl},
                    {"cfl_bound_K", s.cfl_bound_K},
                    {"value_bound", s.value_bound},
                    {"fixed_point_rounds", s.max_rounds_used},
                    {"grid_hash", hex64(fnv1a(config_to_json(cfg)["grid"].dump()))},
                    {"model_hash", hex64(s.model_hash())},
                    {"warnings", warnings}});
    *ctx.stdout_ << detail::fmt17(v) << '\n';
    return 0;
}

inline Target target_from(const std::string& phi) {
    const std::string tag = "v-plus-margin:";
    if (phi.rfind(tag, 0) == 0) {
        try {
            return Target::v_plus(std::stod(phi.substr(tag.size())));
        } catch (const std::invalid_argument&) {
            throw ConfigError("bad margin in phi '" + phi + "'");
        }
    }
    auto surface = std::make_shared<ValueSurface>(read_surface_csv(phi));
    return Target::function([surface](double t, const Vec& x) { return value_at(*surface, t, x); });
}

inline int cmd_regularize(Context& ctx) {
    const auto& cfg = ctx.cfg;
    ModelSpec model = build_model(cfg.model);
    json warnings = check_assumptions(model);
    RegularizeOptions opt;
    opt.grid = cfg.grid;
    opt.eps_ladder = cfg.regularize.eps_ladder;
    opt.tol = cfg.regularize.tol;
    opt.check_t = cfg.regularize.check_t;
    opt.check_x = cfg.regularize.check_x;
    opt.delta_halvings = cfg.regularize.delta_halvings;
    opt.weights = cfg.regularize.weights;
    TimeBox B = box_from(cfg);
    RegularizeResult r = build_smooth_supersolution(model, target_from(cfg.regularize.phi), B,
                                                    cfg.regularize.eta, opt);
    json ladder = json::array();
    for (const auto& rung : r.ladder) {
        json attempts = json::array();
        for (const auto& a : rung.attempts)
            attempts.push_back({{"delta", a.delta},
                                {"min_residual", a.min_residual},
                                {"terminal_margin", a.terminal_margin},
                                {"phi_margin", a.phi_margin},
                                {"passed", a.passed}});
        ladder.push_back({{"eps", rung.eps},
                          {"c_B", rung.c_B},
                          {"w_sup", rung.w_sup},
                          {"c_reg", rung.c_reg},
                          {"k", rung.k},
                          {"max_displacement_sq", rung.max_displacement_sq},
                          {"attempts", attempts}});
    }
    if (cfg.output.wants("bin")) write_smooth_bin(r.surface, ctx.file("smooth.bin"));
    if (cfg.output.wants("tsv")) {
        std::vector<EpsCurvePoint> curve;
        for (const auto& rung : r.ladder) curve.push_back({rung.eps, rung.c_B});
        write_eps_curve(curve, ctx.file("eps_curve.tsv"));
    }
    ctx.write_json("certificate.json",
                   {{"certificate", cert_json(r.cert)},
                    {"eps", r.surface.eps},
                    {"k", r.surface.k},
                    {"delta", r.surface.delta()},
                    {"time_offset", r.time_offset},
                    {"eta", cfg.regularize.eta},
                    {"B", {{"t_lo", B.t_lo}, {"t_hi", B.t_hi}, {"x_lo", vec_json(B.x_lo)}, {"x_hi", vec_json(B.x_hi)}}},
                    {"ladder", ladder},
                    {"warnings", warnings}});
    *ctx.stdout_ << (r.cert.passed ? "CERTIFIED" : "NOT CERTIFIED") << " eps=" << r.surface.eps
                 << " min_residual=" << r.cert.min_residual << '\n';
    return r.cert.passed ? 0 : 4;
}

inline int cmd_simulate(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& sc = cfg.sim;
    ModelSpec model = build_model(cfg.model);
    ValueSurface s = sc.surface.empty() ? solve_config(cfg, model) : read_surface_bin(sc.surface);
    if (s.lattice().dim() != model.dim) throw ConfigError("surface dimension differs from model.dim");
    StrategyMap strategy = make_strategy(s, model);
    SimParams prm;
    prm.t0 = cfg.query.t0;
    prm.x0 = cfg.x0();
    prm.n_paths = sc.paths;
    prm.n_steps = sc.steps;
    prm.seed = sc.seed;
    ctx.seeds["sim"] = sc.seed;
    double y0;
    if (sc.y0 == "auto") {
        y0 = strategy.value(prm.t0, prm.x0) + sc.margin;
    } else {
        try {
            y0 = std::stod(sc.y0);
        } catch (const std::exception&) {
            throw ConfigError("sim.y0 must be 'auto' or a number");
        }
    }
    std::vector<SimReport> reports;
    if (sc.adversary == "all") {
        for (std::size_t i = 0; i < model.A_points.size(); ++i)
            reports.push_back(simulate(model, strategy, Adversary::constant(static_cast<int>(i)), prm, y0));
        reports.push_back(simulate(model, strategy, Adversary::random(sc.switch_rate), prm, y0));
        reports.push_back(simulate(model, strategy, Adversary::worst(s), prm, y0));
    } else {
        reports.push_back(simulate(model, strategy, parse_adversary(sc.adversary, s, model), prm, y0));
    }
    bool pass = true;
    json list = json::array();
    for (const auto& r : reports) {
        if (r.shortfall_prob(sc.tol_sim) > sc.p_sim || r.non_finite > 0) pass = false;
        list.push_back(report_json(r, sc.tol_sim));
        std::string tag = safe_label(r.adversary);
        if (cfg.output.wants("tsv")) write_histogram(shortfall_histogram(r), ctx.file("histogram_" + tag + ".tsv"));
        if (cfg.output.wants("paths")) {
            std::ofstream f(ctx.file("paths_" + tag + ".csv"));
            f << "path_id";
            for (int j = 0; j < model.dim; ++j) f << ",x" << j << "_T";
            f << ",y_T,shortfall\n";
            for (std::size_t i = 0; i < r.paths.size(); ++i) {
                const auto& p = r.paths[i];
                f << i;
                for (int j = 0; j < model.dim; ++j) f << ',' << detail::fmt17(p.x_T(j));
                f << ',' << detail::fmt17(p.y_T) << ',' << detail::fmt17(p.shortfall) << '\n';
            }
        }
    }
    ctx.write_json("sim_report.json", {{"verdict", pass ? "PASS" : "FAIL"},
                                       {"y0", y0},
                                       {"t0", prm.t0},
                                       {"x0", vec_json(prm.x0)},
                                       {"tol_sim", sc.tol_sim},
                                       {"p_sim", sc.p_sim},
                                       {"reports", list}});
    *ctx.stdout_ << (pass ? "PASS" : "FAIL") << " y0=" << detail::fmt17(y0) << '\n';
    return pass ? 0 : 4;
}

inline json dual_json(const DualEstimate& e) {
    return {{"value", e.value},
            {"std_error", e.std_error},
            {"n_paths", e.n_paths},
            {"basis_degree", e.basis_degree},
            {"knot_count", e.knot_count},
            {"warnings", e.warnings}};
}

inline int cmd_dual(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& dc = cfg.dual;
    ModelSpec model = build_model(cfg.model);
    ControlLattice lat = make_control_lattice(model, dc.eps, cfg.query.t0, dc.knots);
    if (dc.gamma_grid == "a-only") {
        std::vector<ControlPoint> keep;
        for (const auto& g : lat.gamma_points)
            if (g.shift.dt == 0.0 && g.shift.dx.norm() == 0.0) keep.push_back(g);
        lat.gamma_points = keep;
    }
    DualOptions opt;
    opt.basis_degree = dc.degree;
    opt.n_paths = dc.paths;
    opt.seed = dc.seed;
    opt.total_steps = dc.steps;
    opt.bundles = dc.bundles;
    ctx.seeds["dual"] = dc.seed;
    json out;
    double value;
    if (dc.mid) {
        DppReport rep = dpp_check(model, dc.eps, cfg.x0(), *dc.mid, lat, opt);
        out = dual_json(rep.direct);
        out["dpp"] = {{"mid", *dc.mid},
                      {"direct", rep.direct.value},
                      {"composed", rep.composed.value},
                      {"difference", rep.difference},
                      {"combined_std_error", rep.combined_std_error}};
        value = rep.direct.value;
    } else {
        DualEstimate e = dual_value_lsmc(model, dc.eps, cfg.x0(), lat, opt);
        out = dual_json(e);
        value = e.value;
    }
    out["eps"] = dc.eps;
    out["t0"] = cfg.query.t0;
    out["x0"] = vec_json(cfg.x0());
    out["gamma_points"] = lat.gamma_points.size();
    ctx.write_json("dual.json", out);
    *ctx.stdout_ << detail::fmt17(value) << '\n';
    return 0;
}

inline std::string utc_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

}  // namespace cli

/**
 * Parses argv and runs one subcommand. Output streams are parameters so
 * tests can run the CLI in-process.
 */
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    namespace fs = std::filesystem;
    CLI::App app{"Super-hedging prices, certified smooth supersolutions and game simulation"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::vector<std::string> sets;

    std::vector<std::pair<std::string, std::string>> shorthand;  // (config key, raw text)
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--set", sets, "Override a config key: key.path=value");
        sub->add_option("--out", out_dir, "Output directory (default output.directory)");
    };
    auto alias = [&](CLI::App* sub, const std::string& flag, const std::string& key, bool quote,
                     const std::string& help) {
        sub->add_option_function<std::string>(
            flag,
            [&shorthand, key, quote](const std::string& v) {
                shorthand.emplace_back(key, quote ? json(v).dump() : v);
            },
            help);
    };

    auto* price = app.add_subcommand("price", "Solve and print v(t0, x0)");
    auto* solve_cmd = app.add_subcommand("solve", "Solve and write the value/policy surface");
    auto* reg = app.add_subcommand("regularize", "Build and certify a smooth supersolution");
    auto* sim = app.add_subcommand("simulate", "Play the hedging game against adversaries");
    auto* dual = app.add_subcommand("dual", "Regression Monte Carlo estimate of the dual value");
    for (auto* s : {price, solve_cmd, reg, sim, dual}) common(s);

    std::string ladder_text, box_text;
    reg->add_option("--eps-ladder", ladder_text, "Comma-separated decreasing eps values");
    alias(reg, "--eta", "regularize.eta", false, "Domination slack on B");
    alias(reg, "--tol", "regularize.tol", false, "Residual tolerance");
    reg->add_option("--B", box_text, "Box t_lo,t_hi,x_lo...,x_hi...");
    alias(reg, "--phi", "regularize.phi", true, "v-plus-margin:<m> or a surface CSV path");

    alias(sim, "--surface", "sim.surface", true, "HJBSURF1 surface file");
    alias(sim, "--adversary", "sim.adversary", true, "all | constant:<i> | random:<rate> | worst");
    alias(sim, "--paths", "sim.paths", false, "Number of paths");
    alias(sim, "--steps", "sim.steps", false, "Euler steps");
    alias(sim, "--seed", "sim.seed", false, "Seed");
    alias(sim, "--y0", "sim.y0", true, "auto or a number");
    alias(sim, "--margin", "sim.margin", false, "Capital added to the auto start");

    alias(dual, "--eps", "dual.eps", false, "Shake radius");
    alias(dual, "--knots", "dual.knots", false, "Number of control intervals");
    alias(dual, "--gamma-grid", "dual.gamma_grid", true, "full | a-only");
    alias(dual, "--degree", "dual.degree", false, "Polynomial degree");
    alias(dual, "--paths", "dual.paths", false, "Number of paths");
    alias(dual, "--seed", "dual.seed", false, "Seed");
    alias(dual, "--mid", "dual.mid", false, "Mid time; enables the composition check");

    auto started = std::chrono::steady_clock::now();
    cli::Context ctx;
    ctx.stdout_ = &out;
    std::string subcommand;
    int code = 0;
    json error = nullptr;
    bool have_out = false;

    auto report_error = [&](const char* kind, const std::string& msg, int exit_code) {
        error = {{"error", kind}, {"message", msg}, {"exit_code", exit_code}};
        err << error.dump() << '\n';
        return exit_code;
    };

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e, out, err);
        } catch (const CLI::ParseError& e) {
            return report_error("usage", e.what(), 2);
        }
        for (auto* s : app.get_subcommands()) subcommand = s->get_name();
        if (!ladder_text.empty()) {
            json l = cli::parse_list(ladder_text);
            shorthand.emplace_back("regularize.eps_ladder", l.dump());
        }
        json raw = read_json_file(config_path);
        for (const auto& [key, text] : shorthand) apply_override(raw, key + "=" + text);
        if (!box_text.empty()) {
            auto b = cli::parse_list(box_text);
            if (b.size() < 4 || b.size() % 2 != 0) throw ConfigError("--B needs t_lo,t_hi,x_lo...,x_hi...");
            std::size_t d = (b.size() - 2) / 2;
            apply_override(raw, "regularize.B.t_lo=" + json(b[0]).dump());
            apply_override(raw, "regularize.B.t_hi=" + json(b[1]).dump());
            apply_override(raw, "regularize.B.x_lo=" + json(std::vector<double>(b.begin() + 2, b.begin() + 2 + static_cast<long>(d))).dump());
            apply_override(raw, "regularize.B.x_hi=" + json(std::vector<double>(b.begin() + 2 + static_cast<long>(d), b.end())).dump());
        }
        for (const auto& s : sets) apply_override(raw, s);
        ctx.cfg = config_from_json(raw);
        ctx.hash = config_hash(ctx.cfg);
        ctx.out = out_dir.empty() ? fs::path(ctx.cfg.output.directory) : fs::path(out_dir);
        fs::create_directories(ctx.out);
        have_out = true;
        if (subcommand == "price") code = cli::cmd_price(ctx);
        else if (subcommand == "solve") code = cli::cmd_solve(ctx);
        else if (subcommand == "regularize") code = cli::cmd_regularize(ctx);
        else if (subcommand == "simulate") code = cli::cmd_simulate(ctx);
        else code = cli::cmd_dual(ctx);
    } catch (const Error& e) {
        code = report_error(e.kind(), e.what(), e.exit_code());
    } catch (const json::exception& e) {
        code = report_error("config", e.what(), 2);
    } catch (const fs::filesystem_error& e) {
        code = report_error("config", e.what(), 2);
    } catch (const std::exception& e) {
        code = report_error("internal", e.what(), 3);
    }

    if (have_out) {
        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        json manifest = {{"subcommand", subcommand},
                         {"config_hash", ctx.hash},
                         {"version", kVersion},
                         {"seeds", ctx.seeds},
                         {"wall_time_s", wall},
                         {"finished_utc", cli::utc_now()},
                         {"threads", thread_count()},
                         {"exit_code", code},
                         {"artifacts", ctx.artifacts},
                         {"error", error}};
        std::ofstream f(ctx.out / "manifest.json");
        f << manifest.dump(2) << '\n';
    }
    return code;
}

}  // namespace hedgegame
