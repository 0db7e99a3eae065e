#include "hedgegame/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace hedgegame;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = HEDGEGAME_SOURCE_DIR "/configs/";

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "hedgegame");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("hedgegame_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

/// Numeric rows of a TSV file, comment and blank lines skipped.
std::vector<std::vector<double>> tsv_rows(const fs::path& p) {
    std::vector<std::vector<double>> rows;
    std::ifstream f(p);
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::vector<double> row;
        double v;
        while (ss >> v) row.push_back(v);
        rows.push_back(row);
    }
    return rows;
}

void expect_same_files(const fs::path& a, const fs::path& b) {
    int compared = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        std::string name = e.path().filename().string();
        if (name == "manifest.json") continue;
        SCOPED_TRACE(name);
        ASSERT_TRUE(fs::exists(b / name));
        EXPECT_TRUE(slurp(e.path()) == slurp(b / name));
        ++compared;
    }
    EXPECT_GT(compared, 0);
}

}  // namespace

TEST(Cli, PriceOfConstantPayoffIsTheConstant) {
    auto dir = scratch("price");
    Outcome r = run({"price", "--config", kConfigs + "constant.json", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "1\n");
    EXPECT_EQ(read_json(dir / "price.json")["value"].get<double>(), 1.0);
    json m = read_json(dir / "manifest.json");
    EXPECT_EQ(m["exit_code"], 0);
    EXPECT_EQ(m["subcommand"], "price");
    EXPECT_EQ(m["config_hash"], read_json(dir / "price.json")["config_hash"]);
    EXPECT_EQ(m["artifacts"], json({"price.json"}));
}

TEST(Cli, BorrowBelowLendExitsTwoWithErrorJson) {
    auto dir = scratch("bad_rates");
    Outcome r = run({"price", "--config", kConfigs + "bad_rates.json", "--out", dir.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_TRUE(r.out.empty());
    json e = json::parse(r.err);
    EXPECT_EQ(e["error"], "model");
    EXPECT_EQ(e["exit_code"], 2);
    json m = read_json(dir / "manifest.json");
    EXPECT_EQ(m["exit_code"], 2);
    EXPECT_EQ(m["error"]["error"], "model");
}

TEST(Cli, ConfigProblemsExitTwo) {
    auto dir = scratch("config_errors");
    Outcome r = run({"price", "--config", kConfigs + "constant.json", "--set", "grid.bogus=1", "--out", dir.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(json::parse(r.err)["error"], "config");

    r = run({"price", "--config", (dir / "missing.json").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(json::parse(r.err)["error"], "config");

    r = run({"price"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(json::parse(r.err)["error"], "usage");

    r = run({"teleport", "--config", kConfigs + "constant.json"});
    EXPECT_EQ(r.code, 2);

    r = run({"dual", "--config", kConfigs + "constant.json", "--gamma-grid", "sparse", "--out", dir.string()});
    EXPECT_EQ(r.code, 2);

    r = run({"simulate", "--config", kConfigs + "constant.json", "--adversary", "constant:7", "--out",
             dir.string()});
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, NumericalFailureExitsThree) {
    auto dir = scratch("cfl");
    // Far too few time steps for the spatial grid: the explicit scheme refuses.
    Outcome r = run({"price", "--config", kConfigs + "black_scholes.json", "--set", "grid.t_steps=2", "--set",
                 "grid.x_steps=[400]", "--out", dir.string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(json::parse(r.err)["error"], "numerical");
}

TEST(Cli, SetOverridesChangeTheHash) {
    auto a = scratch("hash_a"), b = scratch("hash_b");
    ASSERT_EQ(run({"price", "--config", kConfigs + "constant.json", "--out", a.string()}).code, 0);
    ASSERT_EQ(run({"price", "--config", kConfigs + "constant.json", "--set", "sim.seed=9", "--out", b.string()}).code,
              0);
    EXPECT_NE(read_json(a / "manifest.json")["config_hash"], read_json(b / "manifest.json")["config_hash"]);
}

TEST(Cli, SolveThenSimulateBlackScholesPasses) {
    auto dir = scratch("bs");
    Outcome s = run({"solve", "--config", kConfigs + "black_scholes.json", "--out", dir.string()});
    ASSERT_EQ(s.code, 0) << s.err;
    for (const char* f : {"surface.csv", "surface.bin", "solve_summary.json", "value_slice.tsv", "policy_map.tsv"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    json summary = read_json(dir / "solve_summary.json");
    EXPECT_NEAR(summary["price"].get<double>(), 0.0796557, 0.005 * 0.0796557);
    EXPECT_LE(summary["cfl"].get<double>(), 1.0);

    Outcome sim = run({"simulate", "--config", kConfigs + "black_scholes.json", "--surface",
                   (dir / "surface.bin").string(), "--y0", "auto", "--out", dir.string()});
    ASSERT_EQ(sim.code, 0) << sim.err << sim.out;
    EXPECT_EQ(sim.out.substr(0, 4), "PASS");
    json rep = read_json(dir / "sim_report.json");
    EXPECT_EQ(rep["verdict"], "PASS");
    EXPECT_EQ(rep["reports"].size(), 3u);  // constant:0, random, worst
    for (const auto& r : rep["reports"]) {
        EXPECT_EQ(r["non_finite"], 0);
        EXPECT_LE(r["shortfall_prob"].get<double>(), 0.05);
        std::string tag = cli::safe_label(r["adversary"].get<std::string>());
        auto rows = tsv_rows(dir / ("histogram_" + tag + ".tsv"));
        double total = 0.0;
        for (const auto& row : rows) total += row.at(2);
        EXPECT_EQ(total, 10000.0) << tag;
    }
}

TEST(Cli, UnderfundedStartFailsWithExitFour) {
    auto dir = scratch("underfunded");
    Outcome p = run({"price", "--config", kConfigs + "uncertain_vol.json", "--out", dir.string()});
    ASSERT_EQ(p.code, 0);
    double v = std::stod(p.out);
    Outcome sim = run({"simulate", "--config", kConfigs + "uncertain_vol.json", "--adversary", "worst", "--paths", "4000",
                   "--y0", std::to_string(v - 0.05), "--out", dir.string()});
    EXPECT_EQ(sim.code, 4);
    EXPECT_EQ(sim.out.substr(0, 4), "FAIL");
    EXPECT_EQ(read_json(dir / "sim_report.json")["verdict"], "FAIL");
}

TEST(Cli, ArtifactsAreByteIdenticalAcrossRunsAndThreads) {
    auto a = scratch("det_a"), b = scratch("det_b");
    auto both = [&](std::vector<std::string> args, const char* threads_b) {
        auto with = [&](const fs::path& dir, const char* threads) {
            setenv("HEDGEGAME_THREADS", threads, 1);
            auto full = args;
            full.push_back("--out");
            full.push_back(dir.string());
            return run(full).code;
        };
        EXPECT_EQ(with(a, "1"), 0);
        EXPECT_EQ(with(b, threads_b), 0);
    };
    const std::string cfg = kConfigs + "uncertain_vol.json";
    both({"solve", "--config", cfg}, "1");
    both({"simulate", "--config", cfg, "--paths", "3000", "--steps", "200", "--set",
          "output.formats=[\"tsv\",\"json\",\"paths\"]"},
         "3");
    both({"dual", "--config", cfg, "--paths", "8000", "--mid", "0.5"}, "4");
    unsetenv("HEDGEGAME_THREADS");
    expect_same_files(a, b);
    EXPECT_EQ(read_json(a / "manifest.json")["config_hash"], read_json(b / "manifest.json")["config_hash"]);
}

TEST(Cli, PathsCsvHasOneRowPerPath) {
    auto dir = scratch("paths");
    Outcome r = run({"simulate", "--config", kConfigs + "constant.json", "--adversary", "constant:0", "--paths", "500",
                 "--set", "output.formats=[\"paths\"]", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream f(dir / "paths_constant_0.csv");
    std::string line;
    std::getline(f, line);
    EXPECT_EQ(line, "path_id,x0_T,y_T,shortfall");
    int rows = 0;
    while (std::getline(f, line)) ++rows;
    EXPECT_EQ(rows, 500);
    EXPECT_FALSE(fs::exists(dir / "histogram_constant_0.tsv"));
}

TEST(Cli, ValueSliceOfConstantPayoffIsFlat) {
    auto dir = scratch("slice");
    ASSERT_EQ(run({"solve", "--config", kConfigs + "constant.json", "--out", dir.string()}).code, 0);
    auto rows = tsv_rows(dir / "value_slice.tsv");
    ASSERT_EQ(rows.size(), 61u);
    for (const auto& row : rows) EXPECT_EQ(row.at(1), 1.0);
    auto policy = tsv_rows(dir / "policy_map.tsv");
    EXPECT_FALSE(policy.empty());
    for (const auto& row : policy) EXPECT_EQ(row.at(2), 0.0);
}

TEST(Cli, TwoDimensionalSolveWritesSplotSlice) {
    auto dir = scratch("basket");
    Outcome r = run({"solve", "--config", kConfigs + "basket_2d.json", "--set", "grid.t_steps=100", "--set",
                 "grid.x_steps=[12,15]", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(tsv_rows(dir / "value_slice.tsv").size(), 13u * 16u);
    EXPECT_FALSE(fs::exists(dir / "policy_map.tsv"));
}

TEST(Cli, RegularizeWritesCertificateAndMonotoneCurve) {
    auto dir = scratch("regularize");
    Outcome r = run({"regularize", "--config", kConfigs + "constant.json", "--eta", "0.5", "--eps-ladder", "0.2,0.1,0.05",
                     "--phi", "v-plus-margin:0.5", "--B", "0,1,-0.6,0.6", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    json cert = read_json(dir / "certificate.json");
    EXPECT_TRUE(cert["certificate"]["passed"].get<bool>());
    EXPECT_EQ(cert["eps"], 0.1);
    EXPECT_EQ(cert["B"]["x_lo"], json({-0.6}));
    EXPECT_NEAR(cert["certificate"]["phi_margin"].get<double>(), 0.3, 1e-9);
    auto curve = tsv_rows(dir / "eps_curve.tsv");
    ASSERT_EQ(curve.size(), 2u);
    for (std::size_t i = 1; i < curve.size(); ++i) {
        EXPECT_LT(curve[i][0], curve[i - 1][0]);
        EXPECT_LE(curve[i][1], curve[i - 1][1]);
    }
    SmoothSurface w = read_smooth_bin((dir / "smooth.bin").string());
    EXPECT_NEAR(w.eval(0.5, vec_of({0.0})).y, 1.2, 1e-9);
}

TEST(Cli, RegularizeAgainstTabulatedTarget) {
    auto dir = scratch("phi_csv");
    // Target: the solved surface of the payoff 2, which dominates v + eta = 1.5.
    ASSERT_EQ(run({"solve", "--config", kConfigs + "constant.json", "--set", "model.payoff.level=2", "--out",
                   dir.string()})
                  .code,
              0);
    Outcome r = run({"regularize", "--config", kConfigs + "constant.json", "--eta", "0.5", "--phi",
                 (dir / "surface.csv").string(), "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NEAR(read_json(dir / "certificate.json")["certificate"]["phi_margin"].get<double>(), 0.8, 1e-9);
}

TEST(Cli, DualReportsCompositionWhenMidIsSet) {
    auto dir = scratch("dual");
    Outcome r = run({"dual", "--config", kConfigs + "constant.json", "--mid", "0.5", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    json d = read_json(dir / "dual.json");
    EXPECT_EQ(d["value"], 1.0);
    EXPECT_EQ(d["dpp"]["difference"], 0.0);
    EXPECT_EQ(d["knot_count"], 2);

    r = run({"dual", "--config", kConfigs + "constant.json", "--eps", "0.05", "--gamma-grid", "a-only", "--out",
             dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    d = read_json(dir / "dual.json");
    EXPECT_EQ(d["gamma_points"], 1);
    EXPECT_NEAR(d["value"].get<double>(), 1.1, 1e-12);
}
