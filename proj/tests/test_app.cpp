#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "mvh/app/commands.hpp"

using namespace mvh;
using namespace mvh::app;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

std::string config_error(const std::string& text) {
    try {
        parse(text);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
        return e.what();
    }
    ADD_FAILURE() << "accepted: " << text;
    return {};
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("mvh_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + MVH_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t line_count(const std::string& text) {
    std::size_t n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
    const auto def = parse("");
    EXPECT_EQ(def.T, 2.0);
    EXPECT_EQ(def.sim.n_steps, 2000u);
    const auto cfg = parse("# comment\nmarket.rho = 0.75  # trailing\nsolve.g=3\ntables.g = 1, 2\nmc.antithetic = true\n"
                           "mc.paths = 10\nmarket.drift = 0:1, 1:0.5\nclaim.type = capped_call\nclaim.cap = 4\n");
    EXPECT_EQ(cfg.rho, 0.75);
    EXPECT_EQ(cfg.g, 3.0);
    EXPECT_EQ(cfg.table_g, (std::vector<double>{1, 2}));
    EXPECT_TRUE(cfg.sim.antithetic);
    EXPECT_EQ(cfg.drift.size(), 2u);
    EXPECT_EQ(cfg.claim().payoff(10.0), 4.0);
    EXPECT_EQ(cfg.claim().payoff(2.5), 1.5);
}

TEST(Config, ErrorsNameTheLine) {
    EXPECT_NE(config_error("market.T = 2\nbogus = 1\n").find("line 2"), std::string::npos);
    EXPECT_NE(config_error("\n\nmarket.rho = 1.5\n").find("line 3"), std::string::npos);
    EXPECT_NE(config_error("market.a = abc\n").find("line 1"), std::string::npos);
    EXPECT_NE(config_error("solve.g = 1\nsolve.g = 2\n").find("duplicate"), std::string::npos);
    EXPECT_NE(config_error("mc.steps = 5\n").find("line 1"), std::string::npos);
    EXPECT_NE(config_error("mc.paths = 3\nmc.antithetic = true\n").find("mc.steps"), std::string::npos);
    EXPECT_NE(config_error("claim.type = put\n").find("claim.type"), std::string::npos);
    EXPECT_NE(config_error("market.T\n").find("line 1"), std::string::npos);
    EXPECT_NE(config_error("market.T = inf\n").find("finite"), std::string::npos);
    EXPECT_NE(config_error("market.drift = 0.5:1\n").find("market.drift"), std::string::npos);
    EXPECT_THROW(load_config(std::string("/nonexistent/mvh.cfg")), Error);
}

TEST(Format, NumbersAndRows) {
    EXPECT_EQ(format_number(std::nan("")), "nan");
    EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-inf");
    EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333");
    EXPECT_EQ(format_number(2315.28123456), "2315.28123");
    std::ostringstream out;
    write_csv_row(out, {1.0, 0.5, std::nan("")});
    EXPECT_EQ(out.str(), "1,0.5,nan\n");
}

TEST(Tables, ChangePercent) {
    // 10 -> 8 over a unit budget step is -20 percent
    EXPECT_NEAR(change_pct(10.0, 8.0, 1.0, 2.0), -20.0, 1e-12);
    EXPECT_NEAR(change_pct(10.0, 8.0, 1.0, 3.0), -10.0, 1e-12);
}

TEST(Tables, SingleCellAndReferenceRow) {
    auto cfg = parse("tables.rho = 0.5\ntables.g = 1\n");
    const auto one = build_tables(cfg, 1);
    EXPECT_TRUE(one.all_ok);
    EXPECT_EQ(line_count(one.table1), 2u);
    EXPECT_EQ(line_count(one.table2), 2u);
    EXPECT_EQ(line_count(one.values), 2u);
    EXPECT_NE(one.table2.find(",nan\n"), std::string::npos);
    EXPECT_EQ(one.table1.substr(0, one.table1.find('\n')), "rho,g,neg_v");
    const double neg_v = std::stod(one.table1.substr(one.table1.rfind(',') + 1));
    EXPECT_NEAR(neg_v, 40.1427, 1e-3 * 40.1427);

    // a budget above the claim price fails in its cell only
    cfg = parse("tables.rho = 0.5\ntables.g = 1, 50\n");
    const auto bad = build_tables(cfg, 2);
    EXPECT_FALSE(bad.all_ok);
    EXPECT_EQ(line_count(bad.table1), 3u);
    EXPECT_NE(bad.table1.find("50,nan"), std::string::npos);
}

TEST(Tables, ThreadCountDoesNotChangeBytes) {
    const auto cfg = parse("tables.rho = 0.3, 0.75\ntables.g = 0.5, 2\n");
    const auto a = build_tables(cfg, 1);
    const auto b = build_tables(cfg, 4);
    EXPECT_EQ(a.table1, b.table1);
    EXPECT_EQ(a.table2, b.table2);
    EXPECT_EQ(a.values, b.values);
}

TEST(Solve, ReportFields) {
    const auto report = solve_report(parse("market.rho = 0.5\nsolve.g = 1\n"));
    EXPECT_NEAR(report["neg_v"].get<double>(), 40.1427, 1e-3 * 40.1427);
    EXPECT_LT(std::abs(report["budget_residual"].get<double>()), 1e-6);
    EXPECT_NEAR(report["total_risk"].get<double>(),
                report["projection_gap"].get<double>() + report["residual_risk"].get<double>(), 1e-9);
    try {
        solve_report(parse("solve.g = 50\n"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
    }
}

TEST(Strategy, FlatPathIsFinite) {
    const auto cfg = parse("");
    std::vector<TimePoint> rows;
    for (int i = 0; i < 100; ++i) rows.push_back({1.99 * i / 100.0, 0.0});
    const auto text = strategy_csv(cfg, rows, false);
    EXPECT_EQ(line_count(text), 101u);
    EXPECT_EQ(text.find("nan"), std::string::npos);
    EXPECT_EQ(text.find("inf"), std::string::npos);
    std::vector<TimePoint> late{{2.0, 0.0}};
    try {
        strategy_csv(cfg, late, false);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
    }
}

TEST(Strategy, NearReplicationApproachesDelta) {
    auto cfg = parse("market.rho = 0.5\n");
    const auto params = cfg.params();
    const double mean = expected_claim_q_call(cfg.claim(), params);
    cfg.g = mean * (1.0 - 1e-12);
    const std::vector<TimePoint> rows{{0.0, 0.0}, {0.5, 0.7}, {1.2, 1.5}, {1.9, 0.9}};
    std::istringstream in(strategy_csv(cfg, rows, true));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "t,b_tilde,s_tilde,xi,delta");
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        ASSERT_EQ(vals.size(), 5u);
        EXPECT_NEAR(vals[3], vals[4], 1e-6 * std::max(1.0, std::abs(vals[4]))) << line;
    }
}

TEST(Strategy, ReadsPathCsv) {
    std::istringstream ok("t,b_tilde\n0,0.1\n0.5,-0.2\r\n\n");
    const auto rows = read_path_csv(ok);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1].b_tilde, -0.2);
    std::istringstream bad("t,b_tilde\n0;0.1\n");
    EXPECT_THROW(read_path_csv(bad), Error);
    const auto sim = simulated_path(parse("mc.steps = 10\n"));
    EXPECT_EQ(sim.size(), 10u);
    EXPECT_EQ(sim.front().t, 0.0);
}

TEST(Oracle, ReportPassesAndTamperIsWorse) {
    const auto report = oracle_report(30, 10, 7, std::nullopt);
    EXPECT_TRUE(report["pass"].get<bool>());
    EXPECT_GT(report["tamper_checks"].get<std::size_t>(), 0u);
    EXPECT_GT(report["min_tamper_objective_increase"].get<double>(), 0.0);
    EXPECT_THROW(oracle_report(1, 17, 7, std::nullopt), Error);
    const DiscreteMarket m({0.5, 0.5}, {0.5, 0.5}, {0.0, 10.0});
    const auto c = check_instance({m, 2.0});
    EXPECT_TRUE(c.pass);
    EXPECT_NEAR(c.objective_theorem, 18.0, 1e-12);
    // one exercised atom: nothing can absorb the rebalancing
    EXPECT_TRUE(std::isnan(c.objective_tampered));
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch_dir("cli");
    const std::string out = "--out \"" + dir.string() + "\" ";
    EXPECT_EQ(run_cli(out + "solve --g 1 --rho 0.5"), 0);
    EXPECT_EQ(run_cli(out + "solve --g 50"), 3);
    EXPECT_EQ(run_cli(out + "solve --rho 1.5"), 2);
    EXPECT_EQ(run_cli("nosuchcommand"), 2);
    EXPECT_EQ(run_cli("--config /nonexistent.cfg solve"), 2);
    const auto bad_cfg = dir / "bad.cfg";
    std::ofstream(bad_cfg) << "market.rho = 0.5\nmarket.bogus = 1\n";
    EXPECT_EQ(run_cli("--config \"" + bad_cfg.string() + "\" solve"), 2);
    EXPECT_EQ(run_cli(out + "oracle --count 5 --max-atoms 17"), 3);
    EXPECT_EQ(run_cli(out + "oracle --count 5"), 0);
    EXPECT_EQ(run_cli("oracle --replay /nonexistent.json"), 2);
}

TEST(Cli, OracleReplayOfDumpedInstance) {
    const auto dir = scratch_dir("replay");
    std::mt19937_64 rng(3);
    const auto inst = random_instance(6, rng);
    const auto file = dir / "instance_0.json";
    std::ofstream(file) << to_json(inst).dump(2);
    EXPECT_EQ(run_cli("oracle --replay \"" + file.string() + "\""), 0);
}

TEST(Cli, StrategyIsByteIdenticalForFixedSeed) {
    const auto cfg_file = scratch_dir("strategy_cfg") / "small.cfg";
    std::ofstream(cfg_file) << "mc.steps = 40\n";
    std::string first;
    for (int run = 0; run < 2; ++run) {
        const auto dir = scratch_dir("strategy" + std::to_string(run));
        ASSERT_EQ(run_cli("--config \"" + cfg_file.string() + "\" --seed 42 --out \"" + dir.string() + "\" strategy"), 0);
        const auto text = slurp(dir / "strategy.csv");
        EXPECT_EQ(line_count(text), 41u);
        if (run == 0) first = text;
        else EXPECT_EQ(text, first);
    }
}

TEST(Cli, SimulateSmallRun) {
    const auto dir = scratch_dir("simulate");
    const auto cfg_file = dir / "sim.cfg";
    std::ofstream(cfg_file) << "market.rho = 0.75\nsolve.g = 3\nmc.paths = 200\nmc.steps = 20\n";
    ASSERT_EQ(run_cli("--config \"" + cfg_file.string() + "\" --out \"" + dir.string() + "\" simulate --dump-paths 2"), 0);
    const auto report = nlohmann::json::parse(slurp(dir / "simulate.json"));
    EXPECT_EQ(report["n_paths"].get<std::size_t>(), 200u);
    EXPECT_LE(report["max_interp_error"].get<double>(), 1e-4);
    EXPECT_EQ(line_count(slurp(dir / "paths.csv")), 1u + 2u * 21u);

    SimulateOptions zero;
    zero.zero_strategy = true;
    auto cfg = parse("mc.paths = 50\nmc.steps = 10\nsolve.g = 2\n");
    const auto r = run_simulation(cfg, zero);
    EXPECT_EQ(r.min_terminal_wealth, 2.0);
    EXPECT_NEAR(r.q_mean_wealth.mean, 2.0, 1e-15);
    EXPECT_TRUE(std::isnan(r.max_interp_error));
}
