#pragma once

// Subcommand implementations behind the mvh executable. Each returns the
// process exit status: 0 ok, 2 config error, 3 numeric failure, 4 oracle
// mismatch. Library errors propagate as mvh::Error; run_guarded maps them.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvh/app/config.hpp"
#include "mvh/csv.hpp"
#include "mvh/discrete_oracle.hpp"
#include "mvh/error.hpp"
#include "mvh/gbm_model.hpp"
#include "mvh/mc_sim.hpp"
#include "mvh/parallel.hpp"

namespace mvh::app {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_numeric = 3;
inline constexpr int exit_mismatch = 4;

using nlohmann::json;

namespace detail {

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }

inline std::filesystem::path prepare_dir(const std::string& dir) {
    std::filesystem::path path(dir);
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw Error(ErrorCode::Config, "cannot create output directory '" + dir + "': " + ec.message());
    return path;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Config, "cannot write '" + path.string() + "'");
    out << text;
}

inline double claim_mean(const Claim& claim, const GbmParams& params, const QuadratureConfig& quad) {
    return claim.is_call() ? expected_claim_q_call(claim, params) : expected_claim_q(claim, params, quad);
}

inline json estimate_json(const Estimate& e) { return {{"mean", e.mean}, {"se", e.se}}; }

}  // namespace detail

/// Maps library errors onto exit statuses and prints them to `err`.
template <class Fn>
int run_guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.code() == ErrorCode::Config ? exit_config : exit_numeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_numeric;
    }
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

inline json solve_report(const RunConfig& cfg) {
    const auto params = cfg.params();
    const auto claim = cfg.claim();
    const auto& quad = cfg.solver.quad;
    const auto dual = solve_v(cfg.g, claim, params, cfg.solver);
    const double check = budget_direct(dual.v, claim, params, quad, cfg.solver.root) - cfg.g;
    const double gap = projection_gap(claim, params, quad);
    const double resid = residual_risk(dual, claim, params, quad);
    return {{"rho", params.rho()},
            {"g", cfg.g},
            {"v", dual.v},
            {"neg_v", -dual.v},
            {"h_inv_threshold", dual.h_inv_at_neg_v},
            {"budget_residual", check},
            {"expected_claim_q", detail::claim_mean(claim, params, quad)},
            {"residual_risk", resid},
            {"residual_risk_direct", residual_risk_direct(dual, claim, params, quad)},
            {"projection_gap", gap},
            {"total_risk", gap + resid}};
}

inline int cmd_solve(const RunConfig& cfg, std::ostream& out) {
    out << solve_report(cfg).dump(2) << '\n';
    return exit_ok;
}

// ---------------------------------------------------------------------------
// tables
// ---------------------------------------------------------------------------

struct TableCell {
    double rho;
    double g;
    double neg_v = detail::nan();
    double residual = detail::nan();
    std::string error;
};

struct TableOutput {
    std::string table1;
    std::string table2;
    std::string values;
    bool all_ok;
};

/// (m_{i+1} - m_i) / ((g_{i+1} - g_i) m_i), in percent.
inline double change_pct(double m0, double m1, double g0, double g1) { return 100.0 * (m1 - m0) / ((g1 - g0) * m0); }

inline TableOutput build_tables(const RunConfig& cfg, unsigned threads) {
    const auto claim = cfg.claim();
    const auto& quad = cfg.solver.quad;
    const std::size_t nr = cfg.table_rho.size();
    const std::size_t ng = cfg.table_g.size();
    std::vector<TableCell> cells(nr * ng);
    for (std::size_t i = 0; i < nr; ++i) {
        for (std::size_t j = 0; j < ng; ++j) cells[i * ng + j] = {cfg.table_rho[i], cfg.table_g[j], detail::nan(), detail::nan(), {}};
    }
    struct RhoValues {
        double gap = detail::nan();
        double mean = detail::nan();
        std::string error;
    };
    std::vector<RhoValues> values(nr);

    parallel_for(cells.size() + nr, threads, [&](std::size_t idx) {
        if (idx < cells.size()) {
            auto& cell = cells[idx];
            try {
                const auto params = cfg.params(cell.rho);
                const auto dual = solve_v(cell.g, claim, params, cfg.solver);
                cell.neg_v = -dual.v;
                cell.residual = residual_risk(dual, claim, params, quad);
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        } else {
            auto& row = values[idx - cells.size()];
            try {
                const auto params = cfg.params(cfg.table_rho[idx - cells.size()]);
                row.gap = projection_gap(claim, params, quad);
                row.mean = detail::claim_mean(claim, params, quad);
            } catch (const std::exception& e) {
                row.error = e.what();
            }
        }
    });

    std::ostringstream t1, t2, tv;
    t1 << "rho,g,neg_v\n";
    t2 << "rho,g,residual,change_pct\n";
    tv << "rho,projection_gap,expected_claim_q\n";
    bool ok = true;
    for (std::size_t i = 0; i < nr; ++i) {
        for (std::size_t j = 0; j < ng; ++j) {
            const auto& c = cells[i * ng + j];
            ok = ok && c.error.empty();
            const double change = j + 1 < ng ? change_pct(c.residual, cells[i * ng + j + 1].residual, c.g,
                                                          cells[i * ng + j + 1].g)
                                             : detail::nan();
            write_csv_row(t1, {c.rho, c.g, c.neg_v});
            write_csv_row(t2, {c.rho, c.g, c.residual, change});
        }
        ok = ok && values[i].error.empty();
        write_csv_row(tv, {cfg.table_rho[i], values[i].gap, values[i].mean});
    }
    return {t1.str(), t2.str(), tv.str(), ok};
}

inline int cmd_tables(const RunConfig& cfg, unsigned threads, std::ostream& err) {
    const auto tables = build_tables(cfg, threads);
    const auto dir = detail::prepare_dir(cfg.output_dir);
    detail::write_file(dir / "table1.csv", tables.table1);
    detail::write_file(dir / "table2.csv", tables.table2);
    detail::write_file(dir / "values.csv", tables.values);
    if (!tables.all_ok) {
        err << "error: some cells failed and were written as nan\n";
        return exit_numeric;
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------
// strategy
// ---------------------------------------------------------------------------

struct TimePoint {
    double t;
    double b_tilde;
};

/// Reads a CSV with a header row and columns t,b_tilde.
inline std::vector<TimePoint> read_path_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::Config, "path CSV is empty");
    std::vector<TimePoint> rows;
    int number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw Error(ErrorCode::Config, "path CSV row " + std::to_string(number) + ": expected t,b_tilde");
        rows.push_back({app::detail::parse_double(app::detail::trim(line.substr(0, comma)), number, "t"),
                        app::detail::parse_double(app::detail::trim(line.substr(comma + 1)), number, "b_tilde")});
    }
    return rows;
}

/// Rows t_k, B~_{t_k} of simulated physical path 0 for k < n_steps.
inline std::vector<TimePoint> simulated_path(const RunConfig& cfg) {
    SimConfig sim = cfg.sim;
    sim.n_paths = 1;
    sim.antithetic = false;
    const PathBatch batch(cfg.params(), sim, Measure::Physical);
    std::vector<TimePoint> rows;
    for (const auto& s : batch.path(0)) {
        if (rows.size() == batch.steps()) break;
        rows.push_back({s.t, s.b_tilde});
    }
    return rows;
}

inline std::string strategy_csv(const RunConfig& cfg, const std::vector<TimePoint>& rows, bool with_delta) {
    const auto params = cfg.params();
    const auto claim = cfg.claim();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!(rows[i].t >= 0.0 && rows[i].t < params.T() - params.epsilon_time())) {
            throw Error(ErrorCode::Config, "path row " + std::to_string(i + 1) + ": t must lie in [0, T - epsilon_time)");
        }
    }
    const auto dual = solve_v(cfg.g, claim, params, cfg.solver);
    std::ostringstream out;
    out << (with_delta ? "t,b_tilde,s_tilde,xi,delta\n" : "t,b_tilde,s_tilde,xi\n");
    for (const auto& r : rows) {
        const double xi = strategy(r.t, r.b_tilde, dual, claim, params, cfg.solver.quad);
        const double s = s_tilde_of(r.t, r.b_tilde);
        if (with_delta) {
            write_csv_row(out, {r.t, r.b_tilde, s, xi, replication_delta(r.t, r.b_tilde, claim, params, cfg.solver.quad)});
        } else {
            write_csv_row(out, {r.t, r.b_tilde, s, xi});
        }
    }
    return out.str();
}

inline int cmd_strategy(const RunConfig& cfg, const std::optional<std::string>& path_csv, bool with_delta) {
    std::vector<TimePoint> rows;
    if (path_csv) {
        std::ifstream in(*path_csv);
        if (!in) throw Error(ErrorCode::Config, "cannot open path CSV '" + *path_csv + "'");
        rows = read_path_csv(in);
    } else {
        rows = simulated_path(cfg);
    }
    const auto text = strategy_csv(cfg, rows, with_delta);
    detail::write_file(detail::prepare_dir(cfg.output_dir) / "strategy.csv", text);
    return exit_ok;
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

struct OracleCheck {
    double max_payoff_deviation;
    double budget_error;
    double objective_theorem;
    double objective_qp;
    double objective_tampered;  // nan when no atom can absorb the rebalancing
    bool pass;
};

inline constexpr double oracle_payoff_tol = 1e-9;
inline constexpr double oracle_budget_tol = 1e-12;

/// Compares (G + v D)^+ with the brute-force QP optimum, and perturbs the
/// theorem payoff by +delta on its first exercised atom, taking the budget
/// back from the largest other exercised atom.
inline OracleCheck check_instance(const OracleInstance& inst, double delta = 1e-3) {
    const auto& m = inst.market;
    const double v = dual_solve_discrete(m, inst.g);
    const auto x = theorem_payoff(m, v);
    const auto qp = qp_solve(m, inst.g);
    double dev = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) dev = std::max(dev, std::abs(x[i] - qp.payoff[i]));
    const double budget = std::abs(m.expect_q(x) - inst.g);

    double tampered = detail::nan();
    std::size_t up = m.size(), down = m.size();
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (x[i] <= 0.0) continue;
        if (up == m.size()) up = i;
        else if (down == m.size() || x[i] > x[down]) down = i;
    }
    if (up < m.size() && down < m.size() && x[down] > delta * m.q()[up] / m.q()[down]) {
        auto y = x;
        y[up] += delta;
        y[down] -= delta * m.q()[up] / m.q()[down];
        tampered = m.objective(y);
    }
    const bool pass = dev <= oracle_payoff_tol && budget <= oracle_budget_tol;
    return {dev, budget, m.objective(x), qp.objective, tampered, pass};
}

/// count instances with 2..max_atoms atoms from a seeded mt19937_64. Failing
/// instances are written to `replay_dir` as JSON.
inline json oracle_report(std::size_t count, std::size_t max_atoms, std::uint64_t seed,
                          const std::optional<std::filesystem::path>& replay_dir) {
    if (max_atoms > 16) throw Error(ErrorCode::SizeLimit, "max_atoms must be <= 16");
    require(max_atoms >= 1, ErrorCode::Config, "max_atoms must be at least 1");
    std::mt19937_64 rng(seed);
    double worst_dev = 0.0, worst_budget = 0.0, min_tamper_gain = std::numeric_limits<double>::infinity();
    std::size_t failures = 0, tamper_checks = 0, tamper_failures = 0;
    json failed = json::array();
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t lo = std::min<std::size_t>(2, max_atoms);
        const std::size_t n = lo + static_cast<std::size_t>(rng() % (max_atoms - lo + 1));
        const auto inst = random_instance(n, rng);
        const auto c = check_instance(inst);
        worst_dev = std::max(worst_dev, c.max_payoff_deviation);
        worst_budget = std::max(worst_budget, c.budget_error);
        if (!std::isnan(c.objective_tampered)) {
            ++tamper_checks;
            const double gain = c.objective_tampered - c.objective_theorem;
            min_tamper_gain = std::min(min_tamper_gain, gain);
            if (!(gain > 0.0)) ++tamper_failures;
        }
        if (!c.pass) {
            ++failures;
            failed.push_back(k);
            if (replay_dir) {
                std::filesystem::create_directories(*replay_dir);
                detail::write_file(*replay_dir / ("instance_" + std::to_string(k) + ".json"), to_json(inst).dump(2) + "\n");
            }
        }
    }
    return {{"count", count},
            {"max_atoms", max_atoms},
            {"seed", seed},
            {"pass", failures == 0 && tamper_failures == 0},
            {"failures", failures},
            {"failed_instances", failed},
            {"max_payoff_deviation", worst_dev},
            {"max_budget_error", worst_budget},
            {"tamper_checks", tamper_checks},
            {"tamper_failures", tamper_failures},
            {"min_tamper_objective_increase", tamper_checks ? min_tamper_gain : detail::nan()}};
}

inline int cmd_oracle(std::size_t count, std::size_t max_atoms, std::uint64_t seed, const std::string& out_dir,
                      std::ostream& out) {
    const auto report = oracle_report(count, max_atoms, seed, std::filesystem::path(out_dir) / "oracle_replay");
    out << report.dump(2) << '\n';
    return report["pass"].get<bool>() ? exit_ok : exit_mismatch;
}

/// Re-runs one dumped instance.
inline int cmd_oracle_replay(const std::string& file, std::ostream& out) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::Config, "cannot open replay file '" + file + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Config, std::string("bad replay file: ") + e.what());
    }
    const auto c = check_instance(instance_from_json(j));
    out << json{{"pass", c.pass},
                {"max_payoff_deviation", c.max_payoff_deviation},
                {"budget_error", c.budget_error},
                {"objective_theorem", c.objective_theorem},
                {"objective_qp", c.objective_qp},
                {"objective_tampered", c.objective_tampered}}
               .dump(2)
        << '\n';
    return c.pass ? exit_ok : exit_mismatch;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

inline json report_json(const RiskReport& r) {
    return {{"total_risk_mc", detail::estimate_json(r.total_risk_mc)},
            {"projection_gap_mc", detail::estimate_json(r.projection_gap_mc)},
            {"residual_mc", detail::estimate_json(r.residual_mc)},
            {"closed_form_total", r.closed_form_total},
            {"closed_form_total_direct", r.closed_form_total_direct},
            {"min_terminal_wealth", r.min_terminal_wealth},
            {"violation_tolerance", r.violation_tolerance},
            {"violation_rate", r.violation_rate},
            {"q_mean_wealth", detail::estimate_json(r.q_mean_wealth)},
            {"max_interp_error", r.max_interp_error},
            {"n_paths", r.n_paths},
            {"n_steps", r.n_steps}};
}

struct SimulateOptions {
    bool zero_strategy = false;
    std::size_t dump_paths = 0;
};

inline RiskReport run_simulation(const RunConfig& cfg, const SimulateOptions& opts,
                                 const std::optional<std::filesystem::path>& dump_file = std::nullopt) {
    const auto params = cfg.params();
    const auto claim = cfg.claim();
    const auto dual = solve_v(cfg.g, claim, params, cfg.solver);
    const PathBatch physical(params, cfg.sim, Measure::Physical);
    const PathBatch martingale(params, cfg.sim, Measure::Martingale);

    auto finish = [&](const auto& strategy, double interp_error) {
        const auto p_run = rollout_hedge(physical, strategy, cfg.g);
        const auto q_run = rollout_hedge(martingale, strategy, cfg.g);
        auto report = estimate_risk(physical, claim, p_run, dual, params, &q_run, cfg.solver.quad);
        report.max_interp_error = interp_error;
        if (dump_file && opts.dump_paths > 0) {
            std::vector<std::size_t> idx(std::min(opts.dump_paths, physical.size()));
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            std::ofstream out(*dump_file, std::ios::binary);
            if (!out) throw Error(ErrorCode::Config, "cannot write '" + dump_file->string() + "'");
            write_paths_csv(out, physical, idx, strategy, cfg.g);
        }
        return report;
    };
    if (opts.zero_strategy) return finish([](double, double) { return 0.0; }, detail::nan());
    const auto grid = optimal_strategy_grid(physical, dual, claim, cfg.solver.quad);
    if (grid.max_check_error() > grid.tolerance()) {
        throw Error(ErrorCode::QuadratureFailure, "strategy cache deviates from direct evaluation by " +
                                                      format_number(grid.max_check_error()));
    }
    return finish(grid, grid.max_check_error());
}

inline int cmd_simulate(const RunConfig& cfg, const SimulateOptions& opts, std::ostream& out) {
    const auto dir = detail::prepare_dir(cfg.output_dir);
    const auto report = run_simulation(cfg, opts, dir / "paths.csv");
    const auto text = report_json(report).dump(2) + "\n";
    detail::write_file(dir / "simulate.json", text);
    out << text;
    return exit_ok;
}

}  // namespace mvh::app
