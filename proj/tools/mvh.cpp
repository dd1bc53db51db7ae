// mvh: solve, tabulate, simulate and cross-check the partially observed
// mean-variance hedge. See README.md for the config keys.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mvh/app/commands.hpp"

int main(int argc, char** argv) {
    using namespace mvh::app;

    CLI::App app{"Mean-variance hedging under partial observation"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    unsigned threads = 0;
    app.add_option("--config", config_path, "Config file (key = value lines)");
    app.add_option("--seed", seed, "Overrides mc.seed; also seeds the oracle sweep");
    app.add_option("--out", out_dir, "Overrides output.dir");
    app.add_option("--threads", threads, "Worker threads (default: MVH_THREADS, else all cores)");

    auto* solve = app.add_subcommand("solve", "Solve for the multiplier and print the risk summary as JSON");
    std::optional<double> solve_g;
    std::optional<double> solve_rho;
    solve->add_option("--g", solve_g, "Overrides solve.g");
    solve->add_option("--rho", solve_rho, "Overrides market.rho");

    auto* tables = app.add_subcommand("tables", "Write table1.csv, table2.csv and values.csv for tables.rho x tables.g");

    auto* strategy = app.add_subcommand("strategy", "Write strategy.csv along a simulated or supplied path");
    std::optional<std::string> path_csv;
    bool with_delta = false;
    strategy->add_option("--path-csv", path_csv, "CSV with header and columns t,b_tilde");
    strategy->add_flag("--delta", with_delta, "Add the pure replication delta column");

    auto* oracle = app.add_subcommand("oracle", "Check the discrete optimal payoff against a brute-force QP");
    std::size_t count = 100;
    std::size_t max_atoms = 10;
    std::optional<std::string> replay;
    oracle->add_option("--count", count, "Number of random instances");
    oracle->add_option("--max-atoms", max_atoms, "Largest instance size (<= 16)");
    oracle->add_option("--replay", replay, "Re-run one dumped instance file");

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo back-test; prints the risk report as JSON");
    SimulateOptions sim_opts;
    simulate->add_flag("--zero-strategy", sim_opts.zero_strategy, "Hold no position (wealth stays at g)");
    simulate->add_option("--dump-paths", sim_opts.dump_paths, "Write the first N physical paths to paths.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    return run_guarded(std::cerr, [&]() -> int {
        RunConfig cfg = load_config(config_path);
        if (seed) cfg.sim.seed = *seed;
        if (out_dir) cfg.output_dir = *out_dir;
        cfg.sim.threads = threads;
        const unsigned workers = mvh::resolve_threads(threads);

        if (*solve) {
            if (solve_g) cfg.g = *solve_g;
            if (solve_rho) cfg.rho = *solve_rho;
            try {
                (void)cfg.params();
            } catch (const mvh::Error& e) {
                throw mvh::Error(mvh::ErrorCode::Config, std::string("--rho: ") + e.what());
            }
            return cmd_solve(cfg, std::cout);
        }
        if (*tables) return cmd_tables(cfg, workers, std::cerr);
        if (*strategy) return cmd_strategy(cfg, path_csv, with_delta);
        if (*oracle) {
            if (replay) return cmd_oracle_replay(*replay, std::cout);
            return cmd_oracle(count, max_atoms, seed.value_or(7), cfg.output_dir, std::cout);
        }
        if (*simulate) return cmd_simulate(cfg, sim_opts, std::cout);
        return exit_config;
    });
}
