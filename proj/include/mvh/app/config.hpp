#pragma once

// Run configuration: a flat text file of `key = value` lines. Blank lines and
// text after '#' are ignored. Unknown keys and bad values are rejected with
// the offending line number.

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvh/error.hpp"
#include "mvh/gbm_model.hpp"
#include "mvh/mc_sim.hpp"

namespace mvh::app {

struct RunConfig {
    double T = 2.0;
    double a = 0.5;
    double rho = 0.5;
    std::vector<PiecewiseDrift::Piece> drift{{0.0, 1.0}};
    std::string claim_type = "call";
    double K = 1.0;
    double cap = 0.0;
    double g = 1.0;
    std::vector<double> table_rho{0.3, 0.5, 0.75};
    std::vector<double> table_g{0.5, 1.0, 2.0, 3.0};
    SolverConfig solver{};
    SimConfig sim{};
    std::string output_dir = "out";

    GbmParams params(double rho_value) const { return GbmParams(T, a, rho_value, PiecewiseDrift(drift)); }
    GbmParams params() const { return params(rho); }

    Claim claim() const {
        if (claim_type == "call") return Claim::call(K);
        // capped call min((s - K)^+, cap): nondecreasing, bounded
        const double strike = K;
        const double limit = cap;
        return Claim::general([strike, limit](double s) { return std::min(std::max(s - strike, 0.0), limit); },
                              {std::log(K), std::log(K + cap)}, "capped_call", K);
    }
};

namespace detail {

inline std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] inline void fail(int line, const std::string& msg) {
    throw Error(ErrorCode::Config, "line " + std::to_string(line) + ": " + msg);
}

inline double parse_double(const std::string& text, int line, const std::string& key) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) fail(line, key + ": expected a finite number, got '" + text + "'");
    return value;
}

inline std::uint64_t parse_unsigned(const std::string& text, int line, const std::string& key) {
    std::uint64_t value = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) fail(line, key + ": expected a nonnegative integer, got '" + text + "'");
    return value;
}

inline bool parse_bool(const std::string& text, int line, const std::string& key) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    fail(line, key + ": expected true or false, got '" + text + "'");
}

inline std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(trim(item));
    return parts;
}

inline std::vector<double> parse_list(const std::string& text, int line, const std::string& key) {
    std::vector<double> out;
    for (const auto& part : split(text, ',')) out.push_back(parse_double(part, line, key));
    if (out.empty()) fail(line, key + ": list must not be empty");
    return out;
}

// "0:1.0, 0.5:2.0" -> pieces starting at 0 and 0.5
inline std::vector<PiecewiseDrift::Piece> parse_drift(const std::string& text, int line) {
    std::vector<PiecewiseDrift::Piece> out;
    for (const auto& part : split(text, ',')) {
        const auto colon = part.find(':');
        if (colon == std::string::npos) fail(line, "market.drift: expected start:value pairs");
        out.push_back({parse_double(trim(part.substr(0, colon)), line, "market.drift"),
                       parse_double(trim(part.substr(colon + 1)), line, "market.drift")});
    }
    return out;
}

}  // namespace detail

/// Parses config text; every constraint of the underlying types is checked
/// here so commands only see valid settings.
inline RunConfig parse_config(std::istream& in) {
    using namespace detail;
    RunConfig cfg;
    std::map<std::string, int> seen;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
        const std::string text = trim(raw);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) fail(line, "expected 'key = value'");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (value.empty()) fail(line, key + ": missing value");
        if (seen.count(key)) fail(line, key + ": duplicate key (first set on line " + std::to_string(seen[key]) + ")");
        seen[key] = line;

        if (key == "market.T") cfg.T = parse_double(value, line, key);
        else if (key == "market.a") cfg.a = parse_double(value, line, key);
        else if (key == "market.rho") cfg.rho = parse_double(value, line, key);
        else if (key == "market.drift") cfg.drift = parse_drift(value, line);
        else if (key == "claim.type") cfg.claim_type = value;
        else if (key == "claim.K") cfg.K = parse_double(value, line, key);
        else if (key == "claim.cap") cfg.cap = parse_double(value, line, key);
        else if (key == "solve.g") cfg.g = parse_double(value, line, key);
        else if (key == "tables.rho") cfg.table_rho = parse_list(value, line, key);
        else if (key == "tables.g") cfg.table_g = parse_list(value, line, key);
        else if (key == "quad.nodes") cfg.solver.quad.nodes = static_cast<int>(parse_unsigned(value, line, key));
        else if (key == "quad.truncation_sd") cfg.solver.quad.truncation_sd = parse_double(value, line, key);
        else if (key == "quad.abs_tol") cfg.solver.quad.abs_tol = parse_double(value, line, key);
        else if (key == "quad.max_panels") cfg.solver.quad.max_panels = static_cast<int>(parse_unsigned(value, line, key));
        else if (key == "root.abs_tol") cfg.solver.root.abs_tol = parse_double(value, line, key);
        else if (key == "root.x_tol") cfg.solver.root.x_tol = parse_double(value, line, key);
        else if (key == "root.max_iter") cfg.solver.root.max_iter = static_cast<int>(parse_unsigned(value, line, key));
        else if (key == "mc.paths") cfg.sim.n_paths = parse_unsigned(value, line, key);
        else if (key == "mc.steps") cfg.sim.n_steps = parse_unsigned(value, line, key);
        else if (key == "mc.seed") cfg.sim.seed = parse_unsigned(value, line, key);
        else if (key == "mc.antithetic") cfg.sim.antithetic = parse_bool(value, line, key);
        else if (key == "mc.violation_scale") cfg.sim.violation_scale = parse_double(value, line, key);
        else if (key == "output.dir") cfg.output_dir = value;
        else fail(line, "unknown key '" + key + "'");
    }

    // Semantic checks, reported against the line that set the value.
    auto check = [&](const std::string& key, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            const int at = seen.count(key) ? seen[key] : 0;
            throw Error(ErrorCode::Config, (at ? "line " + std::to_string(at) : std::string("default")) + ": " + key +
                                               ": " + e.what());
        }
    };
    check("market.T", [&] { require(cfg.T > 0.0, ErrorCode::InvalidArgument, "T must be positive"); });
    check("market.a", [&] { require(cfg.a > 0.0, ErrorCode::InvalidArgument, "a must be positive"); });
    check("market.rho", [&] {
        require(cfg.rho >= 0.0 && cfg.rho < 1.0, ErrorCode::InvalidArgument, "rho must lie in [0, 1)");
    });
    check("market.drift", [&] { (void)PiecewiseDrift(cfg.drift); });
    check("claim.type", [&] {
        require(cfg.claim_type == "call" || cfg.claim_type == "capped_call", ErrorCode::InvalidArgument,
                "claim.type must be call or capped_call");
    });
    check("claim.K", [&] { (void)cfg.claim(); });
    check("claim.cap", [&] {
        require(cfg.claim_type != "capped_call" || cfg.cap > 0.0, ErrorCode::InvalidArgument, "cap must be positive");
    });
    check("tables.rho", [&] {
        for (double r : cfg.table_rho) (void)cfg.params(r);
    });
    check("tables.g", [&] {
        for (double g : cfg.table_g) require(g > 0.0, ErrorCode::InvalidArgument, "budgets must be positive");
    });
    check("solve.g", [&] { require(cfg.g > 0.0, ErrorCode::InvalidArgument, "budget must be positive"); });
    check("quad.nodes", [&] { cfg.solver.quad.validate(); });
    check("root.abs_tol", [&] { cfg.solver.root.validate(); });
    check("mc.steps", [&] { cfg.sim.validate(); });
    return cfg;
}

inline RunConfig load_config(const std::optional<std::string>& path) {
    if (!path) {
        std::istringstream empty;
        return parse_config(empty);
    }
    std::ifstream in(*path);
    if (!in) throw Error(ErrorCode::Config, "cannot open config file '" + *path + "'");
    return parse_config(in);
}

}  // namespace mvh::app
