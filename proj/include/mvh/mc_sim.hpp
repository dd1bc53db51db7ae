#pragma once

// Monte Carlo back-test of the GBM hedge. Paths are regenerated on demand
// from a counter-based generator keyed by (seed, path, step), so nothing of
// size n_paths * n_steps is ever stored.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "mvh/csv.hpp"
#include "mvh/error.hpp"
#include "mvh/gbm_model.hpp"
#include "mvh/parallel.hpp"
#include "mvh/rng.hpp"

namespace mvh {

enum class Measure { Physical, Martingale };

struct SimConfig {
    std::size_t n_paths = 100000;
    std::size_t n_steps = 2000;
    std::uint64_t seed = 1;
    bool antithetic = false;
    double violation_scale = 0.0;  // 0: ten times the claim scale
    unsigned threads = 0;          // 0: MVH_THREADS or hardware

    void validate() const {
        require(n_paths >= 1, ErrorCode::InvalidArgument, "n_paths must be at least 1");
        require(n_steps >= 10, ErrorCode::InvalidArgument, "n_steps must be at least 10");
        require(!antithetic || n_paths % 2 == 0, ErrorCode::InvalidArgument, "antithetic runs need an even path count");
        require(violation_scale >= 0.0 && std::isfinite(violation_scale), ErrorCode::InvalidArgument,
                "violation_scale must be finite and nonnegative");
    }
};

struct PathState {
    double t = 0.0;
    double w_tilde = 0.0;
    double w_hat = 0.0;
    double b_tilde = 0.0;
    double s_tilde = 1.0;
    double log_s = 0.0;
};

class PathBatch {
public:
    PathBatch(GbmParams params, SimConfig cfg, Measure measure)
        : params_(std::move(params)), cfg_(cfg), measure_(measure) {
        cfg_.validate();
        dt_ = params_.T() / static_cast<double>(cfg_.n_steps);
        sqrt_dt_ = std::sqrt(dt_);
        drift_.resize(cfg_.n_steps + 1);
        for (std::size_t k = 0; k <= cfg_.n_steps; ++k) drift_[k] = params_.drift().integral(time(k));
    }

    const GbmParams& params() const { return params_; }
    const SimConfig& config() const { return cfg_; }
    Measure measure() const { return measure_; }
    std::size_t size() const { return cfg_.n_paths; }
    std::size_t steps() const { return cfg_.n_steps; }
    double dt() const { return dt_; }
    double time(std::size_t k) const {
        return k == cfg_.n_steps ? params_.T() : static_cast<double>(k) * dt_;
    }

    /// Standard normal shocks driving (W~, W^) on step k of path i.
    GaussianPair shocks(std::size_t path, std::size_t k) const {
        const std::uint64_t stream_flag = measure_ == Measure::Martingale ? (std::uint64_t{1} << 63) : 0;
        const std::size_t stream = cfg_.antithetic ? path / 2 : path;
        auto z = gaussian_pair(cfg_.seed, stream | stream_flag, k);
        if (cfg_.antithetic && path % 2 == 1) {
            z.first = -z.first;
            z.second = -z.second;
        }
        return z;
    }

    /// Calls visit(k, before, after) for every step of path i.
    template <class Visit>
    void walk(std::size_t path, Visit&& visit) const {
        const double rho = params_.rho();
        const double rho_bar = std::sqrt(1.0 - rho * rho);
        const double a1 = params_.a1();
        PathState state;
        for (std::size_t k = 0; k < cfg_.n_steps; ++k) {
            const auto z = shocks(path, k);
            PathState next;
            next.t = time(k + 1);
            if (measure_ == Measure::Physical) {
                next.w_tilde = state.w_tilde + sqrt_dt_ * z.first;
                next.b_tilde = next.w_tilde + a1 * next.t;
            } else {
                next.b_tilde = state.b_tilde + sqrt_dt_ * z.first;
                next.w_tilde = next.b_tilde - a1 * next.t;
            }
            next.w_hat = state.w_hat + sqrt_dt_ * z.second;
            next.s_tilde = std::exp(next.b_tilde - 0.5 * next.t);
            next.log_s = rho * next.w_tilde + rho_bar * next.w_hat + drift_[k + 1];
            visit(k, static_cast<const PathState&>(state), static_cast<const PathState&>(next));
            state = next;
        }
    }

    /// Full path, including the initial state.
    std::vector<PathState> path(std::size_t i) const {
        std::vector<PathState> out;
        out.reserve(cfg_.n_steps + 1);
        out.push_back(PathState{});
        walk(i, [&](std::size_t, const PathState&, const PathState& next) { out.push_back(next); });
        return out;
    }

private:
    GbmParams params_;
    SimConfig cfg_;
    Measure measure_;
    double dt_ = 0.0;
    double sqrt_dt_ = 0.0;
    std::vector<double> drift_;
};

inline PathBatch simulate_paths(const GbmParams& params, const SimConfig& cfg, Measure measure) {
    return PathBatch(params, cfg, measure);
}

// ---------------------------------------------------------------------------
// Strategy cache
// ---------------------------------------------------------------------------

struct StrategyGridConfig {
    double far_step = 0.05;          // node spacing away from the threshold
    double far_sd = 8.0;             // half-width of the covered range in sd of B~_t
    std::size_t near_points = 161;   // nodes in the threshold window
    double near_sd = 8.0;            // threshold window half-width in sd of B~_T - B~_t
    double tolerance = 1e-4;         // max |cached - direct| / max(1, |direct|) on the check sample
    std::size_t check_steps = 25;
    std::size_t check_points = 16;
};

/// Per-step cubic B-spline tables of xi(t_k, .): a uniform table over the
/// region the paths visit, and a finer one around the exercise threshold c,
/// whose width scales with sqrt(T - t_k). Points outside both are evaluated
/// directly.
class StrategyGrid {
public:
    using Direct = std::function<double(double, double)>;

    StrategyGrid(Direct direct, const PathBatch& batch, double threshold, StrategyGridConfig cfg = {})
        : direct_(std::move(direct)), cfg_(cfg), threshold_(threshold) {
        require(cfg_.far_step > 0.0 && cfg_.near_points >= 8, ErrorCode::InvalidArgument, "grid too coarse");
        const auto& params = batch.params();
        const std::size_t n = batch.steps();
        times_.resize(n);
        far_.resize(n);
        near_.resize(n);
        near_lo_.assign(n, 0.0);
        near_hi_.assign(n, -1.0);
        far_lo_.assign(n, 0.0);
        far_hi_.assign(n, -1.0);
        const unsigned threads = resolve_threads(batch.config().threads);
        parallel_for(n, threads, [&](std::size_t k) { build_step(k, batch.time(k), params); });
        check(batch, threads);
    }

    double operator()(std::size_t k, double b) const {
        if (b >= near_lo_[k] && b <= near_hi_[k]) return (*near_[k])(b);
        if (b >= far_lo_[k] && b <= far_hi_[k]) return (*far_[k])(b);
        return direct_(times_[k], b);
    }

    double max_check_error() const { return max_error_; }
    double tolerance() const { return cfg_.tolerance; }

private:
    using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

    void build_step(std::size_t k, double t, const GbmParams& params) {
        times_[k] = t;
        const double sd = std::sqrt(t);
        const double pad = 2.0 * cfg_.far_step;
        const double lo = std::min(0.0, params.a1() * t) - cfg_.far_sd * sd - pad;
        const double hi = std::max(0.0, params.a1() * t) + cfg_.far_sd * sd + pad;
        const auto far_nodes = std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil((hi - lo) / cfg_.far_step)) + 1);
        far_[k] = make_table(t, lo, hi, far_nodes);
        far_lo_[k] = lo;
        far_hi_[k] = hi;
        if (std::isfinite(threshold_)) {
            const double half = cfg_.near_sd * std::sqrt(params.T() - t);
            near_[k] = make_table(t, threshold_ - half, threshold_ + half, cfg_.near_points);
            near_lo_[k] = threshold_ - half;
            near_hi_[k] = threshold_ + half;
        }
    }

    // Nodes extend a few steps past [lo, hi] so lookups never use the
    // less accurate boundary segments of the spline.
    std::optional<Spline> make_table(double t, double lo, double hi, std::size_t nodes) const {
        constexpr std::size_t margin = 4;
        const double step = (hi - lo) / static_cast<double>(nodes - 1);
        const double start = lo - step * static_cast<double>(margin);
        std::vector<double> values(nodes + 2 * margin);
        for (std::size_t j = 0; j < values.size(); ++j) values[j] = direct_(t, start + step * static_cast<double>(j));
        return Spline(values.begin(), values.end(), start, step);
    }

    // Compares against direct evaluation at points between nodes on a spread
    // of steps; the worst relative deviation is kept for the report.
    void check(const PathBatch& batch, unsigned threads) {
        const std::size_t n = batch.steps();
        const std::size_t count = std::min(cfg_.check_steps, n);
        std::vector<double> worst(count, 0.0);
        parallel_for(count, threads, [&](std::size_t j) {
            const std::size_t k = count == 1 ? 0 : (n - 1) * j / (count - 1);
            const double t = times_[k];
            for (std::size_t m = 0; m < cfg_.check_points; ++m) {
                const double frac = (static_cast<double>(m) + 0.37) / static_cast<double>(cfg_.check_points);
                for (int region = 0; region < 2; ++region) {
                    const double lo = region == 0 ? far_lo_[k] : near_lo_[k];
                    const double hi = region == 0 ? far_hi_[k] : near_hi_[k];
                    if (hi <= lo) continue;
                    const double b = lo + frac * (hi - lo);
                    const double exact = direct_(t, b);
                    const double err = std::abs((*this)(k, b) - exact) / std::max(1.0, std::abs(exact));
                    worst[j] = std::max(worst[j], err);
                }
            }
        });
        max_error_ = *std::max_element(worst.begin(), worst.end());
    }

    Direct direct_;
    StrategyGridConfig cfg_;
    double threshold_;
    std::vector<double> times_;
    std::vector<std::optional<Spline>> far_;
    std::vector<std::optional<Spline>> near_;
    std::vector<double> near_lo_, near_hi_, far_lo_, far_hi_;
    double max_error_ = 0.0;
};

// ---------------------------------------------------------------------------
// Rollout and estimation
// ---------------------------------------------------------------------------

struct HedgeOutcome {
    Measure measure;
    double g;
    std::vector<double> wealth;
    std::vector<double> b_tilde_T;
    std::vector<double> log_s_T;
};

namespace detail {

template <class Strategy>
double strategy_at(const Strategy& strategy, std::size_t k, double t, double b) {
    if constexpr (std::same_as<std::remove_cvref_t<Strategy>, StrategyGrid>) {
        (void)t;
        return strategy(k, b);
    } else {
        (void)k;
        return strategy(t, b);
    }
}

}  // namespace detail

/// wealth_T = g + sum_k xi(t_k, B~_{t_k}) (S~_{t_{k+1}} - S~_{t_k}). The grid
/// never reaches T itself, so the last sub-interval uses xi at T - dt.
template <class Strategy>
HedgeOutcome rollout_hedge(const PathBatch& batch, const Strategy& strategy, double g) {
    const std::size_t n = batch.size();
    HedgeOutcome out{batch.measure(), g, std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
    parallel_for(n, resolve_threads(batch.config().threads), [&](std::size_t i) {
        double gains = 0.0;
        double carry = 0.0;  // Neumaier compensation
        PathState last;
        batch.walk(i, [&](std::size_t k, const PathState& s, const PathState& next) {
            const double term = detail::strategy_at(strategy, k, s.t, s.b_tilde) * (next.s_tilde - s.s_tilde);
            const double sum = gains + term;
            carry += std::abs(gains) >= std::abs(term) ? (gains - sum) + term : (term - sum) + gains;
            gains = sum;
            last = next;
        });
        out.wealth[i] = g + (gains + carry);
        out.b_tilde_T[i] = last.b_tilde;
        out.log_s_T[i] = last.log_s;
    });
    return out;
}

struct Estimate {
    double mean;
    double se;
};

/// Neumaier-compensated sum.
inline double compensated_sum(std::span<const double> xs) {
    double sum = 0.0;
    double carry = 0.0;
    for (double x : xs) {
        const double t = sum + x;
        carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    return sum + carry;
}

/// Sample mean and its standard error. With antithetic pairing, consecutive
/// samples are averaged first and the pairs treated as independent draws.
inline Estimate sample_estimate(std::span<const double> xs, bool antithetic = false) {
    std::vector<double> units;
    if (antithetic) {
        units.resize(xs.size() / 2);
        for (std::size_t j = 0; j < units.size(); ++j) units[j] = 0.5 * (xs[2 * j] + xs[2 * j + 1]);
    } else {
        units.assign(xs.begin(), xs.end());
    }
    const std::size_t m = units.size();
    if (m == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    const double mean = compensated_sum(units) / static_cast<double>(m);
    if (m == 1) return {mean, std::numeric_limits<double>::quiet_NaN()};
    std::vector<double> dev(m);
    for (std::size_t j = 0; j < m; ++j) dev[j] = (units[j] - mean) * (units[j] - mean);
    const double var = compensated_sum(dev) / static_cast<double>(m - 1);
    return {mean, std::sqrt(var / static_cast<double>(m))};
}

struct RiskReport {
    Estimate total_risk_mc;       // E(G - wealth)^2
    Estimate projection_gap_mc;   // E(G - G~)^2
    Estimate residual_mc;         // E(G~ - wealth)^2
    double closed_form_total;         // projection_gap + residual_risk
    double closed_form_total_direct;  // projection_gap + residual_risk_direct
    double min_terminal_wealth;
    double violation_tolerance;
    double violation_rate;
    Estimate q_mean_wealth;       // nan unless a martingale run is supplied
    double max_interp_error;      // nan when the strategy was evaluated directly
    std::size_t n_paths;
    std::size_t n_steps;
};

/// Risk estimates from a physical-measure rollout. `dual` supplies the closed
/// form for comparison; without it those fields are nan.
inline RiskReport estimate_risk(const PathBatch& paths, const Claim& claim, const HedgeOutcome& physical,
                                const std::optional<DualSolution>& dual, const GbmParams& params,
                                const HedgeOutcome* martingale = nullptr, const QuadratureConfig& qcfg = {}) {
    require(physical.measure == Measure::Physical, ErrorCode::InvalidArgument,
            "risk estimation needs a physical-measure rollout");
    const std::size_t n = physical.wealth.size();
    const bool anti = paths.config().antithetic;
    std::vector<double> total(n), gap(n), resid(n);
    const double tolerance = (paths.config().violation_scale > 0.0 ? paths.config().violation_scale
                                                                   : 10.0 * claim.strike()) *
                             std::sqrt(paths.dt());
    double min_wealth = std::numeric_limits<double>::infinity();
    std::size_t violations = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double G = claim.payoff(std::exp(physical.log_s_T[i]));
        const double G_obs = f_value(physical.b_tilde_T[i], claim, params, qcfg);
        const double w = physical.wealth[i];
        total[i] = (G - w) * (G - w);
        gap[i] = (G - G_obs) * (G - G_obs);
        resid[i] = (G_obs - w) * (G_obs - w);
        min_wealth = std::min(min_wealth, w);
        if (w < -tolerance) ++violations;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    RiskReport report{sample_estimate(total, anti),
                      sample_estimate(gap, anti),
                      sample_estimate(resid, anti),
                      nan,
                      nan,
                      min_wealth,
                      tolerance,
                      static_cast<double>(violations) / static_cast<double>(n),
                      {nan, nan},
                      nan,
                      n,
                      paths.steps()};
    if (dual) {
        const double pg = projection_gap(claim, params, qcfg);
        report.closed_form_total = pg + residual_risk(*dual, claim, params, qcfg);
        report.closed_form_total_direct = pg + residual_risk_direct(*dual, claim, params, qcfg);
    }
    if (martingale) {
        require(martingale->measure == Measure::Martingale, ErrorCode::InvalidArgument,
                "q_mean_wealth needs a martingale-measure rollout");
        report.q_mean_wealth = sample_estimate(martingale->wealth, anti);
    }
    return report;
}

/// The optimal hedge as a cached grid for the given batch.
inline StrategyGrid optimal_strategy_grid(const PathBatch& batch, const DualSolution& dual, const Claim& claim,
                                          const QuadratureConfig& qcfg = {}, StrategyGridConfig gcfg = {}) {
    const GbmParams params = batch.params();
    return StrategyGrid(
        [dual, claim, params, qcfg](double t, double b) { return strategy(t, b, dual, claim, params, qcfg); },
        batch, dual.h_inv_at_neg_v, gcfg);
}

/// CSV dump of the listed paths with the strategy and running wealth.
template <class Strategy>
void write_paths_csv(std::ostream& out, const PathBatch& batch, std::span<const std::size_t> indices,
                     const Strategy& strategy, double g) {
    out << "path,t,w_tilde,w_hat,b_tilde,s_tilde,s,xi,wealth\n";
    for (std::size_t i : indices) {
        require(i < batch.size(), ErrorCode::InvalidArgument, "path index out of range");
        double wealth = g;
        auto row = [&](const PathState& s, double xi) {
            write_csv_row(out, {static_cast<double>(i), s.t, s.w_tilde, s.w_hat, s.b_tilde, s.s_tilde,
                                std::exp(s.log_s), xi, wealth});
        };
        batch.walk(i, [&](std::size_t k, const PathState& s, const PathState& next) {
            const double xi = detail::strategy_at(strategy, k, s.t, s.b_tilde);
            row(s, xi);
            wealth += xi * (next.s_tilde - s.s_tilde);
            if (k + 1 == batch.steps()) row(next, std::numeric_limits<double>::quiet_NaN());
        });
    }
}

}  // namespace mvh
