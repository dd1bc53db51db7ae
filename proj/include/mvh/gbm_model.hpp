#pragma once

// Two correlated geometric Brownian motions: the observable asset
// S~_t = exp(B~_t - t/2) is traded, the claim is written on the unobservable
// S_t = exp(rho W~_t + sqrt(1-rho^2) W^_t + int_0^t a(s) ds).
//
// Everything here is expressed through the value b of B~_T (or B~_t). Under
// the martingale measure Q, B~ is a standard Wiener process; under P it has
// drift a1 = a + 1/2.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mvh/error.hpp"
#include "mvh/num_core/normal.hpp"
#include "mvh/num_core/quadrature.hpp"
#include "mvh/num_core/roots.hpp"

namespace mvh {

/// Piecewise-constant drift a(s): value_i on [start_i, start_{i+1}).
class PiecewiseDrift {
public:
    struct Piece {
        double start;
        double value;
    };

    PiecewiseDrift() : pieces_{{0.0, 1.0}} {}
    explicit PiecewiseDrift(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {
        require(!pieces_.empty(), ErrorCode::InvalidArgument, "drift needs at least one piece");
        require(pieces_.front().start == 0.0, ErrorCode::InvalidArgument, "drift must start at t=0");
        for (std::size_t i = 0; i < pieces_.size(); ++i) {
            require(std::isfinite(pieces_[i].value), ErrorCode::InvalidArgument, "drift value must be finite");
            if (i > 0) {
                require(pieces_[i].start > pieces_[i - 1].start, ErrorCode::InvalidArgument,
                        "drift breakpoints must be strictly increasing");
            }
        }
    }

    static PiecewiseDrift constant(double value) { return PiecewiseDrift({{0.0, value}}); }

    /// Exact int_0^t a(s) ds.
    double integral(double t) const {
        double total = 0.0;
        for (std::size_t i = 0; i < pieces_.size(); ++i) {
            const double lo = pieces_[i].start;
            if (lo >= t) break;
            const double hi = (i + 1 < pieces_.size()) ? std::min(pieces_[i + 1].start, t) : t;
            total += pieces_[i].value * (hi - lo);
        }
        return total;
    }

    const std::vector<Piece>& pieces() const { return pieces_; }

private:
    std::vector<Piece> pieces_;
};

class GbmParams {
public:
    GbmParams(double horizon, double a, double rho, PiecewiseDrift drift = PiecewiseDrift::constant(1.0))
        : T_(horizon), a_(a), rho_(rho), drift_(std::move(drift)) {
        require(std::isfinite(T_) && T_ > 0.0, ErrorCode::InvalidArgument, "T must be positive");
        require(std::isfinite(a_) && a_ > 0.0, ErrorCode::InvalidArgument, "a must be positive");
        require(rho_ >= 0.0 && rho_ < 1.0, ErrorCode::InvalidArgument, "rho must lie in [0, 1)");
        drift_integral_ = drift_.integral(T_);
    }

    double T() const { return T_; }
    double a() const { return a_; }
    double a1() const { return a_ + 0.5; }
    double rho() const { return rho_; }
    const PiecewiseDrift& drift() const { return drift_; }
    double drift_integral() const { return drift_integral_; }

    /// rho * A_T, finite for rho = 0 where A_T itself is not.
    double rho_A() const { return drift_integral_ - rho_ * a1() * T_; }
    double A_T() const {
        return rho_ == 0.0 ? std::numeric_limits<double>::infinity() : drift_integral_ / rho_ - a1() * T_;
    }
    /// Conditional standard deviation sqrt(T(1-rho^2)) of ln S_T given B~_T.
    double residual_sd() const { return std::sqrt(T_ * (1.0 - rho_ * rho_)); }
    double epsilon_time() const { return 1e-9 * T_; }

private:
    double T_;
    double a_;
    double rho_;
    PiecewiseDrift drift_;
    double drift_integral_;
};

/// T=2, a=0.5, a(s)=1 with the given correlation.
inline GbmParams reference_params(double rho) { return GbmParams(2.0, 0.5, rho, PiecewiseDrift::constant(1.0)); }

/// Contingent claim H(S_T): a call, or any nondecreasing nonnegative payoff.
class Claim {
public:
    static Claim call(double strike) {
        require(std::isfinite(strike) && strike > 0.0, ErrorCode::InvalidArgument, "strike must be positive");
        Claim claim;
        claim.is_call_ = true;
        claim.strike_ = strike;
        claim.payoff_ = [strike](double s) { return std::max(s - strike, 0.0); };
        claim.log_kinks_ = {std::log(strike)};
        claim.name_ = "call";
        return claim;
    }

    /// `log_kinks` lists ln(s) positions where the payoff is not smooth; they
    /// only speed up quadrature and may be left empty.
    static Claim general(std::function<double(double)> payoff, std::vector<double> log_kinks = {},
                         std::string name = "general", double scale = 1.0) {
        require(static_cast<bool>(payoff), ErrorCode::InvalidArgument, "payoff must be callable");
        Claim claim;
        claim.payoff_ = std::move(payoff);
        claim.log_kinks_ = std::move(log_kinks);
        claim.name_ = std::move(name);
        claim.strike_ = scale;
        return claim;
    }

    bool is_call() const { return is_call_; }
    /// Strike for calls; the nominal payoff scale otherwise.
    double strike() const { return strike_; }
    double payoff(double s) const { return payoff_(s); }
    const std::vector<double>& log_kinks() const { return log_kinks_; }
    const std::string& name() const { return name_; }

private:
    Claim() = default;

    bool is_call_ = false;
    double strike_ = 1.0;
    std::function<double(double)> payoff_;
    std::vector<double> log_kinks_;
    std::string name_;
};

/// alpha = -ln K + rho A_T + T(1-rho^2)/2 and beta = sqrt(T(1-rho^2)/2).
struct CallConstants {
    double alpha;
    double beta;
};

inline CallConstants call_constants(const Claim& claim, const GbmParams& params) {
    require(claim.is_call(), ErrorCode::InvalidArgument, "call constants need a call claim");
    const double var = params.T() * (1.0 - params.rho() * params.rho());
    return {-std::log(claim.strike()) + params.rho_A() + 0.5 * var, std::sqrt(0.5 * var)};
}

struct SolverConfig {
    QuadratureConfig quad{};
    RootConfig root{};
};

struct DualSolution {
    double v;               // the multiplier, negative
    double g;               // budget
    double budget_residual; // budget(v) - g
    double h_inv_at_neg_v;  // exercise threshold on B~_T
    int iterations;
};

struct StrategySample {
    double t;
    double b_tilde;
    double s_tilde;
    double xi;
};

inline double s_tilde_of(double t, double b_tilde) { return std::exp(b_tilde - 0.5 * t); }

// ---------------------------------------------------------------------------
// Density and the projected claim f
// ---------------------------------------------------------------------------

inline double log_density_D(double b_T, const GbmParams& params) {
    const double a1 = params.a1();
    return -a1 * b_T + 0.5 * a1 * a1 * params.T();
}

/// dQ/dP on the observable filtration as a function of b = B~_T. In terms of
/// the P-Wiener value w = b - a1 T this is exp(-a1 w - a1^2 T/2).
inline double density_D(double b_T, const GbmParams& params) { return std::exp(log_density_D(b_T, params)); }

/// f(x) = E[H(S_T) | B~_T = x] by adaptive quadrature over the residual noise.
inline double f_eval(double x, const Claim& claim, const GbmParams& params, const QuadratureConfig& cfg = {}) {
    const double sd = params.residual_sd();
    const double mean = params.rho() * x + params.rho_A();
    auto integrand = [&claim](double z) { return claim.payoff(std::exp(z)); };
    try {
        return integrate_gaussian_adaptive(integrand, mean, sd * sd, cfg, {.breaks = claim.log_kinks()});
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFinite) throw Error(ErrorCode::QuadratureFailure, e.what());
        throw;
    }
}

/// Closed form of f for H(y) = (y - K)^+.
inline double f_eval_call(double x, const Claim& claim, const GbmParams& params) {
    const auto [alpha, beta] = call_constants(claim, params);
    const double K = claim.strike();
    const double u = params.rho() * x + alpha;
    const double d = u / (std::numbers::sqrt2 * beta);
    const double shift = beta / std::numbers::sqrt2;
    const double first = std::exp(u + log_norm_cdf(d + shift));
    const double value = K * (first - norm_cdf(d - shift));
    return std::max(value, 0.0);
}

inline double f_value(double x, const Claim& claim, const GbmParams& params, const QuadratureConfig& cfg = {}) {
    return claim.is_call() ? f_eval_call(x, claim, params) : f_eval(x, claim, params, cfg);
}

/// df/dx = (rho / sd) E[H(exp(rho x + rho A_T + sd Y)) Y], Y ~ N(0,1).
inline double f_prime_quadrature(double x, const Claim& claim, const GbmParams& params,
                                 const QuadratureConfig& cfg = {}) {
    const double rho = params.rho();
    if (rho == 0.0) return 0.0;
    const double sd = params.residual_sd();
    const double shift = rho * x + params.rho_A();
    std::vector<double> breaks;
    for (double k : claim.log_kinks()) breaks.push_back((k - shift) / sd);
    auto integrand = [&](double y) { return claim.payoff(std::exp(shift + sd * y)) * y; };
    try {
        return rho / sd * integrate_gaussian_adaptive(integrand, 0.0, 1.0, cfg, {.breaks = std::move(breaks)});
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFinite) throw Error(ErrorCode::QuadratureFailure, e.what());
        throw;
    }
}

/// Three-term closed form of df/dx for the call.
inline double f_prime_call(double x, const Claim& claim, const GbmParams& params) {
    const double rho = params.rho();
    if (rho == 0.0) return 0.0;
    const auto [alpha, beta] = call_constants(claim, params);
    const double K = claim.strike();
    const double u = rho * x + alpha;
    const double scale = std::numbers::sqrt2 * beta;
    const double d = u / scale;
    const double shift = beta / std::numbers::sqrt2;
    const double t1 = std::exp(u + log_norm_cdf(d + shift));
    const double t2 = std::exp(u - 0.5 * (d + shift) * (d + shift)) * inv_sqrt_2pi / scale;
    const double t3 = norm_pdf(d - shift) / scale;
    return rho * K * (t1 + t2 - t3);
}

inline double f_prime(double x, const Claim& claim, const GbmParams& params, const QuadratureConfig& cfg = {}) {
    return claim.is_call() ? f_prime_call(x, claim, params) : f_prime_quadrature(x, claim, params, cfg);
}

/// h(x) = f(x) exp(a1 x - a1^2 T / 2); f + v D >= 0 iff h >= -v.
inline double h_eval(double x, const Claim& claim, const GbmParams& params, const QuadratureConfig& cfg = {}) {
    const double f = f_value(x, claim, params, cfg);
    if (f <= 0.0) return 0.0;
    const double a1 = params.a1();
    return std::exp(std::log(f) + a1 * x - 0.5 * a1 * a1 * params.T());
}

/// inf{z : h(z) > y}.
inline double h_inverse(double y, const Claim& claim, const GbmParams& params, const RootConfig& rcfg = {},
                        const QuadratureConfig& qcfg = {}) {
    require(y > 0.0, ErrorCode::InvalidArgument, "h_inverse needs a positive level");
    return monotone_inverse([&](double z) { return h_eval(z, claim, params, qcfg); }, y, rcfg);
}

// ---------------------------------------------------------------------------
// Budget and the dual multiplier
// ---------------------------------------------------------------------------

/// E_Q G~ = int H(exp(y + rho A_T)) phi_T(y) dy.
inline double expected_claim_q(const Claim& claim, const GbmParams& params, const QuadratureConfig& cfg = {}) {
    std::vector<double> breaks;
    for (double k : claim.log_kinks()) breaks.push_back(k - params.rho_A());
    auto integrand = [&](double y) { return claim.payoff(std::exp(y + params.rho_A())); };
    try {
        return integrate_gaussian_adaptive(integrand, 0.0, params.T(), cfg, {.breaks = std::move(breaks)});
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFinite) throw Error(ErrorCode::QuadratureFailure, e.what());
        throw;
    }
}

inline double expected_claim_q_call(const Claim& claim, const GbmParams& params) {
    const double T = params.T();
    const double m = params.rho_A();
    const double K = claim.strike();
    const double sd = std::sqrt(T);
    return std::exp(m + 0.5 * T) * norm_cdf((m + T - std::log(K)) / sd) - K * norm_cdf((m - std::log(K)) / sd);
}

struct BudgetEvaluation {
    double budget;
    double threshold;
};

/// E_Q (f(B~_T) + v D_T)^+ through the exercise threshold c = h^(-1)(-v):
///   int_c^inf f phi_T + v e^{a1^2 T} Phi(-c/sqrt(T) - a1 sqrt(T)).
inline BudgetEvaluation budget_threshold_form(double v, const Claim& claim, const GbmParams& params,
                                              const SolverConfig& cfg = {}) {
    const double T = params.T();
    const double a1 = params.a1();
    const double threshold = (v < 0.0) ? h_inverse(-v, claim, params, cfg.root, cfg.quad)
                                       : -std::numeric_limits<double>::infinity();
    auto f = [&](double x) { return f_value(x, claim, params, cfg.quad); };
    const double exercised = integrate_gaussian_adaptive(f, 0.0, T, cfg.quad, {.lower = threshold});
    const double tail_prob = std::isfinite(threshold) ? norm_cdf(-threshold / std::sqrt(T) - a1 * std::sqrt(T)) : 1.0;
    return {exercised + v * std::exp(a1 * a1 * T) * tail_prob, threshold};
}

/// E_Q (f(B~_T) + v D_T)^+ by direct quadrature of the positive part. The
/// kink is located as the sign change of f + v D (increasing in x for v < 0),
/// without going through h or its inverse.
inline double budget_direct(double v, const Claim& claim, const GbmParams& params, const QuadratureConfig& cfg = {},
                            const RootConfig& rcfg = {}) {
    auto payoff = [&](double x) { return f_value(x, claim, params, cfg) + v * density_D(x, params); };
    std::vector<double> breaks;
    if (v < 0.0) breaks.push_back(find_root_monotone(payoff, 0.0, {-1.0, 1.0}, rcfg));
    auto integrand = [&](double x) { return std::max(payoff(x), 0.0); };
    return integrate_gaussian_adaptive(integrand, 0.0, params.T(), cfg, {.breaks = std::move(breaks)});
}

/// Multiplier v(g) < 0 with E_Q (G~ + v D_T)^+ = g, for 0 < g < E_Q G~.
inline DualSolution solve_v(double g, const Claim& claim, const GbmParams& params, const SolverConfig& cfg = {}) {
    const double mean_q = claim.is_call() ? expected_claim_q_call(claim, params) : expected_claim_q(claim, params, cfg.quad);
    if (!(g > 0.0 && g < mean_q)) {
        throw Error(ErrorCode::OutOfRange, "budget g must lie strictly inside (0, E_Q G~ = " + std::to_string(mean_q) + ")");
    }
    auto budget = [&](double v) {
        if (v >= 0.0) return mean_q + v * std::exp(params.a1() * params.a1() * params.T());
        return budget_threshold_form(v, claim, params, cfg).budget;
    };
    RootResult root;
    try {
        root = find_root_monotone_ex(budget, g, {-1.0, 0.0}, cfg.root);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NoBracket) {
            throw Error(ErrorCode::NoBracket, std::string("dual equation: ") + e.what() + " (v reached the r-boundary)");
        }
        throw;
    }
    require(root.x < 0.0, ErrorCode::OutOfRange, "dual solver returned a nonnegative multiplier");
    const auto eval = budget_threshold_form(root.x, claim, params, cfg);
    return {root.x, g, eval.budget - g, eval.threshold, root.iterations};
}

// ---------------------------------------------------------------------------
// Optimal strategy
// ---------------------------------------------------------------------------

namespace detail {

inline void check_time(double t, const GbmParams& params) {
    if (!(t >= 0.0) || !(t < params.T() - params.epsilon_time())) {
        throw Error(ErrorCode::TimeAtExpiry, "strategy time must lie in [0, T - epsilon_time)");
    }
}

// (1/S~_t) v a1 E_Q[1{B~_T >= c} D_T | B~_t = b]; negative for v < 0 so the
// caller subtracts it.
inline double tail_term(double t, double b, const DualSolution& dual, const GbmParams& params) {
    if (dual.v == 0.0) return 0.0;
    const double a1 = params.a1();
    const double T = params.T();
    const double tau = T - t;
    const double c = dual.h_inv_at_neg_v;
    const double log_prob = std::isfinite(c) ? log_norm_cdf((b - c) / std::sqrt(tau) - a1 * std::sqrt(tau)) : 0.0;
    const double log_mag = -a1 * b + 0.5 * a1 * a1 * (T + tau) - (b - 0.5 * t) + log_prob;
    return dual.v * a1 * std::exp(log_mag);
}

template <class Deriv>
double exercised_derivative(double t, double b, const DualSolution& dual, const GbmParams& params,
                            const QuadratureConfig& cfg, Deriv&& deriv) {
    const double tau = params.T() - t;
    const double log_s = b - 0.5 * t;
    auto integrand = [&](double y) { return deriv(y) * std::exp(-log_s); };
    return integrate_gaussian_adaptive(integrand, b, tau, cfg, {.lower = dual.h_inv_at_neg_v});
}

}  // namespace detail

/// xi~_t = (1/S~_t) E_Q[1{B~_T >= c} (f'(B~_T) - v a1 D_T) | B~_t = b], with
/// f' evaluated by its general quadrature formula (nested integral).
inline double strategy_general(double t, double b_tilde, const DualSolution& dual, const Claim& claim,
                               const GbmParams& params, const QuadratureConfig& cfg = {}) {
    detail::check_time(t, params);
    const double first = detail::exercised_derivative(
        t, b_tilde, dual, params, cfg, [&](double y) { return f_prime_quadrature(y, claim, params, cfg); });
    return first - detail::tail_term(t, b_tilde, dual, params);
}

/// Call-specific strategy: the exercised expectation of f' is the sum of the
/// Phi-weighted exponential integral and the two squared-exponent Gaussian
/// integrals, integrated together in one pass over [c, inf).
inline double strategy_call(double t, double b_tilde, const DualSolution& dual, const Claim& claim,
                            const GbmParams& params, const QuadratureConfig& cfg = {}) {
    detail::check_time(t, params);
    const double rho = params.rho();
    double first = 0.0;
    if (rho != 0.0) {
        const auto [alpha, beta] = call_constants(claim, params);
        const double K = claim.strike();
        const double scale = std::numbers::sqrt2 * beta;
        const double shift = beta / std::numbers::sqrt2;
        auto integrand = [&](double y) {
            const double u = rho * y + alpha;
            const double d = u / scale;
            const double phi_weighted = std::exp(u + log_norm_cdf(d + shift));
            const double square_plus = std::exp(u - 0.5 * (d + shift) * (d + shift)) * inv_sqrt_2pi / scale;
            const double square_minus = std::exp(-0.5 * (d - shift) * (d - shift)) * inv_sqrt_2pi / scale;
            return rho * K * (phi_weighted + square_plus - square_minus);
        };
        first = detail::exercised_derivative(t, b_tilde, dual, params, cfg, integrand);
    }
    return first - detail::tail_term(t, b_tilde, dual, params);
}

inline double strategy(double t, double b_tilde, const DualSolution& dual, const Claim& claim,
                       const GbmParams& params, const QuadratureConfig& cfg = {}) {
    return claim.is_call() ? strategy_call(t, b_tilde, dual, claim, params, cfg)
                           : strategy_general(t, b_tilde, dual, claim, params, cfg);
}

/// V(t, b) = E_Q[(G~ + v D_T)^+ | B~_t = b], the wealth the optimal hedge
/// should carry at (t, b).
inline double conditional_value(double t, double b_tilde, const DualSolution& dual, const Claim& claim,
                                const GbmParams& params, const QuadratureConfig& cfg = {}) {
    const double tau = params.T() - t;
    require(tau > 0.0, ErrorCode::TimeAtExpiry, "conditional value needs t < T");
    auto integrand = [&](double y) {
        return std::max(f_value(y, claim, params, cfg) + dual.v * density_D(y, params), 0.0);
    };
    return integrate_gaussian_adaptive(integrand, b_tilde, tau, cfg, {.breaks = {dual.h_inv_at_neg_v}});
}

/// Pure replication delta of G~ (the v = 0 strategy), computed from f alone
/// through the Gaussian score: d/db E[f(b + X)] = E[f(b + X) X] / tau.
inline double replication_delta(double t, double b_tilde, const Claim& claim, const GbmParams& params,
                                const QuadratureConfig& cfg = {}) {
    detail::check_time(t, params);
    const double tau = params.T() - t;
    auto integrand = [&](double x) { return f_value(b_tilde + x, claim, params, cfg) * x; };
    return integrate_gaussian(integrand, 0.0, tau, cfg) / tau / s_tilde_of(t, b_tilde);
}

// ---------------------------------------------------------------------------
// Risk decomposition
// ---------------------------------------------------------------------------

/// Two-term closed form for the observable part of the minimum,
///   int_{-inf}^c f^2(x + a1 T) phi_T(x) dx + v^2 e^{a1^2 T} Phi(-c/sqrt(T) - 2 a1),
/// exactly as tabulated for the reference market.
inline double residual_risk(const DualSolution& dual, const Claim& claim, const GbmParams& params,
                            const QuadratureConfig& cfg = {}) {
    const double T = params.T();
    const double a1 = params.a1();
    const double c = dual.h_inv_at_neg_v;
    if (!std::isfinite(c)) return 0.0;
    auto f2 = [&](double x) {
        const double f = f_value(x + a1 * T, claim, params, cfg);
        return f * f;
    };
    const double below = integrate_gaussian_adaptive(f2, 0.0, T, cfg, {.upper = c});
    return below + dual.v * dual.v * std::exp(a1 * a1 * T) * norm_cdf(-c / std::sqrt(T) - 2.0 * a1);
}

/// E_P (G~ - (G~ + v D_T)^+)^2 by direct quadrature under the physical law
/// B~_T ~ N(a1 T, T).
inline double residual_risk_direct(const DualSolution& dual, const Claim& claim, const GbmParams& params,
                                   const QuadratureConfig& cfg = {}) {
    const double T = params.T();
    auto integrand = [&](double b) {
        const double f = f_value(b, claim, params, cfg);
        const double x = std::max(f + dual.v * density_D(b, params), 0.0);
        return (f - x) * (f - x);
    };
    std::vector<double> breaks;
    if (std::isfinite(dual.h_inv_at_neg_v)) breaks.push_back(dual.h_inv_at_neg_v);
    return integrate_gaussian_adaptive(integrand, params.a1() * T, T, cfg, {.breaks = std::move(breaks)});
}

/// E(G - G~)^2 = int (H^2(e^{u + int a}) - f^2(u + a1 T)) phi_T(u) du.
inline double projection_gap(const Claim& claim, const GbmParams& params, const QuadratureConfig& cfg = {}) {
    const double T = params.T();
    const double shift = params.drift_integral();
    const double a1 = params.a1();
    auto integrand = [&](double u) {
        const double h = claim.payoff(std::exp(u + shift));
        const double f = f_value(u + a1 * T, claim, params, cfg);
        return h * h - f * f;
    };
    std::vector<double> breaks;
    for (double k : claim.log_kinks()) breaks.push_back(k - shift);
    try {
        return std::max(integrate_gaussian_adaptive(integrand, 0.0, T, cfg, {.breaks = std::move(breaks)}), 0.0);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFinite) throw Error(ErrorCode::QuadratureFailure, e.what());
        throw;
    }
}

}  // namespace mvh
