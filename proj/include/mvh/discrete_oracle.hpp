#pragma once

// Finite probability space where the optimal terminal payoff (G + v D)^+ can
// be checked against brute force.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <json.hpp>

#include "mvh/error.hpp"
#include "mvh/num_core/normal.hpp"

namespace mvh {

class DiscreteMarket {
public:
    DiscreteMarket(std::vector<double> p, std::vector<double> q, std::vector<double> claim)
        : p_(std::move(p)), q_(std::move(q)), claim_(std::move(claim)) {
        const std::size_t n = p_.size();
        require(n >= 1, ErrorCode::InvalidArgument, "market needs at least one atom");
        require(q_.size() == n && claim_.size() == n, ErrorCode::InvalidArgument, "p, q, G must have equal length");
        double sum_p = 0.0;
        double sum_q = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            require(p_[i] > 0.0 && q_[i] > 0.0, ErrorCode::InvalidArgument, "all weights must be positive");
            require(std::isfinite(claim_[i]), ErrorCode::InvalidArgument, "claim values must be finite");
            sum_p += p_[i];
            sum_q += q_[i];
        }
        require(std::abs(sum_p - 1.0) <= 1e-12 && std::abs(sum_q - 1.0) <= 1e-12, ErrorCode::InvalidArgument,
                "p and q must each sum to 1");
        density_.resize(n);
        for (std::size_t i = 0; i < n; ++i) density_[i] = q_[i] / p_[i];
    }

    std::size_t size() const { return p_.size(); }
    const std::vector<double>& p() const { return p_; }
    const std::vector<double>& q() const { return q_; }
    const std::vector<double>& claim() const { return claim_; }
    const std::vector<double>& density() const { return density_; }

    double expect_p(const std::vector<double>& x) const { return std::inner_product(p_.begin(), p_.end(), x.begin(), 0.0); }
    double expect_q(const std::vector<double>& x) const { return std::inner_product(q_.begin(), q_.end(), x.begin(), 0.0); }
    double claim_mean_q() const { return expect_q(claim_); }

    /// E_P (G - x)^2.
    double objective(const std::vector<double>& x) const {
        double total = 0.0;
        for (std::size_t i = 0; i < size(); ++i) total += p_[i] * (claim_[i] - x[i]) * (claim_[i] - x[i]);
        return total;
    }

private:
    std::vector<double> p_;
    std::vector<double> q_;
    std::vector<double> claim_;
    std::vector<double> density_;
};

/// Exact solution of sum q_i (G_i + v D_i)^+ = g. The left side is piecewise
/// linear in v with breakpoints -G_i/D_i; atoms with equal ratios share one
/// breakpoint.
inline double dual_solve_discrete(const DiscreteMarket& market, double g) {
    const double total = market.claim_mean_q();
    if (!(g > 0.0 && g < total)) throw Error(ErrorCode::OutOfRange, "budget must lie strictly inside (0, E_Q G)");
    const auto& G = market.claim();
    const auto& D = market.density();
    const auto& q = market.q();
    std::vector<std::size_t> order(market.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return G[a] / D[a] > G[b] / D[b]; });

    // Walk breakpoints from the most negative v upwards, activating atoms.
    double active_claim = 0.0;    // sum over active atoms of q G
    double active_density = 0.0;  // sum over active atoms of q D
    std::size_t k = 0;
    while (k < order.size()) {
        const double ratio = G[order[k]] / D[order[k]];
        if (ratio <= 0.0) break;
        while (k < order.size() && G[order[k]] / D[order[k]] == ratio) {
            active_claim += q[order[k]] * G[order[k]];
            active_density += q[order[k]] * D[order[k]];
            ++k;
        }
        const double next_ratio = (k < order.size()) ? std::max(G[order[k]] / D[order[k]], 0.0) : 0.0;
        // Budget on this segment is active_claim + v active_density for v in [-ratio, -next_ratio].
        const double at_upper = active_claim - next_ratio * active_density;
        if (g <= at_upper || next_ratio == 0.0) {
            return (g - active_claim) / active_density;
        }
    }
    throw Error(ErrorCode::OutOfRange, "budget exceeds the attainable range");
}

/// X_i = (G_i + v D_i)^+.
inline std::vector<double> theorem_payoff(const DiscreteMarket& market, double v) {
    std::vector<double> x(market.size());
    for (std::size_t i = 0; i < market.size(); ++i) x[i] = std::max(market.claim()[i] + v * market.density()[i], 0.0);
    return x;
}

struct QpResult {
    std::vector<double> payoff;
    double objective;
    std::uint64_t feasible_sets;
};

/// Minimizes E_P (G - X)^2 subject to E_Q X = g and X >= 0 by enumerating
/// every set of atoms pinned at zero. For a fixed pinned set the equality
/// constrained problem is solved by its Lagrange condition on the free atoms.
inline QpResult qp_solve(const DiscreteMarket& market, double g) {
    const std::size_t n = market.size();
    if (n > 16) throw Error(ErrorCode::SizeLimit, "qp_solve enumerates 2^n active sets; n must be <= 16");
    require(g > 0.0, ErrorCode::OutOfRange, "budget must be positive");
    const auto& G = market.claim();
    const auto& q = market.q();
    const auto& p = market.p();

    QpResult best{std::vector<double>(n, 0.0), std::numeric_limits<double>::infinity(), 0};
    std::vector<double> x(n);
    const std::uint32_t limit = 1u << n;
    for (std::uint32_t pinned = 0; pinned < limit; ++pinned) {
        if (pinned == limit - 1) continue;  // all pinned cannot meet g > 0
        // Free atoms: minimize sum p (G - X)^2 s.t. sum q X = g - 0
        // => X_i = G_i + mu q_i / p_i, mu from the budget.
        double free_claim = 0.0;
        double free_weight = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (pinned & (1u << i)) continue;
            free_claim += q[i] * G[i];
            free_weight += q[i] * q[i] / p[i];
        }
        const double mu = (g - free_claim) / free_weight;
        bool feasible = true;
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (pinned & (1u << i)) {
                x[i] = 0.0;
            } else {
                x[i] = G[i] + mu * q[i] / p[i];
                if (x[i] < -1e-12 * std::max(1.0, std::abs(G[i]))) {
                    feasible = false;
                    break;
                }
                x[i] = std::max(x[i], 0.0);
            }
            objective += p[i] * (G[i] - x[i]) * (G[i] - x[i]);
        }
        if (!feasible) continue;
        ++best.feasible_sets;
        if (objective < best.objective) {
            best.objective = objective;
            best.payoff = x;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Binomial replication
// ---------------------------------------------------------------------------

class BinomialTree {
public:
    BinomialTree(int steps, double s0, double up, double down) : steps_(steps), s0_(s0), up_(up), down_(down) {
        require(steps >= 1, ErrorCode::InvalidArgument, "tree needs at least one step");
        require(s0 > 0.0, ErrorCode::InvalidArgument, "s0 must be positive");
        require(down > 0.0 && down < 1.0 && up > 1.0, ErrorCode::InvalidArgument, "need 0 < down < 1 < up");
    }

    int steps() const { return steps_; }
    double up() const { return up_; }
    double down() const { return down_; }
    double q_up() const { return (1.0 - down_) / (up_ - down_); }
    /// Price after `step` steps with `ups` up-moves.
    double price(int step, int ups) const { return s0_ * std::pow(up_, ups) * std::pow(down_, step - ups); }

private:
    int steps_;
    double s0_;
    double up_;
    double down_;
};

struct Replication {
    double initial_capital;
    std::vector<std::vector<double>> value;     // value[step][ups]
    std::vector<std::vector<double>> strategy;  // strategy[step][ups], held over (step, step+1)
};

/// Backward induction under q_up; the hedge ratio at each node is
/// (V_up - V_down) / (S_up - S_down).
inline Replication replicate_binomial(const BinomialTree& tree, const std::function<double(int ups)>& payoff) {
    const int n = tree.steps();
    const double q = tree.q_up();
    Replication rep;
    rep.value.assign(n + 1, {});
    rep.strategy.assign(n, {});
    rep.value[n].resize(n + 1);
    for (int j = 0; j <= n; ++j) rep.value[n][j] = payoff(j);
    for (int step = n - 1; step >= 0; --step) {
        rep.value[step].resize(step + 1);
        rep.strategy[step].resize(step + 1);
        for (int j = 0; j <= step; ++j) {
            const double v_up = rep.value[step + 1][j + 1];
            const double v_down = rep.value[step + 1][j];
            rep.value[step][j] = q * v_up + (1.0 - q) * v_down;
            rep.strategy[step][j] = (v_up - v_down) / (tree.price(step + 1, j + 1) - tree.price(step + 1, j));
        }
    }
    rep.initial_capital = rep.value[0][0];
    return rep;
}

/// Terminal market induced by a tree: atoms are terminal nodes, q from q_up,
/// p from the physical up-probability.
inline DiscreteMarket terminal_market(const BinomialTree& tree, double p_up, const std::function<double(double)>& claim) {
    const int n = tree.steps();
    std::vector<double> p(n + 1), q(n + 1), G(n + 1);
    for (int j = 0; j <= n; ++j) {
        const double binom = std::tgamma(n + 1.0) / (std::tgamma(j + 1.0) * std::tgamma(n - j + 1.0));
        p[j] = binom * std::pow(p_up, j) * std::pow(1.0 - p_up, n - j);
        q[j] = binom * std::pow(tree.q_up(), j) * std::pow(1.0 - tree.q_up(), n - j);
        G[j] = claim(tree.price(n, j));
    }
    // Renormalize away the last-ulp drift of the binomial weights.
    const double sp = std::accumulate(p.begin(), p.end(), 0.0);
    const double sq = std::accumulate(q.begin(), q.end(), 0.0);
    for (int j = 0; j <= n; ++j) {
        p[j] /= sp;
        q[j] /= sq;
    }
    return DiscreteMarket(std::move(p), std::move(q), std::move(G));
}

// ---------------------------------------------------------------------------
// Random instances and replay files
// ---------------------------------------------------------------------------

struct OracleInstance {
    DiscreteMarket market;
    double g;
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
    // 53 random bits, open interval (0, 1); avoids implementation-defined distributions.
    return ((rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline std::vector<double> normalized_uniforms(std::size_t n, std::mt19937_64& rng) {
    std::vector<double> w(n);
    for (auto& x : w) x = 0.05 + uniform01(rng);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= total;
    return w;
}

}  // namespace detail

/// p, q normalized positive uniforms; G = 10 |N(0,1)|; g uniform in
/// (0.05, 0.95) E_Q G. Deterministic given the engine state.
inline OracleInstance random_instance(std::size_t n, std::mt19937_64& rng) {
    auto p = detail::normalized_uniforms(n, rng);
    auto q = detail::normalized_uniforms(n, rng);
    std::vector<double> G(n);
    for (auto& x : G) x = 10.0 * std::abs(inverse_norm_cdf(detail::uniform01(rng)));
    DiscreteMarket market(std::move(p), std::move(q), std::move(G));
    const double fraction = 0.05 + 0.9 * detail::uniform01(rng);
    const double g = fraction * market.claim_mean_q();
    return {std::move(market), g};
}

inline nlohmann::json to_json(const OracleInstance& instance) {
    return {{"p", instance.market.p()}, {"q", instance.market.q()}, {"G", instance.market.claim()}, {"g", instance.g}};
}

inline OracleInstance instance_from_json(const nlohmann::json& j) {
    try {
        DiscreteMarket market(j.at("p").get<std::vector<double>>(), j.at("q").get<std::vector<double>>(),
                              j.at("G").get<std::vector<double>>());
        return {std::move(market), j.at("g").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("bad instance file: ") + e.what());
    }
}

}  // namespace mvh
