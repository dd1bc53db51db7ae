#pragma once

// Reduction of the full problem (capital x, unobservable claim H, observable
// floor H~) to the canonical problem with budget g, claim G >= 0, zero floor:
//
//   E(H - W)^2 = E(H - H1)^2 + E(H1 - W)^2,   H1 = E(H | observable),
//
// then H1 is clipped at the floor and the floor is superhedged separately.
//
// Two backends implement the contract project(claim) -> claim and
// replicate(claim) -> (capital, strategy): an exact finite world and the GBM
// market (zero floor only).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <optional>
#include <vector>

#include "mvh/discrete_oracle.hpp"
#include "mvh/error.hpp"
#include "mvh/gbm_model.hpp"

namespace mvh {

template <class B>
concept HedgingBackend = requires(const B& backend, const typename B::claim_type& h,
                                  const typename B::observable_claim_type& obs) {
    { backend.project(h) } -> std::same_as<typename B::observable_claim_type>;
    { backend.replicate(obs) } -> std::same_as<typename B::replication_type>;
    { backend.expect_q(obs) } -> std::convertible_to<double>;
};

template <class Backend>
struct FullProblem {
    double x;
    typename Backend::claim_type h_claim;
    typename Backend::observable_claim_type h_tilde;
};

enum class ReducedBranch {
    Trivial,      // g = 0: the floor replication alone is optimal
    Canonical,    // 0 < g < E_Q G
    Replication,  // g = E_Q G: G is replicated exactly, zero residual
};

template <class Backend>
struct ReducedProblem {
    double g;
    typename Backend::observable_claim_type g_claim;
    double floor_strategy_capital;
    bool dominance;
    ReducedBranch branch;
};

template <class Backend>
struct ClipResult {
    typename Backend::observable_claim_type h2;
    bool dominance;
};

struct BoundsReport {
    double lower;
    double upper;
    bool clipped_used;
};

// ---------------------------------------------------------------------------
// Discrete backend
// ---------------------------------------------------------------------------

/// Atoms with physical weights p, martingale weights q, and the observable
/// partition given as a cell index per atom. Observable claims are atom
/// vectors that are constant on cells.
class DiscreteBackend {
public:
    using claim_type = std::vector<double>;
    using observable_claim_type = std::vector<double>;
    struct replication_type {
        double capital;
        std::vector<double> gains;  // terminal value of the stochastic integral, per atom
    };

    DiscreteBackend(std::vector<double> p, std::vector<double> q, std::vector<int> cell)
        : p_(std::move(p)), q_(std::move(q)), cell_(std::move(cell)) {
        const std::size_t n = p_.size();
        require(n >= 1 && q_.size() == n && cell_.size() == n, ErrorCode::InvalidArgument,
                "p, q and cell must have equal nonzero length");
        cells_ = 0;
        for (int c : cell_) {
            require(c >= 0, ErrorCode::InvalidArgument, "cell index must be nonnegative");
            cells_ = std::max(cells_, c + 1);
        }
        cell_p_.assign(cells_, 0.0);
        cell_q_.assign(cells_, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            require(p_[i] > 0.0 && q_[i] > 0.0, ErrorCode::InvalidArgument, "weights must be positive");
            cell_p_[cell_[i]] += p_[i];
            cell_q_[cell_[i]] += q_[i];
        }
        for (int c = 0; c < cells_; ++c) {
            require(cell_p_[c] > 0.0, ErrorCode::InvalidArgument, "every cell needs at least one atom");
        }
    }

    std::size_t atoms() const { return p_.size(); }
    int cells() const { return cells_; }
    const std::vector<double>& p() const { return p_; }
    const std::vector<double>& q() const { return q_; }

    /// E_P(h | cell), per atom.
    observable_claim_type project(const claim_type& h) const {
        check_size(h);
        std::vector<double> sums(cells_, 0.0);
        for (std::size_t i = 0; i < atoms(); ++i) sums[cell_[i]] += p_[i] * h[i];
        std::vector<double> out(atoms());
        for (std::size_t i = 0; i < atoms(); ++i) out[i] = sums[cell_[i]] / cell_p_[cell_[i]];
        return out;
    }

    bool is_observable(const claim_type& h, double tol = 1e-12) const {
        check_size(h);
        const auto projected = project(h);
        for (std::size_t i = 0; i < atoms(); ++i) {
            if (std::abs(projected[i] - h[i]) > tol * std::max(1.0, std::abs(h[i]))) return false;
        }
        return true;
    }

    double expect_q(const observable_claim_type& h) const {
        check_size(h);
        double total = 0.0;
        for (std::size_t i = 0; i < atoms(); ++i) total += q_[i] * h[i];
        return total;
    }

    double expect_p(const claim_type& h) const {
        check_size(h);
        double total = 0.0;
        for (std::size_t i = 0; i < atoms(); ++i) total += p_[i] * h[i];
        return total;
    }

    /// The observable market is complete: any observable claim is its Q-mean
    /// plus a gains process with zero Q-mean.
    replication_type replicate(const observable_claim_type& h) const {
        const double capital = expect_q(h);
        std::vector<double> gains(atoms());
        for (std::size_t i = 0; i < atoms(); ++i) gains[i] = h[i] - capital;
        return {capital, std::move(gains)};
    }

    /// Market over observable cells for the canonical problem.
    DiscreteMarket reduced_market(const observable_claim_type& g_claim) const {
        require(is_observable(g_claim), ErrorCode::InvalidArgument, "reduced claim must be observable");
        std::vector<double> G(cells_, 0.0);
        for (std::size_t i = 0; i < atoms(); ++i) G[cell_[i]] = g_claim[i];
        return DiscreteMarket(cell_p_, cell_q_, std::move(G));
    }

    /// Cell vector -> atom vector.
    std::vector<double> lift(const std::vector<double>& per_cell) const {
        std::vector<double> out(atoms());
        for (std::size_t i = 0; i < atoms(); ++i) out[i] = per_cell[cell_[i]];
        return out;
    }

private:
    void check_size(const std::vector<double>& h) const {
        require(h.size() == atoms(), ErrorCode::InvalidArgument, "claim length does not match atom count");
    }

    std::vector<double> p_;
    std::vector<double> q_;
    std::vector<int> cell_;
    int cells_ = 0;
    std::vector<double> cell_p_;
    std::vector<double> cell_q_;
};

// ---------------------------------------------------------------------------
// GBM backend
// ---------------------------------------------------------------------------

/// Observable claim f(B~_T) as the projection of a payoff, or the zero claim.
struct GbmObservableClaim {
    std::optional<Claim> source;  // nullopt encodes the zero claim

    double value(double b_T, const GbmParams& params, const QuadratureConfig& cfg = {}) const {
        return source ? f_value(b_T, *source, params, cfg) : 0.0;
    }
};

class GbmBackend {
public:
    using claim_type = Claim;
    using observable_claim_type = GbmObservableClaim;
    struct replication_type {
        double capital;
        // xi(t, b): the replication delta of the observable claim
        std::function<double(double, double)> strategy;
    };

    explicit GbmBackend(GbmParams params, SolverConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {}

    const GbmParams& params() const { return params_; }
    const SolverConfig& config() const { return cfg_; }

    observable_claim_type project(const claim_type& h) const { return {h}; }

    double expect_q(const observable_claim_type& h) const {
        if (!h.source) return 0.0;
        return h.source->is_call() ? expected_claim_q_call(*h.source, params_)
                                   : expected_claim_q(*h.source, params_, cfg_.quad);
    }

    replication_type replicate(const observable_claim_type& h) const {
        if (!h.source) return {0.0, [](double, double) { return 0.0; }};
        Claim claim = *h.source;
        GbmParams params = params_;
        QuadratureConfig quad = cfg_.quad;
        return {expect_q(h), [claim, params, quad](double t, double b) {
                    return replication_delta(t, b, claim, params, quad);
                }};
    }

private:
    GbmParams params_;
    SolverConfig cfg_;
};

static_assert(HedgingBackend<DiscreteBackend>);
static_assert(HedgingBackend<GbmBackend>);

// ---------------------------------------------------------------------------
// Reduction steps
// ---------------------------------------------------------------------------

template <HedgingBackend Backend>
typename Backend::observable_claim_type project_claim(const FullProblem<Backend>& problem, const Backend& backend) {
    return backend.project(problem.h_claim);
}

/// H2 = H1 on {H1 >= H~}, H~ elsewhere.
inline ClipResult<DiscreteBackend> clip_claim(const std::vector<double>& h1, const std::vector<double>& h_tilde) {
    require(h1.size() == h_tilde.size(), ErrorCode::InvalidArgument, "claims must have equal length");
    ClipResult<DiscreteBackend> out{std::vector<double>(h1.size()), true};
    for (std::size_t i = 0; i < h1.size(); ++i) {
        if (h1[i] >= h_tilde[i]) {
            out.h2[i] = h1[i];
        } else {
            out.h2[i] = h_tilde[i];
            out.dominance = false;
        }
    }
    return out;
}

/// The GBM backend only carries a zero floor, so H1 >= H~ always holds.
inline ClipResult<GbmBackend> clip_claim(const GbmObservableClaim& h1, const GbmObservableClaim& h_tilde) {
    require(!h_tilde.source, ErrorCode::InvalidArgument, "GBM backend supports only a zero floor claim");
    return {h1, true};
}

namespace detail {

inline ReducedBranch classify(double g, double claim_mean) {
    const double scale = std::max(1.0, std::abs(claim_mean));
    if (std::abs(g) <= 1e-14 * scale) return ReducedBranch::Trivial;
    if (std::abs(g - claim_mean) <= 1e-14 * scale) return ReducedBranch::Replication;
    if (g > claim_mean) {
        throw Error(ErrorCode::OutOfRange, "capital exceeds E_Q H1; only the minimal-capital case x <= E_Q H1 is solved");
    }
    return ReducedBranch::Canonical;
}

}  // namespace detail

/// Discrete split. With dominance: G = H1 - H~, g = x - E_Q H~. Otherwise
/// G = (H1 - H~) 1{H1 >= H~}, g = x - E_Q[H~ 1{H1 >= H~}].
inline ReducedProblem<DiscreteBackend> split_superhedge(double x, const std::vector<double>& h1,
                                                        const ClipResult<DiscreteBackend>& clipped,
                                                        const std::vector<double>& h_tilde,
                                                        const DiscreteBackend& backend) {
    const double floor_capital = backend.expect_q(h_tilde);
    if (x < floor_capital) throw Error(ErrorCode::InsufficientCapital, "x is below E_Q H~; no admissible strategy");
    std::vector<double> G(h1.size());
    std::vector<double> floor_part(h1.size());
    for (std::size_t i = 0; i < h1.size(); ++i) {
        const bool above = h1[i] >= h_tilde[i];
        G[i] = above ? h1[i] - h_tilde[i] : 0.0;
        floor_part[i] = (clipped.dominance || above) ? h_tilde[i] : 0.0;
    }
    const double capital = clipped.dominance ? floor_capital : backend.expect_q(floor_part);
    const double g = x - capital;
    return {g, G, capital, clipped.dominance, detail::classify(g, backend.expect_q(G))};
}

inline ReducedProblem<GbmBackend> split_superhedge(double x, const GbmObservableClaim& h1,
                                                   const ClipResult<GbmBackend>& clipped,
                                                   const GbmObservableClaim& h_tilde, const GbmBackend& backend) {
    require(!h_tilde.source, ErrorCode::InvalidArgument, "GBM backend supports only a zero floor claim");
    if (x < 0.0) throw Error(ErrorCode::InsufficientCapital, "x is below E_Q H~ = 0");
    return {x, h1, 0.0, clipped.dominance, detail::classify(x, backend.expect_q(h1))};
}

/// Optimal observable payoff of a reduced discrete problem.
struct DiscreteReducedSolution {
    double v;                     // 0 on the trivial and replication branches
    std::vector<double> payoff;   // X per atom, E_Q X = g
    double objective;             // E_P (G - X)^2
};

inline DiscreteReducedSolution solve_reduced(const ReducedProblem<DiscreteBackend>& reduced,
                                             const DiscreteBackend& backend) {
    const auto& G = reduced.g_claim;
    std::vector<double> X(G.size(), 0.0);
    double v = 0.0;
    switch (reduced.branch) {
        case ReducedBranch::Trivial: break;
        case ReducedBranch::Replication: X = G; break;
        case ReducedBranch::Canonical: {
            const auto market = backend.reduced_market(G);
            v = dual_solve_discrete(market, reduced.g);
            X = backend.lift(theorem_payoff(market, v));
            break;
        }
    }
    double objective = 0.0;
    for (std::size_t i = 0; i < G.size(); ++i) objective += backend.p()[i] * (G[i] - X[i]) * (G[i] - X[i]);
    return {v, std::move(X), objective};
}

/// Bracket for min E(H1 - W)^2 over W >= H~, E_Q W = x when H1 >= H~ fails.
/// lower: minimum of E(H2 - W)^2 over the same set, i.e. the canonical
///        problem for (H1 - H~)^+ with budget x - E_Q H~;
/// upper: E(H1 - W*)^2 at the admissible W* = H~ + X attaining the lower.
/// Both coincide with the optimum when H1 >= H~ everywhere.
inline BoundsReport sandwich_bounds(const FullProblem<DiscreteBackend>& problem, const DiscreteBackend& backend) {
    const auto h1 = project_claim(problem, backend);
    const auto clipped = clip_claim(h1, problem.h_tilde);
    ClipResult<DiscreteBackend> as_dominated{clipped.h2, true};
    const auto lower_problem = split_superhedge(problem.x, clipped.h2, as_dominated, problem.h_tilde, backend);
    const auto lower_solution = solve_reduced(lower_problem, backend);
    double upper = 0.0;
    for (std::size_t i = 0; i < h1.size(); ++i) {
        const double wealth = problem.h_tilde[i] + lower_solution.payoff[i];
        upper += backend.p()[i] * (h1[i] - wealth) * (h1[i] - wealth);
    }
    return {lower_solution.objective, upper, !clipped.dominance};
}

struct DiscreteFullSolution {
    ReducedProblem<DiscreteBackend> reduced;
    DiscreteReducedSolution reduced_solution;
    DiscreteBackend::replication_type floor_replication;
    std::vector<double> terminal_wealth;  // x + gains, per atom
    double projection_gap;                // E_P (H - H1)^2
    double full_objective;                // E_P (H - W)^2
    BoundsReport bounds;
};

/// Full pipeline in the discrete world. Under dominance the terminal wealth
/// is H~ + (G + v D)^+; otherwise it follows the clipped split
/// and the bounds report brackets the true optimum.
inline DiscreteFullSolution solve_full_problem(const FullProblem<DiscreteBackend>& problem,
                                               const DiscreteBackend& backend) {
    const auto h1 = project_claim(problem, backend);
    const auto clipped = clip_claim(h1, problem.h_tilde);
    auto reduced = split_superhedge(problem.x, h1, clipped, problem.h_tilde, backend);
    auto solution = solve_reduced(reduced, backend);

    std::vector<double> floor_part(h1.size());
    for (std::size_t i = 0; i < h1.size(); ++i) {
        floor_part[i] = (clipped.dominance || h1[i] >= problem.h_tilde[i]) ? problem.h_tilde[i] : 0.0;
    }
    auto floor_rep = backend.replicate(floor_part);
    std::vector<double> wealth(h1.size());
    double gap = 0.0;
    double objective = 0.0;
    for (std::size_t i = 0; i < h1.size(); ++i) {
        wealth[i] = floor_rep.capital + floor_rep.gains[i] + solution.payoff[i];
        gap += backend.p()[i] * (problem.h_claim[i] - h1[i]) * (problem.h_claim[i] - h1[i]);
        objective += backend.p()[i] * (problem.h_claim[i] - wealth[i]) * (problem.h_claim[i] - wealth[i]);
    }
    auto bounds = sandwich_bounds(problem, backend);
    return {std::move(reduced), std::move(solution), std::move(floor_rep), std::move(wealth), gap, objective, bounds};
}

/// GBM pipeline: zero floor, so the reduction is the identity and the
/// canonical problem is solved through the dual equation.
struct GbmFullSolution {
    ReducedProblem<GbmBackend> reduced;
    std::optional<DualSolution> dual;  // empty on trivial / replication branches
    double projection_gap;
    double residual_risk;
};

inline GbmFullSolution solve_full_problem(const FullProblem<GbmBackend>& problem, const GbmBackend& backend) {
    const auto h1 = project_claim(problem, backend);
    const auto clipped = clip_claim(h1, problem.h_tilde);
    auto reduced = split_superhedge(problem.x, h1, clipped, problem.h_tilde, backend);
    const auto& params = backend.params();
    const auto& cfg = backend.config();
    const double gap = projection_gap(problem.h_claim, params, cfg.quad);
    switch (reduced.branch) {
        case ReducedBranch::Trivial: {
            // Zero capital: terminal wealth is 0, residual is E_P G~^2.
            auto f2 = [&](double b) {
                const double f = f_value(b, problem.h_claim, params, cfg.quad);
                return f * f;
            };
            const double mean_sq = integrate_gaussian_adaptive(f2, params.a1() * params.T(), params.T(), cfg.quad);
            return {std::move(reduced), std::nullopt, gap, mean_sq};
        }
        case ReducedBranch::Replication: return {std::move(reduced), std::nullopt, gap, 0.0};
        case ReducedBranch::Canonical: break;
    }
    auto dual = solve_v(reduced.g, problem.h_claim, params, cfg);
    const double risk = residual_risk(dual, problem.h_claim, params, cfg.quad);
    return {std::move(reduced), dual, gap, risk};
}

}  // namespace mvh
