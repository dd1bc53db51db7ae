#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "mvh/error.hpp"

namespace mvh {

struct RootConfig {
    double abs_tol = 1e-12;       // on |fn(x) - target|
    double x_tol = 1e-12;         // on bracket width
    int max_iter = 200;
    double bracket_growth = 2.0;

    void validate() const {
        require(abs_tol > 0.0 && x_tol > 0.0, ErrorCode::InvalidArgument, "root tolerances must be positive");
        require(max_iter >= 50, ErrorCode::InvalidArgument, "root max_iter must be >= 50");
        require(bracket_growth > 1.0, ErrorCode::InvalidArgument, "bracket_growth must exceed 1");
    }
};

struct RootResult {
    double x;
    int iterations;
};

namespace detail {

// Bracket width tolerance is relative to the magnitude of the endpoints once
// they are far from zero, otherwise bisection cannot reach x_tol in doubles.
inline bool bracket_closed(double lo, double hi, double x_tol) {
    const double mid = 0.5 * (lo + hi);
    return hi - lo <= x_tol * std::max(1.0, std::abs(mid)) || !(mid > lo && mid < hi);
}

// Widen [lo, hi] geometrically until pred(lo) is false and pred(hi) is true.
template <class Pred>
std::pair<double, double> expand_bracket(Pred&& pred, double lo, double hi, const RootConfig& cfg,
                                         int& iterations) {
    if (lo > hi) std::swap(lo, hi);
    if (!(hi > lo)) hi = lo + 1.0;
    double width = hi - lo;
    while (pred(lo)) {
        if (++iterations > cfg.max_iter || !std::isfinite(lo)) {
            throw Error(ErrorCode::NoBracket, "could not bracket from below");
        }
        width *= cfg.bracket_growth;
        hi = lo;
        lo = hi - width;
    }
    while (!pred(hi)) {
        if (++iterations > cfg.max_iter || !std::isfinite(hi)) {
            throw Error(ErrorCode::NoBracket, "could not bracket from above");
        }
        width *= cfg.bracket_growth;
        lo = hi;
        hi = lo + width;
    }
    return {lo, hi};
}

}  // namespace detail

/// Solves fn(x) = target for nondecreasing fn by bracket expansion plus
/// bisection. Only monotonicity is assumed, so no derivative-based steps.
template <class Fn>
RootResult find_root_monotone_ex(Fn&& fn, double target, std::pair<double, double> seed_bracket,
                                 const RootConfig& cfg = {}) {
    int iterations = 0;
    auto above = [&](double x) { return fn(x) >= target; };
    auto [lo, hi] = detail::expand_bracket(above, seed_bracket.first, seed_bracket.second, cfg, iterations);
    for (int i = 0; i < cfg.max_iter; ++i, ++iterations) {
        const double mid = 0.5 * (lo + hi);
        const double value = fn(mid);
        if (std::abs(value - target) <= cfg.abs_tol || detail::bracket_closed(lo, hi, cfg.x_tol)) {
            return {mid, iterations};
        }
        if (value < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    throw Error(ErrorCode::MaxIter, "root tolerance not met");
}

template <class Fn>
double find_root_monotone(Fn&& fn, double target, std::pair<double, double> seed_bracket,
                          const RootConfig& cfg = {}) {
    return find_root_monotone_ex(std::forward<Fn>(fn), target, seed_bracket, cfg).x;
}

/// Generalized inverse inf{z : fn(z) > y} of a nondecreasing fn, to x_tol.
/// On a flat run at level y this is the right edge of the run. Returns -inf
/// when fn exceeds y everywhere below the seed and the run-out is unbounded.
template <class Fn>
double monotone_inverse(Fn&& fn, double y, const RootConfig& cfg = {},
                        std::pair<double, double> seed_bracket = {-1.0, 1.0}) {
    auto above = [&](double z) { return fn(z) > y; };
    double lo = seed_bracket.first;
    double hi = seed_bracket.second;
    double width = hi - lo;
    int iterations = 0;
    while (!above(hi)) {
        if (++iterations > cfg.max_iter || !std::isfinite(hi)) {
            throw Error(ErrorCode::Unbounded, "level is not exceeded on the reachable range");
        }
        width *= cfg.bracket_growth;
        lo = hi;
        hi = lo + width;
    }
    while (above(lo)) {
        if (++iterations > cfg.max_iter || !std::isfinite(lo)) {
            return -std::numeric_limits<double>::infinity();
        }
        width *= cfg.bracket_growth;
        hi = lo;
        lo = hi - width;
    }
    // Invariant: fn(lo) <= y < fn(hi).
    for (int i = 0; i < 4 * cfg.max_iter; ++i) {
        if (detail::bracket_closed(lo, hi, cfg.x_tol)) break;
        const double mid = 0.5 * (lo + hi);
        if (above(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace mvh
