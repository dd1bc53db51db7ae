#pragma once

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace mvh {

inline constexpr double inv_sqrt_2pi = 0.398942280401432677939946059934;

inline double norm_pdf(double x) { return inv_sqrt_2pi * std::exp(-0.5 * x * x); }

/// Standard normal CDF. erfc keeps full relative precision in the left tail,
/// so Phi(x) + Phi(-x) == 1 to a couple of ulps everywhere.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// log Phi(x), accurate where Phi itself underflows.
inline double log_norm_cdf(double x) {
    if (x > -30.0) return std::log(norm_cdf(x));
    // Mills-ratio asymptotic series, truncated after three terms.
    const double x2 = x * x;
    const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

/// Phi^{-1}(p) for p in (0, 1). Evaluated in plain double so results do not
/// depend on the width of long double.
inline double inverse_norm_cdf(double p) {
    using policy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p, policy());
}

/// Density of N(mean, variance) at x.
inline double gaussian_pdf(double x, double mean, double variance) {
    const double sd = std::sqrt(variance);
    return norm_pdf((x - mean) / sd) / sd;
}

}  // namespace mvh
