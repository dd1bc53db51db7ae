#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "mvh/num_core/normal.hpp"
#include "mvh/num_core/quadrature.hpp"
#include "mvh/num_core/roots.hpp"

using namespace mvh;

namespace {

// Maclaurin series of erf in long double; converges fast for |x| <= 3.
long double erf_series(long double x) {
    long double term = x;
    long double sum = x;
    for (int n = 1; n < 200; ++n) {
        term *= -x * x / n;
        const long double add = term / (2 * n + 1);
        sum += add;
        if (std::fabs(add) < 1e-24L) break;
    }
    return 2.0L / std::sqrt(std::numbers::pi_v<long double>) * sum;
}

long double cdf_series(long double z) { return 0.5L * (1.0L + erf_series(z / std::sqrt(2.0L))); }

}  // namespace

TEST(Normal, CdfMatchesSeriesOracle) {
    for (double z = -4.0; z <= 4.0; z += 0.0625) {
        const long double ref = cdf_series(z);
        EXPECT_NEAR(norm_cdf(z), static_cast<double>(ref), 2e-15 * static_cast<double>(ref) + 1e-17) << z;
    }
}

TEST(Normal, CdfSymmetry) {
    for (double z = 0.0; z <= 30.0; z += 0.37) EXPECT_NEAR(norm_cdf(z) + norm_cdf(-z), 1.0, 4e-16);
}

TEST(Normal, InverseRoundTrip) {
    for (double p : {1e-300, 1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-12}) {
        EXPECT_NEAR(norm_cdf(inverse_norm_cdf(p)), p, 1e-13 * std::min(p, 1.0 - p) + 1e-300) << p;
    }
    EXPECT_EQ(inverse_norm_cdf(0.5), 0.0);
}

TEST(Normal, LogCdfContinuousAcrossAsymptoticSwitch) {
    const double below = log_norm_cdf(-30.0 - 1e-9);
    const double above = log_norm_cdf(-30.0 + 1e-9);
    EXPECT_NEAR(below, above, 1e-6);
    EXPECT_NEAR(log_norm_cdf(-5.0), std::log(norm_cdf(-5.0)), 1e-13);
    EXPECT_TRUE(std::isfinite(log_norm_cdf(-200.0)));
    // leading behaviour -x^2/2 - log(-x) - log(sqrt(2 pi))
    EXPECT_NEAR(log_norm_cdf(-200.0), -20000.0 - std::log(200.0) - 0.5 * std::log(2 * std::numbers::pi) - 1.0 / 40000.0,
                1e-8);
}

TEST(Normal, PdfIntegratesToOne) {
    EXPECT_NEAR(gaussian_pdf(1.0, 1.0, 4.0), norm_pdf(0.0) / 2.0, 1e-16);
}

TEST(GaussHermite, PolynomialMomentsExact) {
    for (int n : {8, 20, 64, 128}) {
        // E Z^(2k) = (2k-1)!!, odd moments vanish; exact for degree < 2n
        double double_factorial = 1.0;
        for (int k = 0; 2 * k < 2 * n - 1 && k <= 8; ++k) {
            if (k > 0) double_factorial *= (2 * k - 1);
            const double even = integrate_gaussian([k](double x) { return std::pow(x, 2 * k); }, 0.0, 1.0, {.nodes = n});
            const double odd = integrate_gaussian([k](double x) { return std::pow(x, 2 * k + 1); }, 0.0, 1.0, {.nodes = n});
            EXPECT_NEAR(even, double_factorial, 1e-11 * double_factorial) << n << " " << k;
            EXPECT_NEAR(odd, 0.0, 1e-9 * double_factorial) << n << " " << k;
        }
    }
}

TEST(GaussHermite, LognormalMean) {
    // E exp(sigma Z) = exp(sigma^2 / 2)
    EXPECT_NEAR(integrate_gaussian([](double x) { return std::exp(x); }, 0.0, 2.0), std::exp(1.0), 1e-12);
}

TEST(GaussHermite, RejectsNonFinite) {
    EXPECT_THROW(integrate_gaussian([](double) { return std::numeric_limits<double>::quiet_NaN(); }, 0.0, 1.0), Error);
    EXPECT_THROW(integrate_gaussian([](double x) { return x; }, 0.0, 0.0), Error);
}

TEST(Adaptive, KinkedIntegrands) {
    // E|Z| = sqrt(2/pi) sigma
    const double sigma = 1.7;
    EXPECT_NEAR(integrate_gaussian_adaptive([](double x) { return std::abs(x); }, 0.0, sigma * sigma),
                sigma * std::sqrt(2.0 / std::numbers::pi), 1e-12);
    // E (Z - k)^+ = phi(k) - k (1 - Phi(k)) for Z ~ N(0,1)
    const double k = 0.3;
    EXPECT_NEAR(integrate_gaussian_adaptive([k](double x) { return std::max(x - k, 0.0); }, 0.0, 1.0, {}, {.breaks = {k}}),
                norm_pdf(k) - k * norm_cdf(-k), 1e-13);
}

TEST(Adaptive, TruncatedWindow) {
    // P(a <= Z <= b)
    const double p = integrate_gaussian_adaptive([](double) { return 1.0; }, 1.0, 4.0, {}, {.lower = 0.0, .upper = 3.0});
    EXPECT_NEAR(p, norm_cdf(1.0) - norm_cdf(-0.5), 1e-13);
    EXPECT_EQ(integrate_gaussian_adaptive([](double) { return 1.0; }, 0.0, 1.0, {}, {.lower = 2.0, .upper = 1.0}), 0.0);
}

TEST(Adaptive, PlainInterval) {
    const std::vector<double> breaks{0.5};
    EXPECT_NEAR(integrate_adaptive([](double x) { return std::abs(x - 0.5); }, 0.0, 1.0, breaks, 1e-14, 4096), 0.25,
                1e-15);
    EXPECT_NEAR(integrate_adaptive([](double x) { return std::sqrt(x); }, 0.0, 1.0, {}, 1e-12, 4096), 2.0 / 3.0,
                1e-11);
}

TEST(Roots, MonotoneRoot) {
    const double x = find_root_monotone([](double z) { return z * z * z; }, 8.0, {0.0, 1.0});
    EXPECT_NEAR(x, 2.0, 1e-11);
    // the value tolerance alone may end the search far from the exact root
    const auto ex = find_root_monotone_ex([](double z) { return std::exp(z); }, 1e-30, {-1.0, 0.0});
    EXPECT_LE(std::abs(std::exp(ex.x) - 1e-30), RootConfig{}.abs_tol);
    EXPECT_GT(ex.iterations, 0);
    const auto tight = find_root_monotone_ex([](double z) { return std::exp(z); }, 0.25, {3.0, 4.0});
    EXPECT_NEAR(tight.x, std::log(0.25), 1e-11);
}

TEST(Roots, NoBracket) {
    try {
        find_root_monotone([](double z) { return std::atan(z); }, 2.0, {0.0, 1.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoBracket);
    }
}

TEST(Roots, GeneralizedInverseOfStep) {
    // fn = floor(z): inf{z : floor(z) > 2.5} = 3
    auto step = [](double z) { return std::floor(z); };
    EXPECT_NEAR(monotone_inverse(step, 2.5), 3.0, 1e-11);
    // at a level hit by a flat run, the right edge of the run: inf{z : floor(z) > 2} = 3
    EXPECT_NEAR(monotone_inverse(step, 2.0), 3.0, 1e-11);
    // continuous strictly increasing: ordinary inverse
    EXPECT_NEAR(monotone_inverse([](double z) { return std::exp(z); }, 5.0), std::log(5.0), 1e-11);
}

TEST(Roots, GeneralizedInverseEdges) {
    // exceeds the level everywhere: -inf
    EXPECT_EQ(monotone_inverse([](double z) { return std::exp(z); }, -1.0), -std::numeric_limits<double>::infinity());
    try {
        monotone_inverse([](double z) { return std::tanh(z); }, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Unbounded);
    }
}

TEST(Config, Validation) {
    EXPECT_THROW((QuadratureConfig{.nodes = 4}.validate()), Error);
    EXPECT_THROW((RootConfig{.abs_tol = 0.0}.validate()), Error);
    EXPECT_NO_THROW(QuadratureConfig{}.validate());
}
