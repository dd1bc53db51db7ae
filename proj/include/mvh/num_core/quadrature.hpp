#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <queue>
#include <span>
#include <vector>

#include "mvh/error.hpp"
#include "mvh/num_core/normal.hpp"

namespace mvh {

struct QuadratureConfig {
    int nodes = 128;             // Gauss-Hermite node count
    double truncation_sd = 10.0; // half-width of the adaptive window, in sd
    double abs_tol = 1e-10;
    int max_panels = 4096;       // subinterval budget of the adaptive scheme

    void validate() const {
        require(nodes >= 8, ErrorCode::InvalidArgument, "quadrature nodes must be >= 8");
        require(truncation_sd >= 6.0, ErrorCode::InvalidArgument, "truncation_sd must be >= 6");
        require(abs_tol > 0.0, ErrorCode::InvalidArgument, "abs_tol must be positive");
        require(max_panels >= 16, ErrorCode::InvalidArgument, "max_panels must be >= 16");
    }
};

/// Probabilists' Gauss-Hermite rule: sum(w_i f(z_i)) ~ E f(Z), Z ~ N(0,1).
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussHermiteRule(int n) : nodes(n), weights(n) {
        // Newton iteration on orthonormal physicists' Hermite polynomials,
        // then rescale x -> sqrt(2) x and w -> w / sqrt(pi).
        const double pim4 = 0.7511255444649425;  // pi^(-1/4)
        const int m = (n + 1) / 2;
        std::vector<double> x(n), w(n);
        double z = 0.0;
        for (int i = 0; i < m; ++i) {
            if (i == 0) {
                z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
            } else if (i == 1) {
                z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
            } else if (i == 2) {
                z = 1.86 * z - 0.86 * x[0];
            } else if (i == 3) {
                z = 1.91 * z - 0.91 * x[1];
            } else {
                z = 2.0 * z - x[i - 2];
            }
            double pp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p1 = pim4;
                double p2 = 0.0;
                for (int j = 1; j <= n; ++j) {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
                }
                pp = std::sqrt(2.0 * n) * p2;
                const double z1 = z;
                z = z1 - p1 / pp;
                if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        for (int i = 0; i < n; ++i) {
            nodes[i] = std::numbers::sqrt2 * x[n - 1 - i];
            weights[i] = w[n - 1 - i] / std::sqrt(std::numbers::pi);
        }
    }
};

/// Rules are computed once per node count and shared read-only afterwards.
inline const GaussHermiteRule& gauss_hermite_rule(int n) {
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<const GaussHermiteRule>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<const GaussHermiteRule>(n);
    return *slot;
}

/// E[fn(Z)], Z ~ N(mean, variance), by Gauss-Hermite. Only accurate for
/// smooth integrands; use integrate_gaussian_adaptive across kinks.
template <class Fn>
double integrate_gaussian(Fn&& fn, double mean, double variance, const QuadratureConfig& cfg = {}) {
    require(variance > 0.0, ErrorCode::InvalidArgument, "variance must be positive");
    const auto& rule = gauss_hermite_rule(cfg.nodes);
    const double sd = std::sqrt(variance);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double value = fn(mean + sd * rule.nodes[i]);
        if (!std::isfinite(value)) throw Error(ErrorCode::NonFinite, "integrand is not finite");
        sum += rule.weights[i] * value;
    }
    return sum;
}

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
inline constexpr std::array<double, 8> gk15_nodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> gk15_weights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> g7_weights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a;
    double b;
    double value;
    double error;
    bool operator<(const Panel& other) const { return error < other.error; }
};

template <class Fn>
Panel gk15(Fn& fn, double a, double b) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = fn(center);
    double kronrod = fc * gk15_weights[7];
    double gauss = fc * g7_weights[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = half * gk15_nodes[j];
        const double sum = fn(center - dx) + fn(center + dx);
        kronrod += gk15_weights[j] * sum;
        if (j % 2 == 1) gauss += g7_weights[j / 2] * sum;
    }
    return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod on a finite interval. The interval is first
/// cut at `breaks` (kinks known to the caller) and into a few equal pieces;
/// the worst panel is then bisected until the summed error estimate drops
/// below max(abs_tol, 1e-13 |I|) or the panel budget is spent.
template <class Fn>
double integrate_adaptive(Fn&& fn, double a, double b, std::span<const double> breaks,
                          double abs_tol, int max_panels) {
    if (!(b > a)) return 0.0;
    auto checked = [&fn](double x) {
        const double value = fn(x);
        if (!std::isfinite(value)) throw Error(ErrorCode::NonFinite, "integrand is not finite");
        return value;
    };
    std::vector<double> cuts{a};
    std::vector<double> inner;
    for (double x : breaks) {
        if (x > a && x < b) inner.push_back(x);
    }
    std::sort(inner.begin(), inner.end());
    for (double x : inner) cuts.push_back(x);
    cuts.push_back(b);

    std::priority_queue<detail::Panel> panels;
    constexpr int initial_split = 4;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double width = (cuts[i + 1] - cuts[i]) / initial_split;
        if (width <= 0.0) continue;
        for (int k = 0; k < initial_split; ++k) {
            const double lo = cuts[i] + k * width;
            const double hi = (k + 1 == initial_split) ? cuts[i + 1] : lo + width;
            panels.push(detail::gk15(checked, lo, hi));
        }
    }
    auto totals = [&panels]() {
        double value = 0.0;
        double error = 0.0;
        auto copy = panels;
        while (!copy.empty()) {
            value += copy.top().value;
            error += copy.top().error;
            copy.pop();
        }
        return std::pair{value, error};
    };
    auto [value, error] = totals();
    while (static_cast<int>(panels.size()) < max_panels &&
           error > std::max(abs_tol, 1e-13 * std::abs(value))) {
        const detail::Panel worst = panels.top();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) break;
        panels.pop();
        const detail::Panel left = detail::gk15(checked, worst.a, mid);
        const detail::Panel right = detail::gk15(checked, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        panels.push(left);
        panels.push(right);
        if (static_cast<int>(panels.size()) % 64 == 0) std::tie(value, error) = totals();
    }
    // Re-sum from the panels so the result does not carry the running drift.
    return totals().first;
}

/// Integration range and known kink locations, in the integrand's own variable.
struct GaussianWindow {
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    std::vector<double> breaks{};
};

/// E[fn(Z) 1{lower <= Z <= upper}], Z ~ N(mean, variance), by adaptive
/// Gauss-Kronrod over mean +- truncation_sd standard deviations. Intended for
/// integrands with (.)^+ kinks or indicator cut-offs.
template <class Fn>
double integrate_gaussian_adaptive(Fn&& fn, double mean, double variance,
                                   const QuadratureConfig& cfg = {},
                                   const GaussianWindow& window = {}) {
    require(variance > 0.0, ErrorCode::InvalidArgument, "variance must be positive");
    const double sd = std::sqrt(variance);
    const double lo = std::max(-cfg.truncation_sd, (window.lower - mean) / sd);
    const double hi = std::min(cfg.truncation_sd, (window.upper - mean) / sd);
    if (!(hi > lo)) return 0.0;
    std::vector<double> breaks;
    breaks.reserve(window.breaks.size() + 1);
    for (double x : window.breaks) breaks.push_back((x - mean) / sd);
    if (lo < 0.0 && hi > 0.0) breaks.push_back(0.0);
    auto weighted = [&](double u) {
        const double value = fn(mean + sd * u);
        if (!std::isfinite(value)) throw Error(ErrorCode::NonFinite, "integrand is not finite");
        return value * norm_pdf(u);
    };
    return integrate_adaptive(weighted, lo, hi, breaks, cfg.abs_tol, cfg.max_panels);
}

}  // namespace mvh
