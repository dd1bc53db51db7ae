#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mvh/discrete_oracle.hpp"

using namespace mvh;

TEST(DiscreteMarket, Validation) {
    EXPECT_THROW(DiscreteMarket({0.5, 0.5}, {0.5, 0.5}, {1.0}), Error);
    EXPECT_THROW(DiscreteMarket({0.5, 0.6}, {0.5, 0.5}, {1.0, 2.0}), Error);
    EXPECT_THROW(DiscreteMarket({1.0, 0.0}, {0.5, 0.5}, {1.0, 2.0}), Error);
    const DiscreteMarket m({0.25, 0.75}, {0.5, 0.5}, {1.0, 2.0});
    EXPECT_NEAR(m.density()[0], 2.0, 1e-15);
    EXPECT_NEAR(m.density()[1], 2.0 / 3.0, 1e-15);
}

TEST(DualDiscrete, TwoAtomExample) {
    const DiscreteMarket m({0.5, 0.5}, {0.5, 0.5}, {0.0, 10.0});
    const double v = dual_solve_discrete(m, 2.0);
    EXPECT_NEAR(v, -6.0, 1e-14);
    // scan oracle for the sign change of the budget on a 1e-6 grid
    double scanned = 0.0;
    for (double u = -7.0; u < -5.0; u += 1e-6) {
        const auto x = theorem_payoff(m, u);
        if (m.expect_q(x) >= 2.0) {
            scanned = u;
            break;
        }
    }
    EXPECT_NEAR(scanned, -6.0, 2e-6);
    const auto x = theorem_payoff(m, v);
    EXPECT_EQ(x[0], 0.0);
    EXPECT_NEAR(x[1], 4.0, 1e-14);
    const auto qp = qp_solve(m, 2.0);
    EXPECT_NEAR(qp.payoff[0], 0.0, 1e-14);
    EXPECT_NEAR(qp.payoff[1], 4.0, 1e-14);
    EXPECT_NEAR(qp.objective, 18.0, 1e-12);
}

TEST(DualDiscrete, Boundaries) {
    const DiscreteMarket m({0.5, 0.5}, {0.5, 0.5}, {0.0, 10.0});
    for (double g : {0.0, 5.0, 6.0, -1.0}) {
        try {
            dual_solve_discrete(m, g);
            FAIL() << g;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
        }
    }
    // v = 0 reproduces G; constant G with D = 1 flattens to g
    EXPECT_EQ(theorem_payoff(m, 0.0), m.claim());
    const DiscreteMarket flat({0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}, {4.0, 4.0, 4.0});
    const double v = dual_solve_discrete(flat, 1.5);
    for (double x : theorem_payoff(flat, v)) EXPECT_NEAR(x, 1.5, 1e-14);
}

TEST(DualDiscrete, TiedRatiosShareBreakpoint) {
    // atoms 0 and 1 have the same G/D
    const DiscreteMarket m({0.25, 0.25, 0.5}, {0.25, 0.25, 0.5}, {2.0, 2.0, 1.0});
    for (double g : {0.1, 0.5, 0.9, 1.4}) {
        const double v = dual_solve_discrete(m, g);
        EXPECT_NEAR(m.expect_q(theorem_payoff(m, v)), g, 1e-14);
    }
}

TEST(QpOracle, RandomInstancesMatchTheorem) {
    std::mt19937_64 rng(2024);
    for (int k = 0; k < 100; ++k) {
        const std::size_t n = 2 + rng() % 9;
        const auto inst = random_instance(n, rng);
        const double v = dual_solve_discrete(inst.market, inst.g);
        const auto x = theorem_payoff(inst.market, v);
        const auto qp = qp_solve(inst.market, inst.g);
        EXPECT_LT(v, 0.0);
        EXPECT_NEAR(inst.market.expect_q(x), inst.g, 1e-12);
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_GE(x[i], 0.0);
            EXPECT_NEAR(x[i], qp.payoff[i], 1e-9) << k << " " << i;
        }
        EXPECT_NEAR(inst.market.objective(x), qp.objective, 1e-9 * std::max(1.0, qp.objective));
        // monotone in the budget
        const double g2 = 0.5 * (inst.g + inst.market.claim_mean_q());
        EXPECT_GT(dual_solve_discrete(inst.market, g2), v);
    }
}

TEST(QpOracle, NearReplicationAndLimits) {
    const DiscreteMarket m({0.3, 0.3, 0.4}, {0.2, 0.5, 0.3}, {1.0, 3.0, 5.0});
    const auto qp = qp_solve(m, m.claim_mean_q() - 1e-9);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(qp.payoff[i], m.claim()[i], 1e-8);
    std::vector<double> p(17, 1.0 / 17), G(17, 1.0);
    try {
        qp_solve(DiscreteMarket(p, p, G), 0.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SizeLimit);
    }
}

TEST(Binomial, OneStep) {
    const BinomialTree tree(1, 1.0, 2.0, 0.5);
    EXPECT_NEAR(tree.q_up(), 1.0 / 3.0, 1e-15);
    const auto rep = replicate_binomial(tree, [](int ups) { return ups == 1 ? 3.0 : 0.0; });
    EXPECT_NEAR(rep.initial_capital, 1.0, 1e-15);
    EXPECT_NEAR(rep.strategy[0][0], 2.0, 1e-15);
    const auto flat = replicate_binomial(BinomialTree(4, 1.0, 1.1, 0.9), [](int) { return 2.5; });
    EXPECT_NEAR(flat.initial_capital, 2.5, 1e-15);
    for (const auto& row : flat.strategy) {
        for (double xi : row) EXPECT_NEAR(xi, 0.0, 1e-14);
    }
}

TEST(Binomial, SixStepReplicationOfOptimalPayoffOnAllPaths) {
    const BinomialTree tree(6, 1.0, 1.25, 0.8);
    const auto market = terminal_market(tree, 0.6, [](double s) { return std::max(s - 1.0, 0.0); });
    const double g = 0.4 * market.claim_mean_q();
    const double v = dual_solve_discrete(market, g);
    const auto x = theorem_payoff(market, v);
    const auto rep = replicate_binomial(tree, [&](int ups) { return x[ups]; });
    EXPECT_NEAR(rep.initial_capital, g, 1e-12);
    for (int path = 0; path < 64; ++path) {
        double wealth = rep.initial_capital;
        int ups = 0;
        for (int step = 0; step < 6; ++step) {
            const bool up = (path >> step) & 1;
            const double s_now = tree.price(step, ups);
            const double s_next = tree.price(step + 1, ups + (up ? 1 : 0));
            wealth += rep.strategy[step][ups] * (s_next - s_now);
            ups += up ? 1 : 0;
        }
        EXPECT_NEAR(wealth, x[ups], 1e-12) << path;
        EXPECT_GE(wealth, -1e-12);
    }
}

TEST(Instances, DeterministicAndRoundTrip) {
    std::mt19937_64 a(5), b(5);
    const auto i1 = random_instance(7, a);
    const auto i2 = random_instance(7, b);
    EXPECT_EQ(i1.market.p(), i2.market.p());
    EXPECT_EQ(i1.market.claim(), i2.market.claim());
    EXPECT_GT(i1.g, 0.0);
    EXPECT_LT(i1.g, i1.market.claim_mean_q());
    const auto back = instance_from_json(nlohmann::json::parse(to_json(i1).dump()));
    EXPECT_EQ(back.market.q(), i1.market.q());
    EXPECT_EQ(back.g, i1.g);
    EXPECT_THROW(instance_from_json(nlohmann::json{{"p", {1.0}}}), Error);
}
