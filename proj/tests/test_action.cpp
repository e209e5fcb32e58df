#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"
#include "vsrl/action.hpp"

using namespace vsrl;
using vsrl::testing::for_all;

TEST(DiscreteAction, IndexRange) {
    EXPECT_FALSE(discrete_action_from_index(0));
    EXPECT_EQ(*discrete_action_from_index(1), DiscreteAction::keep);
    EXPECT_EQ(*discrete_action_from_index(5), DiscreteAction::retract);
    EXPECT_FALSE(discrete_action_from_index(6));
}

TEST(DiscreteAction, StepsMatchCountingOracle) {
    SimSpec spec;
    const auto cfg = ActionConfig::from(spec);
    for_all(200, 31, [&](Rng& rng, int) {
        VirtualTarget t{0.0, rng.uniform(-kPi, kPi)};
        const double phi0 = t.phi;
        int turns = 0;
        double r = 0.0;
        for (int k = 0; k < 60; ++k) {
            const auto a = *discrete_action_from_index(1 + static_cast<int>(rng.below(5)));
            t = apply_discrete(t, a, cfg);
            if (a == DiscreteAction::rotate_ccw) ++turns;
            if (a == DiscreteAction::rotate_cw) --turns;
            if (a == DiscreteAction::extend) r = std::min(r + 12.0, cfg.r_max);
            if (a == DiscreteAction::retract) r = std::max(r - 12.0, 0.0);
            ASSERT_NEAR(t.r, r, 1e-12);
            ASSERT_NEAR(std::abs(normalize_angle(t.phi - (phi0 + turns * kPi / 12.0))), 0.0, 1e-9);
            ASSERT_GT(t.phi, -kPi - 1e-12);
            ASSERT_LE(t.phi, kPi + 1e-12);
        }
    });
}

TEST(DiscreteAction, RadiusClamps) {
    ActionConfig cfg;
    cfg.r_max = 30.0;
    VirtualTarget t;
    t = apply_discrete(t, DiscreteAction::retract, cfg);
    EXPECT_DOUBLE_EQ(t.r, 0.0);
    for (int i = 0; i < 5; ++i) t = apply_discrete(t, DiscreteAction::extend, cfg);
    EXPECT_DOUBLE_EQ(t.r, 30.0);
}

TEST(Wheels, InverseKinematics) {
    const auto w = wheels_from_body({20, 2}, 7.5);
    EXPECT_DOUBLE_EQ(w.left, 12.5);
    EXPECT_DOUBLE_EQ(w.right, 27.5);
    const auto c = wheels_to_command(w, 150);
    EXPECT_NEAR(c.left(), 12.5 / 1.5, 1e-12);
    EXPECT_NEAR(c.right(), 27.5 / 1.5, 1e-12);
}

TEST(Wheels, ProportionalScalingKeepsTurnSignAndRatio) {
    for_all(500, 32, [](Rng& rng, int) {
        const WheelSpeeds w{rng.uniform(-600, 600), rng.uniform(-600, 600)};
        const auto c = wheels_to_command(w, 150);
        ASSERT_LE(std::abs(c.left()), 100.0);
        ASSERT_LE(std::abs(c.right()), 100.0);
        const double turn = w.right - w.left;
        const double cmd_turn = c.right() - c.left();
        if (std::abs(turn) > 1e-9) {
            ASSERT_EQ(std::signbit(turn), std::signbit(cmd_turn));
        }
        if (std::abs(w.left) > 1e-6 && std::abs(w.right) > 1e-6) {
            ASSERT_NEAR(c.left() / c.right(), w.left / w.right, 1e-9);
        }
    });
}

TEST(Wheels, NonFiniteGivesZero) {
    EXPECT_EQ(wheels_to_command({NAN, 3}, 150), WheelCommand{});
    EXPECT_THROW(continuous_to_wheels({1, 1}, 0.0, 150), std::invalid_argument);
}

TEST(ClampAction, EnvelopeAndNaN) {
    const auto a = clamp_action({500, -90}, 150, 40);
    EXPECT_DOUBLE_EQ(a.v, 150);
    EXPECT_DOUBLE_EQ(a.omega, -40);
    const auto b = clamp_action({NAN, NAN}, 150, 40);
    EXPECT_DOUBLE_EQ(b.v, 0);
    EXPECT_DOUBLE_EQ(b.omega, 0);
}

TEST(GotoController, DrivesForwardOrReverse) {
    SimSpec spec;
    const auto cfg = ActionConfig::from(spec);
    const auto ahead = goto_controller({0, 0, 0}, {10, 0}, cfg);
    EXPECT_NEAR(ahead.v, 30.0, 1e-12);
    EXPECT_NEAR(ahead.omega, 0.0, 1e-12);
    const auto behind = goto_controller({0, 0, 0}, {-10, 0}, cfg);
    EXPECT_NEAR(behind.v, -30.0, 1e-12);
    EXPECT_NEAR(behind.omega, 0.0, 1e-12);
    const auto left = goto_controller({0, 0, 0}, {10, 10}, cfg);
    EXPECT_GT(left.omega, 0.0);
    EXPECT_EQ(goto_controller({1, 1, 0}, {1, 1}, cfg), HighLevelAction{});
    const auto far = goto_controller({0, 0, 0}, {1000, 0}, cfg);
    EXPECT_NEAR(far.v, 90.0, 1e-12);
}

TEST(Pipeline, DiscreteStepUpdatesTargetAndCommands) {
    SimSpec spec;
    const auto cfg = ActionConfig::from(spec);
    VirtualTarget t{0.0, 0.0};
    const auto c0 = discrete_step_pipeline({0, 0, 0}, t, DiscreteAction::keep, cfg, 7.5);
    EXPECT_EQ(c0, WheelCommand{});
    const auto c1 = discrete_step_pipeline({0, 0, 0}, t, DiscreteAction::extend, cfg, 7.5);
    EXPECT_DOUBLE_EQ(t.r, 12.0);
    EXPECT_GT(c1.left(), 0.0);
    EXPECT_DOUBLE_EQ(c1.left(), c1.right());
}
