#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"
#include "vsrl/env.hpp"
#include "vsrl/policies.hpp"
#include "vsrl/reward.hpp"

using namespace vsrl;
using vsrl::testing::for_all;

TEST(BallPotential, Anchors) {
    FieldSpec f;
    EXPECT_NEAR(ball_potential(f.goal_center_own(), f), -1.0, 1e-12);
    EXPECT_NEAR(ball_potential(f.goal_center_adv(), f), 0.0, 1e-12);
    EXPECT_NEAR(ball_potential({0, 0}, f), -0.5, 1e-12);
    EXPECT_NEAR(ball_potential({0, 40}, f), -0.5, 1e-12);
}

TEST(BallPotential, BoundedAndMirroredForYellow) {
    FieldSpec f;
    for_all(2000, 21, [&](Rng& rng, int) {
        const Vec2 p{rng.uniform(-f.half_length_total(), f.half_length_total()), rng.uniform(-f.half_width, f.half_width)};
        const double blue = ball_potential(p, f, Team::blue);
        const double yellow = ball_potential(p, f, Team::yellow);
        EXPECT_GE(blue, -1.0);
        EXPECT_LE(blue, 0.0);
        EXPECT_NEAR(blue + yellow, -1.0, 1e-12);
        EXPECT_NEAR(ball_potential({-p.x, p.y}, f, Team::yellow), blue, 1e-12);
    });
}

TEST(BallPotential, IncreasesTowardAdversaryGoal) {
    FieldSpec f;
    double prev = -2.0;
    for (double x = -85; x <= 85; x += 5) {
        const double v = ball_potential({x, 0}, f);
        EXPECT_GT(v, prev);
        prev = v;
    }
}

TEST(MoveReward, PositiveWhenApproaching) {
    EXPECT_NEAR(reward_move({1, 0}, {10, 0}, {0, 0}, {10, 0}, 0.5), 2.0, 1e-12);
    EXPECT_NEAR(reward_move({0, 0}, {10, 0}, {1, 0}, {10, 0}, 0.5), -2.0, 1e-12);
    EXPECT_THROW(reward_move({}, {}, {}, {}, 0.0), std::invalid_argument);
}

TEST(EnergyReward, NonPositiveAndProportional) {
    EXPECT_DOUBLE_EQ(reward_energy({}), 0.0);
    EXPECT_DOUBLE_EQ(reward_energy({30, -40}), -70.0);
    for_all(100, 22, [](Rng& rng, int) {
        EXPECT_LE(reward_energy({rng.uniform(-100, 100), rng.uniform(-100, 100)}), 0.0);
    });
}

TEST(Combine, WeightedSum) {
    const RewardComponents c{1.0, 10.0, -2.0, -150.0};
    const auto r = combine(c, RewardWeights::continuous());
    EXPECT_DOUBLE_EQ(r.total, 1.0 * 1.0 + 0.02 * 10.0 + 0.08 * -2.0 + 1e-5 * -150.0);
    const auto d = combine(c, RewardWeights::discrete());
    EXPECT_DOUBLE_EQ(d.total, 1.0 + 0.2 - 0.16);
    EXPECT_DOUBLE_EQ(d.r_energy, -150.0);
}

TEST(Shaping, TelescopesOverAnEpisode) {
    SimSpec spec;
    EpisodeConfig cfg;
    cfg.reset_mode = ResetMode::uniform_random;
    cfg.with_opponents = false;
    cfg.max_duration = 200 * cfg.control_dt;
    cfg.seed = 3;
    SoccerEnv env(spec, cfg);
    env.reset();
    const double bp0 = ball_potential(env.world().ball.position, spec.field);
    const double d0 = distance(env.world().robots_blue[0].pose.position(), env.world().ball.position);
    ChasePolicy chase(spec);
    RandomPolicy random(3, 15);
    double sum_p = 0, sum_m = 0;
    int step = 0;
    bool goal = false;
    while (!env.done()) {
        const auto& w = env.world();
        const AgentAction a = (step++ / 60) % 2 == 0 ? AgentAction{chase(w, w.robots_blue[0])} : AgentAction{random.next()};
        const auto r = env.step(std::vector<AgentAction>{a});
        if (r.info.goal) goal = true;
        sum_p += r.rewards[0].r_potential_grad * cfg.control_dt;
        sum_m += r.rewards[0].r_move * cfg.control_dt;
    }
    ASSERT_FALSE(goal) << "a goal re-places the ball and breaks the sum; pick another seed";
    EXPECT_NEAR(sum_p, ball_potential(env.world().ball.position, spec.field) - bp0, 1e-9);
    EXPECT_NEAR(sum_m, d0 - distance(env.world().robots_blue[0].pose.position(), env.world().ball.position), 1e-9);
}
