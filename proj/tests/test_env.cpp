#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"
#include "vsrl/env.hpp"

using namespace vsrl;
using vsrl::testing::for_all;

TEST(Observation, LayoutAndSize) {
    SimSpec spec;
    EpisodeConfig cfg;
    SoccerEnv env(spec, cfg);
    const auto obs = env.reset();
    ASSERT_EQ(obs.size(), observation_size(2));
    EXPECT_EQ(obs.size(), 4u + 7u * 2u + 1u);
    // kickoff: ball at centre, blue at (-20, 0) facing +x
    EXPECT_DOUBLE_EQ(obs[0], 0.0);
    EXPECT_NEAR(obs[4], -20.0 / spec.field.half_length_total(), 1e-15);
    EXPECT_DOUBLE_EQ(obs[6], 0.0);  // sin
    EXPECT_DOUBLE_EQ(obs[7], 1.0);  // cos
    EXPECT_DOUBLE_EQ(obs.back(), 0.0);
}

TEST(Observation, DecodeInvertsBuild) {
    SimSpec spec;
    EpisodeConfig cfg;
    for (bool normalized : {true, false}) {
        cfg.normalize_observations = normalized;
        for_all(30, 41, [&](Rng& rng, int) {
            WorldState w = random_world(3, 3, spec, rng);
            w.ball.velocity = {rng.uniform(-100, 100), rng.uniform(-100, 100)};
            for (std::size_t i = 0; i < w.robot_count(); ++i)
                w.robot(i).twist = {rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-30, 30)};
            w.elapsed = rng.uniform(0, cfg.max_duration);
            const auto obs = build_observation(w, spec, cfg);
            const auto d = decode_observation(obs, spec, cfg);
            ASSERT_EQ(d.poses.size(), w.robot_count());
            EXPECT_NEAR(d.ball.position.x, w.ball.position.x, 1e-9);
            EXPECT_NEAR(d.ball.velocity.y, w.ball.velocity.y, 1e-9);
            for (std::size_t i = 0; i < w.robot_count(); ++i) {
                EXPECT_NEAR(d.poses[i].x, w.robot(i).pose.x, 1e-9);
                EXPECT_NEAR(std::abs(normalize_angle(d.poses[i].theta - w.robot(i).pose.theta)), 0.0, 1e-9);
                EXPECT_NEAR(d.twists[i].omega, w.robot(i).twist.omega, 1e-9);
            }
            EXPECT_NEAR(d.elapsed, w.elapsed, 1e-9);
        });
    }
    EXPECT_THROW(decode_observation(std::vector<double>(7), spec, cfg), std::invalid_argument);
}

TEST(Observation, TimestampClamped) {
    EXPECT_DOUBLE_EQ(episode_timestamp(0, 300), 0.0);
    EXPECT_DOUBLE_EQ(episode_timestamp(150, 300), 0.5);
    EXPECT_DOUBLE_EQ(episode_timestamp(400, 300), 1.0);
    EXPECT_DOUBLE_EQ(episode_timestamp(9000 * (1.0 / 30.0), 300), 1.0);
}

TEST(Reset, KickoffIsMirrored) {
    SimSpec spec;
    const auto w = kickoff_world(3, 3, spec);
    for (int i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(w.robots_blue[i].pose.x, -w.robots_yellow[i].pose.x);
        EXPECT_DOUBLE_EQ(w.robots_blue[i].pose.y, -w.robots_yellow[i].pose.y);
        EXPECT_LT(w.robots_blue[i].pose.x, 0.0);
    }
    EXPECT_EQ(w.ball.position, (Vec2{0, 0}));
}

TEST(Reset, RandomPlacementHasNoOverlap) {
    SimSpec spec;
    for_all(200, 42, [&](Rng& rng, int) {
        const auto w = random_world(3, 3, spec, rng);
        for (std::size_t i = 0; i < w.robot_count(); ++i) {
            const Vec2 p = w.robot(i).pose.position();
            ASSERT_GE(distance(p, w.ball.position), spec.robot.body_radius + spec.ball.radius);
            ASSERT_GE(wall_clearance(p, spec.field), spec.robot.body_radius);
            for (std::size_t j = i + 1; j < w.robot_count(); ++j)
                ASSERT_GE(distance(p, w.robot(j).pose.position()), 2 * spec.robot.body_radius);
        }
        ASSERT_GE(wall_clearance(w.ball.position, spec.field), spec.ball.radius + 2.0 - 1e-9);
    });
}

TEST(Reset, SameSeedSameWorld) {
    EpisodeConfig cfg;
    cfg.reset_mode = ResetMode::uniform_random;
    cfg.seed = 99;
    SoccerEnv a({}, cfg), b({}, cfg);
    EXPECT_EQ(a.reset(), b.reset());
    EXPECT_EQ(a.world(), b.world());
    cfg.seed = 100;
    SoccerEnv c({}, cfg);
    c.reset();
    EXPECT_NE(a.world(), c.world());
}

TEST(Episode, EndsAfterMaxFrames) {
    EpisodeConfig cfg;
    cfg.max_duration = 1.0;
    SoccerEnv env({}, cfg);
    env.reset();
    int steps = 0;
    while (!env.done()) {
        env.step(std::vector<AgentAction>{WheelCommand{}});
        ++steps;
    }
    EXPECT_EQ(steps, 30);
    EXPECT_THROW(env.step(std::vector<AgentAction>{WheelCommand{}}), std::logic_error);
}

TEST(Episode, RejectsWrongActionCount) {
    SoccerEnv env;
    env.reset();
    EXPECT_THROW(env.step(std::vector<AgentAction>{}), std::invalid_argument);
}

TEST(Episode, GoalScoresAndReplacesKickoff) {
    SimSpec spec;
    EpisodeConfig cfg;
    SoccerEnv env(spec, cfg);
    env.reset();
    WorldState w = env.world();
    w.ball.position = {73, 0};
    w.ball.velocity = {100, 0};
    env.set_world(w);
    const auto r = env.step(std::vector<AgentAction>{WheelCommand{}});
    ASSERT_TRUE(r.info.goal);
    EXPECT_EQ(*r.info.goal, Team::blue);
    EXPECT_EQ(r.info.score.own, 1);
    EXPECT_DOUBLE_EQ(r.rewards[0].r_goal, 1.0);
    EXPECT_GT(r.info.world.ball.position.x, spec.field.play_half_length);
    EXPECT_EQ(env.world().ball.position, (Vec2{0, 0}));
    EXPECT_FALSE(r.done);
}

TEST(Episode, OwnGoalIsNegative) {
    EpisodeConfig cfg;
    cfg.end_on_goal = true;
    SoccerEnv env({}, cfg);
    env.reset();
    WorldState w = env.world();
    w.ball.position = {-73, 5};
    w.ball.velocity = {-100, 0};
    env.set_world(w);
    const auto r = env.step(std::vector<AgentAction>{WheelCommand{}});
    ASSERT_TRUE(r.info.goal);
    EXPECT_EQ(*r.info.goal, Team::yellow);
    EXPECT_DOUBLE_EQ(r.rewards[0].r_goal, -1.0);
    EXPECT_TRUE(r.done);
}

TEST(Episode, ActionModesAgree) {
    // the same motion expressed as wheel speeds and as body velocities
    SoccerEnv a, b;
    a.reset();
    b.reset();
    for (int i = 0; i < 20; ++i) {
        a.step(std::vector<AgentAction>{WheelCommand{20, 40}});
        b.step(std::vector<AgentAction>{HighLevelAction{45.0, 4.0}});
    }
    EXPECT_NEAR(a.world().robots_blue[0].pose.x, b.world().robots_blue[0].pose.x, 1e-9);
    EXPECT_NEAR(a.world().robots_blue[0].pose.theta, b.world().robots_blue[0].pose.theta, 1e-9);
}

TEST(Episode, DiscreteTargetStartsAtRobot) {
    SoccerEnv env;
    env.reset();
    ASSERT_EQ(env.targets().size(), 1u);
    EXPECT_DOUBLE_EQ(env.targets()[0].r, 0.0);
    env.step(std::vector<AgentAction>{DiscreteAction::extend});
    EXPECT_DOUBLE_EQ(env.targets()[0].r, 12.0);
    EXPECT_GT(env.world().robots_blue[0].pose.x, -20.0);
}

TEST(Episode, EnergyRewardUsesCommands) {
    SoccerEnv env;
    env.reset();
    const auto r = env.step(std::vector<AgentAction>{WheelCommand{30, -50}});
    EXPECT_DOUBLE_EQ(r.rewards[0].r_energy, -80.0);
}

TEST(EpisodeConfig, Validation) {
    EpisodeConfig c;
    c.n_per_team = 4;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.max_duration = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.with_opponents = false;
    EXPECT_EQ(c.yellow_count(), 0);
    EXPECT_EQ(c.max_frames(), 9000u);
}
