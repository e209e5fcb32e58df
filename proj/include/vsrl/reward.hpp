#pragma once

#include <cmath>
#include <stdexcept>

#include "vsrl/geometry.hpp"
#include "vsrl/physics.hpp"

namespace vsrl {

struct RewardWeights {
    double goal = 1.0;
    double move = 0.02;
    double potential = 0.08;
    double energy = 1e-5;

    static RewardWeights continuous() { return {}; }
    static RewardWeights discrete() { return {1.0, 0.02, 0.08, 0.0}; }
};

struct RewardComponents {
    double goal = 0.0;
    double move = 0.0;
    double potential_grad = 0.0;
    double energy = 0.0;
};

struct RewardBreakdown {
    double r_goal = 0.0;
    double r_move = 0.0;
    double r_potential_grad = 0.0;
    double r_energy = 0.0;
    double total = 0.0;
};

/// Rate at which the agent closes its distance to the ball (positive when
/// approaching).
inline double reward_move(Vec2 agent, Vec2 ball, Vec2 prev_agent, Vec2 prev_ball, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("reward_move: dt must be positive");
    return (distance(prev_agent, prev_ball) - distance(agent, ball)) / dt;
}

/// Ball potential in [-1, 0]: -1 at the attacking team's own goal centre, 0 at
/// the adversary's.
inline double ball_potential(Vec2 ball, const FieldSpec& field, Team attacking = Team::blue) {
    Vec2 own = field.goal_center_own();
    Vec2 adv = field.goal_center_adv();
    if (attacking == Team::yellow) std::swap(own, adv);
    return ((distance(own, ball) - distance(adv, ball)) / field.normalization_length - 1.0) / 2.0;
}

inline double reward_potential_grad(double bp_now, double bp_prev, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("reward_potential_grad: dt must be positive");
    return (bp_now - bp_prev) / dt;
}

/// Penalty on commanded wheel effort; always <= 0.
inline double reward_energy(const WheelCommand& cmd) { return -(std::abs(cmd.left()) + std::abs(cmd.right())); }

inline RewardBreakdown combine(const RewardComponents& c, const RewardWeights& w) {
    RewardBreakdown out;
    out.r_goal = c.goal;
    out.r_move = c.move;
    out.r_potential_grad = c.potential_grad;
    out.r_energy = c.energy;
    out.total = w.goal * c.goal + w.move * c.move + w.potential * c.potential_grad + w.energy * c.energy;
    return out;
}

}  // namespace vsrl
