#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "vsrl/action.hpp"
#include "vsrl/env.hpp"
#include "vsrl/geometry.hpp"
#include "vsrl/physics.hpp"

namespace vsrl {

/// Scripted striker: get behind the ball on the ball-goal line, then push
/// through it. Attacks +x for blue and -x for yellow. When walls leave no room
/// behind the ball, it picks the reachable push direction whose (possibly
/// wall-reflected) outcome lands nearest the goal. Mode switches use
/// hysteresis, so the policy is stateful; call reset() between episodes.
class BallToGoalPolicy {
public:
    explicit BallToGoalPolicy(const SimSpec& spec, Team team = Team::blue)
        : BallToGoalPolicy(spec, ActionConfig::from(spec), team) {}
    BallToGoalPolicy(const SimSpec& spec, const ActionConfig& cfg, Team team = Team::blue)
        : spec_(spec), cfg_(cfg), team_(team) {}

    HighLevelAction operator()(const WorldState& w, const RobotState& self) {
        return act(self.pose, w.ball.position, w.ball.velocity);
    }

    HighLevelAction act(const Pose2D& pose, Vec2 ball, Vec2 ball_velocity) {
        const auto& f = spec_.field;
        const double sign = team_ == Team::blue ? 1.0 : -1.0;
        const Vec2 robot = pose.position();
        const Vec2 b = ball + ball_velocity * kLead;

        const Vec2 goal{sign * f.half_length_total(), 0.0};
        Vec2 u = goal - b;
        u = u / std::max(u.norm(), 1e-9);

        const double contact = spec_.robot.body_radius + spec_.ball.radius;
        const auto [dir, standoff] = feasible_direction(b, u, goal);
        u = dir;
        const Vec2 n{-u.y, u.x};
        const Vec2 rel = robot - b;
        const double along = rel.dot(u);
        const double lateral = rel.dot(n);

        behind_ = along < -contact * (behind_ ? 0.2 : 0.5);
        if (behind_) {
            // behind the ball: aim at a point on the ball-goal line that slides
            // forward as the lateral offset shrinks
            const double ahead = kPushThrough - kSlide * std::abs(lateral);
            if (ahead > 0.0) return track(pose, b + u * ahead - n * (kSteer * lateral));
            return track(pose, clamp_to_field(b + u * std::max(ahead, -standoff)));
        }
        // beside or in front: pass the ball on the near side
        const double clearance = contact + kStandoff;
        if (std::abs(lateral) > kSideBand) side_ = lateral >= 0.0 ? 1.0 : -1.0;
        double side = side_;
        Vec2 wp = clamp_to_field(b + n * (side * clearance * 1.5) - u * clearance);
        if (distance(wp, b) < clearance) {
            side = -side;
            wp = clamp_to_field(b + n * (side * clearance * 1.5) - u * clearance);
        }
        const double gap = distance(closest_point_on_segment(b, Segment{robot, wp}), b);
        stepping_ = gap < contact + kClear + (stepping_ ? kClear : 0.0);
        if (stepping_) {
            // the direct path would clip the ball: step sideways first
            wp = clamp_to_field(b + n * (side * clearance * 1.5) + u * std::max(along, 0.0));
        }
        return track(pose, wp);
    }

    void reset() {
        side_ = 1.0;
        behind_ = false;
        stepping_ = false;
    }

    /// Point tracked by the most recent call.
    Vec2 target() const { return target_; }

    static constexpr double kLead = 0.1;          // s
    static constexpr double kStandoff = 6.0;      // cm behind contact
    static constexpr double kSlide = 3.0;         // cm of retreat per cm of lateral offset
    static constexpr double kSideBand = 2.0;      // cm
    static constexpr double kPushThrough = 20.0;  // cm
    static constexpr double kClear = 2.0;         // cm
    static constexpr double kSteer = 1.0;
    static constexpr double kProbe = 25.0;        // cm
    static constexpr double kWallBand = 8.0;      // cm
    static constexpr double kWallPenalty = 3.0;

private:
    HighLevelAction track(const Pose2D& pose, Vec2 p) {
        target_ = p;
        return goto_controller(pose, p, cfg_);
    }

    struct Approach {
        Vec2 u;
        double standoff = 0.0;
    };

    // Largest standoff behind the ball along u that the robot can occupy, or
    // zero when even a near-contact position is off the field.
    double standoff_along(Vec2 b, Vec2 u) const {
        const double contact = spec_.robot.body_radius + spec_.ball.radius;
        for (double s = contact + kStandoff; s >= contact + 1.0; s -= 0.5) {
            const Vec2 p = b - u * s;
            if (distance(clamp_to_field(p), p) < 1e-9) return s;
        }
        return 0.0;
    }

    // Where a ball pushed along r ends up after kProbe cm of travel,
    // reflecting off the walls with the configured restitution.
    Vec2 probe(Vec2 b, Vec2 r) const {
        const auto& f = spec_.field;
        const double e = spec_.physics.wall_restitution;
        const double x_lim = f.play_half_length - spec_.ball.radius;
        const double y_lim = f.half_width - spec_.ball.radius;
        Vec2 p = b;
        Vec2 v = r;
        for (int i = 0; i < static_cast<int>(kProbe); ++i) {
            p += v;
            if (std::abs(p.y) > y_lim) {
                p.y = std::copysign(y_lim, p.y);
                v.y *= -e;
            }
            if (std::abs(p.x) > x_lim && std::abs(p.y) > f.goal_half_width - spec_.ball.radius) {
                p.x = std::copysign(x_lim, p.x);
                v.x *= -e;
            }
        }
        return p;
    }

    // Lower is better: distance to the goal plus a penalty for resting
    // against a wall, where the ball can no longer be pushed toward goal.
    double cost(Vec2 p, Vec2 goal) const {
        const auto& f = spec_.field;
        const double wall_gap = std::min(f.half_width - spec_.ball.radius - std::abs(p.y),
                                         std::abs(p.y) < f.goal_half_width ? kProbe
                                                                             : f.play_half_length - spec_.ball.radius - std::abs(p.x));
        return distance(p, goal) + kWallPenalty * std::max(0.0, kWallBand - wall_gap);
    }

    // Push direction: straight at the goal when possible, otherwise the
    // usable direction whose probed outcome costs least.
    Approach feasible_direction(Vec2 b, Vec2 u, Vec2 goal) const {
        if (const double s = standoff_along(b, u); s > 0.0) return {u, s};
        Approach best{u, spec_.robot.body_radius + spec_.ball.radius + kStandoff};
        double best_cost = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 72; ++k) {
            const double a = k * kPi / 36.0;
            const Vec2 r{std::cos(a), std::sin(a)};
            const double s = standoff_along(b, r);
            if (s <= 0.0) continue;
            const double c = cost(probe(b, r), goal);
            if (c < best_cost) {
                best_cost = c;
                best = {r, s};
            }
        }
        return best;
    }

    Vec2 clamp_to_field(Vec2 p) const {
        const double m = spec_.robot.body_radius + 0.5;
        return {std::clamp(p.x, -spec_.field.play_half_length + m, spec_.field.play_half_length - m),
                std::clamp(p.y, -spec_.field.half_width + m, spec_.field.half_width - m)};
    }

    SimSpec spec_;
    ActionConfig cfg_;
    Team team_;
    double side_ = 1.0;
    bool behind_ = false;
    bool stepping_ = false;
    Vec2 target_;
};

/// Drives straight at the ball.
class ChasePolicy {
public:
    explicit ChasePolicy(const SimSpec& spec) : cfg_(ActionConfig::from(spec)) {}
    explicit ChasePolicy(const ActionConfig& cfg) : cfg_(cfg) {}

    HighLevelAction operator()(const WorldState& w, const RobotState& self) const {
        const Vec2 to_ball = w.ball.position - self.pose.position();
        const double d = std::max(to_ball.norm(), 1e-9);
        return goto_controller(self.pose, w.ball.position + to_ball * (10.0 / d), cfg_);
    }

private:
    ActionConfig cfg_;
};

/// Piecewise-constant random wheel commands, re-drawn every `hold` calls.
class RandomPolicy {
public:
    explicit RandomPolicy(std::uint64_t seed, int hold = 5) : rng_(seed), hold_(hold) {}

    WheelCommand next() {
        if (count_++ % hold_ == 0) current_ = {rng_.uniform(-100.0, 100.0), rng_.uniform(-100.0, 100.0)};
        return current_;
    }

private:
    Rng rng_;
    int hold_;
    int count_ = 0;
    WheelCommand current_;
};

enum class AgentKind { still, random, chase, goto_ball_goal };

inline std::optional<AgentKind> parse_agent_kind(const std::string& s) {
    if (s == "still") return AgentKind::still;
    if (s == "random") return AgentKind::random;
    if (s == "chase") return AgentKind::chase;
    if (s == "goto-ball-goal") return AgentKind::goto_ball_goal;
    return std::nullopt;
}

/// Uniform wrapper used by the rollout driver: one instance per blue robot.
class ScriptedAgent {
public:
    ScriptedAgent(AgentKind kind, const SimSpec& spec, std::uint64_t seed)
        : ScriptedAgent(kind, spec, ActionConfig::from(spec), seed) {}
    ScriptedAgent(AgentKind kind, const SimSpec& spec, const ActionConfig& cfg, std::uint64_t seed)
        : kind_(kind), striker_(spec, cfg), chase_(cfg), random_(seed) {}

    void reset() { striker_.reset(); }

    AgentAction act(const WorldState& w, const RobotState& self) {
        switch (kind_) {
            case AgentKind::still: return WheelCommand{};
            case AgentKind::random: return random_.next();
            case AgentKind::chase: return chase_(w, self);
            case AgentKind::goto_ball_goal: return striker_(w, self);
        }
        return WheelCommand{};
    }

private:
    AgentKind kind_;
    BallToGoalPolicy striker_;
    ChasePolicy chase_;
    RandomPolicy random_;
};

}  // namespace vsrl
