#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsrl/geometry.hpp"

namespace vsrl {

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

/// Field geometry in cm. The playing rectangle spans
/// [-play_half_length, play_half_length] x [-half_width, half_width]; a goal
/// pocket of depth pocket_depth opens behind each end wall for |y| < goal_half_width.
struct FieldSpec {
    double play_half_length = 75.0;
    double pocket_depth = 10.0;
    double half_width = 65.0;
    double goal_half_width = 20.0;
    double normalization_length = 170.0;

    double half_length_total() const { return play_half_length + pocket_depth; }
    Vec2 goal_center_own() const { return {-half_length_total(), 0.0}; }
    Vec2 goal_center_adv() const { return {half_length_total(), 0.0}; }

    void validate() const {
        if (!(play_half_length > 0 && pocket_depth > 0 && half_width > 0 && goal_half_width > 0 &&
              normalization_length > 0))
            throw std::invalid_argument("field dimensions must be positive");
        if (!(goal_half_width < half_width))
            throw std::invalid_argument("goal_half_width must be smaller than half_width");
    }
};

struct RobotSpec {
    double body_radius = 5.3;   // collision disc, cm
    double axle_length = 7.5;   // wheel separation L, cm
    double wheel_radius = 2.6;  // cm
    double mass = 150.0;        // g
    double v_max = 150.0;       // wheel surface speed at command 100, cm/s
    double motor_tau = 0.05;    // first-order actuator lag, s

    /// Spin rate with both wheels saturated in opposite directions.
    double omega_max() const { return 2.0 * v_max / axle_length; }

    void validate() const {
        if (!(body_radius > 0 && axle_length > 0 && wheel_radius > 0 && mass > 0 && v_max > 0 &&
              motor_tau > 0))
            throw std::invalid_argument("robot spec values must be strictly positive");
        if (body_radius < axle_length / 2)
            throw std::invalid_argument("body_radius must be at least half the axle length");
    }
};

struct BallSpec {
    double radius = 2.135;         // cm
    double mass = 46.0;            // g
    double friction_decel = 25.0;  // rolling friction, cm/s^2
};

struct PhysicsParams {
    double control_dt = 1.0 / 30.0;
    int substeps = 10;
    double wall_restitution = 0.75;
    double robot_ball_restitution = 0.5;
    bool walls_enabled = true;
};

struct SimSpec {
    FieldSpec field;
    RobotSpec robot;
    BallSpec ball;
    PhysicsParams physics;

    void validate() const {
        field.validate();
        robot.validate();
        if (!(ball.radius > 0 && ball.mass > 0 && ball.friction_decel >= 0))
            throw std::invalid_argument("ball spec values out of range");
        if (!(physics.control_dt > 0 && physics.substeps >= 1))
            throw std::invalid_argument("control_dt and substeps must be positive");
        if (!(physics.wall_restitution >= 0 && physics.wall_restitution <= 1 &&
              physics.robot_ball_restitution >= 0 && physics.robot_ball_restitution <= 1))
            throw std::invalid_argument("restitution must lie in [0, 1]");
    }
};

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

enum class Team : std::uint8_t { blue = 0, yellow = 1 };

inline Team other(Team t) { return t == Team::blue ? Team::yellow : Team::blue; }

struct Pose2D {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    Vec2 position() const { return {x, y}; }
    bool operator==(const Pose2D&) const = default;
};

struct Twist2D {
    double vx = 0.0;
    double vy = 0.0;
    double omega = 0.0;

    Vec2 linear() const { return {vx, vy}; }
    bool operator==(const Twist2D&) const = default;
};

struct RobotState {
    int id = 0;
    Team team = Team::blue;
    Pose2D pose;
    Twist2D twist;
    double wheel_left = 0.0;   // actual surface speed, cm/s
    double wheel_right = 0.0;

    Vec2 heading() const { return unit_from_angle(pose.theta); }
    /// Signed speed along the heading.
    double forward_speed() const { return twist.linear().dot(heading()); }
    bool operator==(const RobotState&) const = default;
};

struct BallState {
    Vec2 position;
    Vec2 velocity;
    double radius = 2.135;
    bool operator==(const BallState&) const = default;
};

/// Goals from the blue team's point of view.
struct Score {
    int own = 0;
    int adversary = 0;
    bool operator==(const Score&) const = default;
};

struct WorldState {
    std::vector<RobotState> robots_blue;
    std::vector<RobotState> robots_yellow;
    BallState ball;
    double elapsed = 0.0;
    Score score;
    std::uint64_t frame = 0;

    std::size_t robot_count() const { return robots_blue.size() + robots_yellow.size(); }

    /// Blue robots first, then yellow, in stored order.
    RobotState& robot(std::size_t i) {
        return i < robots_blue.size() ? robots_blue[i] : robots_yellow[i - robots_blue.size()];
    }
    const RobotState& robot(std::size_t i) const {
        return i < robots_blue.size() ? robots_blue[i] : robots_yellow[i - robots_blue.size()];
    }
    std::vector<RobotState>& team(Team t) { return t == Team::blue ? robots_blue : robots_yellow; }
    const std::vector<RobotState>& team(Team t) const {
        return t == Team::blue ? robots_blue : robots_yellow;
    }

    bool operator==(const WorldState&) const = default;
};

/// Wheel command in [-100, 100] per channel. Non-finite input maps to 0.
class WheelCommand {
public:
    WheelCommand() = default;
    WheelCommand(double left, double right) : left_(clamp_channel(left)), right_(clamp_channel(right)) {}

    double left() const { return left_; }
    double right() const { return right_; }
    bool operator==(const WheelCommand&) const = default;

    static double clamp_channel(double v) {
        if (!std::isfinite(v)) return 0.0;
        return std::clamp(v, -100.0, 100.0);
    }

private:
    double left_ = 0.0;
    double right_ = 0.0;
};

// ---------------------------------------------------------------------------
// Kinematics and actuators
// ---------------------------------------------------------------------------

namespace detail {
inline double sinc(double x) {
    if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}
}  // namespace detail

/// Exact arc integration of a differential-drive body with constant wheel
/// speeds over dt.
inline Pose2D diff_drive_update(const Pose2D& pose, double v_left, double v_right, double axle_length,
                                double dt) {
    const double v = 0.5 * (v_right + v_left);
    const double omega = (v_right - v_left) / axle_length;
    Pose2D out = pose;
    if (std::abs(omega) < 1e-9) {
        out.x += v * dt * std::cos(pose.theta);
        out.y += v * dt * std::sin(pose.theta);
        return out;
    }
    // chord of length v*dt*sinc(w*dt/2) along the mid-arc heading
    const double half = 0.5 * omega * dt;
    const double chord = v * dt * detail::sinc(half);
    out.x += chord * std::cos(pose.theta + half);
    out.y += chord * std::sin(pose.theta + half);
    out.theta = normalize_angle(pose.theta + omega * dt);
    return out;
}

/// First-order lag of the actual wheel surface speed toward v_max * command / 100.
inline double motor_step(double actual, double command, const RobotSpec& spec, double dt) {
    const double target = spec.v_max * WheelCommand::clamp_channel(command) / 100.0;
    const double alpha = 1.0 - std::exp(-dt / spec.motor_tau);
    const double next = actual + (target - actual) * alpha;
    return std::clamp(next, -spec.v_max, spec.v_max);
}

/// Linear (vx, vy, omega) implied by wheel speeds at a given heading.
inline Twist2D twist_from_wheels(double theta, double v_left, double v_right, double axle_length) {
    const double v = 0.5 * (v_left + v_right);
    return {v * std::cos(theta), v * std::sin(theta), (v_right - v_left) / axle_length};
}

// ---------------------------------------------------------------------------
// Collisions
// ---------------------------------------------------------------------------

struct Segment {
    Vec2 a;
    Vec2 b;
};

/// Arena boundary: side walls, end walls split by the goal mouths, and the
/// three walls of each goal pocket.
inline std::vector<Segment> arena_walls(const FieldSpec& f) {
    const double X = f.play_half_length;
    const double P = f.half_length_total();
    const double W = f.half_width;
    const double G = f.goal_half_width;
    std::vector<Segment> walls = {
        {{-X, W}, {X, W}},     {{-X, -W}, {X, -W}},    // sides
        {{X, G}, {X, W}},      {{X, -W}, {X, -G}},     // adversary end wall
        {{-X, G}, {-X, W}},    {{-X, -W}, {-X, -G}},   // own end wall
        {{P, -G}, {P, G}},     {{X, G}, {P, G}},     {{X, -G}, {P, -G}},     // adversary pocket
        {{-P, -G}, {-P, G}},   {{-P, G}, {-X, G}},   {{-P, -G}, {-X, -G}},   // own pocket
    };
    return walls;
}

inline Vec2 closest_point_on_segment(Vec2 p, const Segment& s) {
    const Vec2 ab = s.b - s.a;
    const double len2 = ab.squared_norm();
    if (len2 == 0.0) return s.a;
    const double t = std::clamp((p - s.a).dot(ab) / len2, 0.0, 1.0);
    return s.a + ab * t;
}

/// True when p lies in the playing rectangle or one of the goal pockets.
inline bool inside_arena(Vec2 p, const FieldSpec& f) {
    if (std::abs(p.y) <= f.half_width && std::abs(p.x) <= f.play_half_length) return true;
    return std::abs(p.y) <= f.goal_half_width && std::abs(p.x) <= f.half_length_total();
}

/// Minimum distance from p to any arena wall.
inline double wall_clearance(Vec2 p, const FieldSpec& f) {
    double best = INFINITY;
    for (const auto& s : arena_walls(f)) best = std::min(best, distance(p, closest_point_on_segment(p, s)));
    return best;
}

struct ImpulseResult {
    Vec2 velocity_a;
    Vec2 velocity_b;
};

/// Frictionless impulse between two discs along the unit normal n (pointing
/// from a to b). Momentum is conserved; the approach speed along n is scaled
/// by -restitution. Separating pairs are returned unchanged.
inline ImpulseResult disc_impulse(Vec2 va, double ma, Vec2 vb, double mb, Vec2 n, double restitution) {
    const double approach = (vb - va).dot(n);
    if (approach >= 0.0) return {va, vb};
    const double j = -(1.0 + restitution) * approach / (1.0 / ma + 1.0 / mb);
    return {va - n * (j / ma), vb + n * (j / mb)};
}

namespace detail {

struct Body {
    Vec2* position;
    Vec2 velocity;  // robots: twist linear part
    double radius;
    double mass;
    RobotState* robot;  // null for the ball
    bool pinned = false;
};

inline Vec2 as_vec(const Pose2D& p) { return {p.x, p.y}; }

/// Applies a change of linear velocity to a robot through its wheels: only
/// the component along the heading survives the no-slip constraint.
inline void nudge_wheels(RobotState& r, Vec2 dv, double v_max) {
    const double along = dv.dot(r.heading());
    r.wheel_left = std::clamp(r.wheel_left + along, -v_max, v_max);
    r.wheel_right = std::clamp(r.wheel_right + along, -v_max, v_max);
}

}  // namespace detail

/// Separates overlapping bodies and applies contact impulses. Robots are
/// velocity-servoed: contacts remove their approach velocity (and the
/// corresponding forward wheel speed) but never bounce them. The ball bounces
/// off walls and robots with the configured restitution.
inline void resolve_collisions(WorldState& world, const SimSpec& spec) {
    const std::size_t n_robots = world.robot_count();
    std::vector<Vec2> positions(n_robots + 1);
    std::vector<detail::Body> bodies;
    bodies.reserve(n_robots + 1);
    for (std::size_t i = 0; i < n_robots; ++i) {
        RobotState& r = world.robot(i);
        positions[i] = detail::as_vec(r.pose);
        bodies.push_back({&positions[i], r.twist.linear(), spec.robot.body_radius, spec.robot.mass, &r});
    }
    positions[n_robots] = world.ball.position;
    bodies.push_back({&positions[n_robots], world.ball.velocity, world.ball.radius, spec.ball.mass, nullptr});

    const auto walls = arena_walls(spec.field);
    constexpr int kMaxIterations = 32;
    constexpr double kTolerance = 1e-10;

    for (int iter = 0; iter < kMaxIterations; ++iter) {
        double worst = 0.0;

        for (std::size_t i = 0; i < bodies.size(); ++i) {
            for (std::size_t j = i + 1; j < bodies.size(); ++j) {
                auto& a = bodies[i];
                auto& b = bodies[j];
                const Vec2 d = *b.position - *a.position;
                const double dist = d.norm();
                const double overlap = a.radius + b.radius - dist;
                if (overlap <= 0.0) continue;
                worst = std::max(worst, overlap);
                const Vec2 n = dist > 0.0 ? d / dist : Vec2{1.0, 0.0};

                double wa = a.pinned ? 0.0 : 1.0 / a.mass;
                double wb = b.pinned ? 0.0 : 1.0 / b.mass;
                if (wa + wb == 0.0) {
                    wa = 1.0 / a.mass;
                    wb = 1.0 / b.mass;
                }
                *a.position -= n * (overlap * wa / (wa + wb));
                *b.position += n * (overlap * wb / (wa + wb));

                const bool has_ball = (a.robot == nullptr) || (b.robot == nullptr);
                if (has_ball) {
                    const auto out = disc_impulse(a.velocity, a.mass, b.velocity, b.mass, n,
                                                  spec.physics.robot_ball_restitution);
                    for (auto* body : {&a, &b}) {
                        const Vec2 nv = (body == &a) ? out.velocity_a : out.velocity_b;
                        if (body->robot) detail::nudge_wheels(*body->robot, nv - body->velocity, spec.robot.v_max);
                        body->velocity = nv;
                    }
                } else {
                    // robot-robot: each loses its approach component
                    const double va = a.velocity.dot(n);
                    if (va > 0.0) {
                        detail::nudge_wheels(*a.robot, n * -va, spec.robot.v_max);
                        a.velocity -= n * va;
                    }
                    const double vb = b.velocity.dot(n);
                    if (vb < 0.0) {
                        detail::nudge_wheels(*b.robot, n * -vb, spec.robot.v_max);
                        b.velocity -= n * vb;
                    }
                }
            }
        }

        if (spec.physics.walls_enabled) {
            for (auto& body : bodies) {
                for (const auto& w : walls) {
                    const Vec2 c = closest_point_on_segment(*body.position, w);
                    const Vec2 d = *body.position - c;
                    const double dist = d.norm();
                    const double overlap = body.radius - dist;
                    if (overlap <= 0.0) continue;
                    worst = std::max(worst, overlap);
                    Vec2 n;
                    if (dist > 0.0) {
                        n = d / dist;
                    } else {
                        const Vec2 ab = w.b - w.a;
                        n = Vec2{-ab.y, ab.x} / ab.norm();
                        if (!inside_arena(*body.position + n * 1e-6, spec.field)) n = -n;
                    }
                    *body.position += n * overlap;
                    body.pinned = true;
                    const double vn = body.velocity.dot(n);
                    if (vn < 0.0) {
                        if (body.robot) {
                            detail::nudge_wheels(*body.robot, n * -vn, spec.robot.v_max);
                            body.velocity -= n * vn;
                        } else {
                            body.velocity -= n * ((1.0 + spec.physics.wall_restitution) * vn);
                        }
                    }
                }
            }
        }

        if (worst <= kTolerance) break;
    }

    for (std::size_t i = 0; i < n_robots; ++i) {
        RobotState& r = *bodies[i].robot;
        r.pose.x = positions[i].x;
        r.pose.y = positions[i].y;
        r.twist.vx = bodies[i].velocity.x;
        r.twist.vy = bodies[i].velocity.y;
    }
    world.ball.position = positions[n_robots];
    world.ball.velocity = bodies[n_robots].velocity;
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

/// Rolling-friction integration of a free ball over dt.
inline void integrate_ball(BallState& ball, double friction_decel, double dt) {
    const double speed = ball.velocity.norm();
    if (speed > 0.0) {
        const double next = std::max(0.0, speed - friction_decel * dt);
        ball.velocity = ball.velocity * (next / speed);
    }
    ball.position += ball.velocity * dt;
}

/// Advances the world by one control period dt (split into the configured
/// number of physics substeps). Commands are ordered blue robots first, then
/// yellow, matching WorldState::robot(i).
inline WorldState step_world(const WorldState& world, std::span<const WheelCommand> commands, const SimSpec& spec,
                             double dt) {
    if (commands.size() != world.robot_count())
        throw std::invalid_argument("step_world: expected " + std::to_string(world.robot_count()) +
                                    " commands, got " + std::to_string(commands.size()));
    if (!(dt > 0.0)) throw std::invalid_argument("step_world: dt must be positive");

    WorldState next = world;
    const int n_sub = spec.physics.substeps;
    const double h = dt / n_sub;
    for (int s = 0; s < n_sub; ++s) {
        for (std::size_t i = 0; i < next.robot_count(); ++i) {
            RobotState& r = next.robot(i);
            r.wheel_left = motor_step(r.wheel_left, commands[i].left(), spec.robot, h);
            r.wheel_right = motor_step(r.wheel_right, commands[i].right(), spec.robot, h);
            r.pose = diff_drive_update(r.pose, r.wheel_left, r.wheel_right, spec.robot.axle_length, h);
            r.twist = twist_from_wheels(r.pose.theta, r.wheel_left, r.wheel_right, spec.robot.axle_length);
        }
        integrate_ball(next.ball, spec.ball.friction_decel, h);
        resolve_collisions(next, spec);
    }
    next.frame = world.frame + 1;
    next.elapsed = static_cast<double>(next.frame) * dt;
    return next;
}

inline WorldState step_world(const WorldState& world, std::span<const WheelCommand> commands, const SimSpec& spec) {
    return step_world(world, commands, spec, spec.physics.control_dt);
}

/// Translational kinetic energy of every body (g cm^2 / s^2).
inline double kinetic_energy(const WorldState& w, const SimSpec& spec) {
    double e = 0.5 * spec.ball.mass * w.ball.velocity.squared_norm();
    for (std::size_t i = 0; i < w.robot_count(); ++i) e += 0.5 * spec.robot.mass * w.robot(i).twist.linear().squared_norm();
    return e;
}

}  // namespace vsrl
