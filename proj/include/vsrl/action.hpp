#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "vsrl/geometry.hpp"
#include "vsrl/physics.hpp"

namespace vsrl {

/// Desired body motion: linear speed (cm/s) and turn rate (rad/s).
struct HighLevelAction {
    double v = 0.0;
    double omega = 0.0;
    bool operator==(const HighLevelAction&) const = default;
};

enum class DiscreteAction : std::uint8_t {
    keep = 1,     // a1
    rotate_cw,    // a2, -15 deg
    rotate_ccw,   // a3, +15 deg
    extend,       // a4, +12 cm
    retract,      // a5, -12 cm
};

inline constexpr int kDiscreteActionCount = 5;

inline std::optional<DiscreteAction> discrete_action_from_index(int index) {
    if (index < 1 || index > kDiscreteActionCount) return std::nullopt;
    return static_cast<DiscreteAction>(index);
}

/// Goal point in polar coordinates about the agent; the bearing is expressed
/// in the field frame.
struct VirtualTarget {
    double r = 0.0;
    double phi = 0.0;
    bool operator==(const VirtualTarget&) const = default;
};

struct ControllerGains {
    double k_theta = 5.0;  // 1/s
    double k_v = 3.0;      // 1/s
    double d_sat = 30.0;   // cm
};

struct ActionConfig {
    ControllerGains gains;
    double rotate_step = kPi / 12.0;  // 15 deg
    double radial_step = 12.0;        // cm
    double r_max = 0.0;               // 0 selects the field diagonal
    double v_max = 150.0;             // envelope, cm/s
    double omega_max = 40.0;          // envelope, rad/s

    static ActionConfig from(const SimSpec& spec) {
        ActionConfig c;
        c.v_max = spec.robot.v_max;
        c.omega_max = spec.robot.omega_max();
        c.r_max = 2.0 * std::hypot(spec.field.half_length_total(), spec.field.half_width);
        return c;
    }
};

/// Wheel speeds in cm/s.
struct WheelSpeeds {
    double left = 0.0;
    double right = 0.0;
};

/// Differential-drive inverse kinematics, unclamped.
inline WheelSpeeds wheels_from_body(const HighLevelAction& a, double axle_length) {
    return {a.v - a.omega * axle_length / 2.0, a.v + a.omega * axle_length / 2.0};
}

/// Converts wheel speeds to command units (100 == v_max). When either
/// channel overflows, both are scaled down by the same factor so the sign of
/// the turn and the left/right ratio survive.
inline WheelCommand wheels_to_command(WheelSpeeds w, double v_max) {
    double l = w.left * 100.0 / v_max;
    double r = w.right * 100.0 / v_max;
    if (!std::isfinite(l) || !std::isfinite(r)) return {};
    const double peak = std::max(std::abs(l), std::abs(r));
    if (peak > 100.0) {
        l *= 100.0 / peak;
        r *= 100.0 / peak;
    }
    return {l, r};
}

inline HighLevelAction clamp_action(HighLevelAction a, double v_max, double omega_max) {
    if (!std::isfinite(a.v)) a.v = 0.0;
    if (!std::isfinite(a.omega)) a.omega = 0.0;
    return {std::clamp(a.v, -v_max, v_max), std::clamp(a.omega, -omega_max, omega_max)};
}

inline WheelCommand continuous_to_wheels(const HighLevelAction& action, double axle_length, double v_max) {
    if (!(axle_length > 0.0)) throw std::invalid_argument("continuous_to_wheels: axle length must be positive");
    return wheels_to_command(wheels_from_body(action, axle_length), v_max);
}

inline VirtualTarget apply_discrete(VirtualTarget t, DiscreteAction a, const ActionConfig& cfg) {
    switch (a) {
        case DiscreteAction::keep: break;
        case DiscreteAction::rotate_cw: t.phi = normalize_angle(t.phi - cfg.rotate_step); break;
        case DiscreteAction::rotate_ccw: t.phi = normalize_angle(t.phi + cfg.rotate_step); break;
        case DiscreteAction::extend: t.r = std::clamp(t.r + cfg.radial_step, 0.0, cfg.r_max); break;
        case DiscreteAction::retract: t.r = std::clamp(t.r - cfg.radial_step, 0.0, cfg.r_max); break;
    }
    return t;
}

inline Vec2 target_point(const Pose2D& pose, const VirtualTarget& t) {
    return pose.position() + unit_from_angle(t.phi) * t.r;
}

/// Bidirectional proportional go-to-point law. When the target lies behind
/// the robot it drives in reverse instead of turning around.
inline HighLevelAction goto_controller(const Pose2D& pose, Vec2 target, const ActionConfig& cfg) {
    const Vec2 d = target - pose.position();
    const double dist = d.norm();
    if (dist < 1e-9) return {};
    double err = normalize_angle(std::atan2(d.y, d.x) - pose.theta);
    double direction = 1.0;
    if (std::abs(err) > kPi / 2.0) {
        err = normalize_angle(err - kPi);
        direction = -1.0;
    }
    const auto& g = cfg.gains;
    HighLevelAction a{direction * g.k_v * std::min(dist, g.d_sat) * std::cos(err), g.k_theta * err};
    return clamp_action(a, cfg.v_max, cfg.omega_max);
}

/// One decision of the virtual-target agent: move the target, re-anchor it at
/// the robot, and track it with the fixed controller.
inline WheelCommand discrete_step_pipeline(const Pose2D& pose, VirtualTarget& target, DiscreteAction action,
                                           const ActionConfig& cfg, double axle_length) {
    target = apply_discrete(target, action, cfg);
    const auto hl = goto_controller(pose, target_point(pose, target), cfg);
    return continuous_to_wheels(hl, axle_length, cfg.v_max);
}

}  // namespace vsrl
