#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vsrl/action.hpp"
#include "vsrl/geometry.hpp"
#include "vsrl/physics.hpp"
#include "vsrl/reward.hpp"

namespace vsrl {

enum class ResetMode { kickoff, uniform_random };

struct EpisodeConfig {
    double max_duration = 300.0;  // s
    double control_dt = 1.0 / 30.0;
    int n_per_team = 1;
    bool with_opponents = true;
    bool end_on_goal = false;
    ResetMode reset_mode = ResetMode::kickoff;
    std::uint64_t seed = 0;
    bool normalize_observations = true;
    /// Clearance kept between random ball placements and the walls, beyond
    /// the ball radius.
    double ball_wall_margin = 2.0;
    RewardWeights weights;

    int blue_count() const { return n_per_team; }
    int yellow_count() const { return with_opponents ? n_per_team : 0; }
    std::uint64_t max_frames() const {
        return static_cast<std::uint64_t>(std::llround(max_duration / control_dt));
    }

    void validate() const {
        if (!(max_duration > 0.0)) throw std::invalid_argument("max_duration must be positive");
        if (!(control_dt > 0.0)) throw std::invalid_argument("control_dt must be positive");
        if (n_per_team < 1 || n_per_team > 3) throw std::invalid_argument("n_per_team must be 1, 2 or 3");
    }
};

using Observation = std::vector<double>;

inline std::size_t observation_size(std::size_t robots) { return 4 + 7 * robots + 1; }

/// Per-agent action: raw wheel command, body velocities, or a virtual-target step.
using AgentAction = std::variant<WheelCommand, HighLevelAction, DiscreteAction>;

struct StepInfo {
    std::optional<Team> goal;
    Score score;
    WorldState world;  // snapshot after the step, before any kickoff re-placement
};

struct StepResult {
    Observation observation;
    std::vector<RewardBreakdown> rewards;  // one per controlled (blue) agent
    bool done = false;
    StepInfo info;
};

// ---------------------------------------------------------------------------
// Observation
// ---------------------------------------------------------------------------

struct ObservationScales {
    double x = 1.0;
    double y = 1.0;
    double speed = 1.0;
    double omega = 1.0;

    static ObservationScales make(const SimSpec& spec, bool normalized) {
        if (!normalized) return {};
        return {spec.field.half_length_total(), spec.field.half_width, spec.robot.v_max, spec.robot.omega_max()};
    }
};

inline double episode_timestamp(double elapsed, double max_duration) {
    double ts = elapsed / max_duration;
    if (std::abs(ts - 1.0) < 1e-9) ts = 1.0;
    return std::clamp(ts, 0.0, 1.0);
}

/// [ball x, y, vx, vy] ++ per robot [x, y, sin, cos, vx, vy, omega] ++ [timestamp].
inline Observation build_observation(const WorldState& w, const SimSpec& spec, const EpisodeConfig& cfg) {
    const auto s = ObservationScales::make(spec, cfg.normalize_observations);
    Observation obs;
    obs.reserve(observation_size(w.robot_count()));
    obs.push_back(w.ball.position.x / s.x);
    obs.push_back(w.ball.position.y / s.y);
    obs.push_back(w.ball.velocity.x / s.speed);
    obs.push_back(w.ball.velocity.y / s.speed);
    for (std::size_t i = 0; i < w.robot_count(); ++i) {
        const auto& r = w.robot(i);
        obs.push_back(r.pose.x / s.x);
        obs.push_back(r.pose.y / s.y);
        obs.push_back(std::sin(r.pose.theta));
        obs.push_back(std::cos(r.pose.theta));
        obs.push_back(r.twist.vx / s.speed);
        obs.push_back(r.twist.vy / s.speed);
        obs.push_back(r.twist.omega / s.omega);
    }
    obs.push_back(episode_timestamp(w.elapsed, cfg.max_duration));
    return obs;
}

/// Raw quantities recovered from an observation vector.
struct DecodedObservation {
    BallState ball;
    std::vector<Pose2D> poses;
    std::vector<Twist2D> twists;
    double elapsed = 0.0;
};

inline DecodedObservation decode_observation(std::span<const double> obs, const SimSpec& spec,
                                             const EpisodeConfig& cfg) {
    if (obs.size() < 5 || (obs.size() - 5) % 7 != 0)
        throw std::invalid_argument("observation length does not match the layout");
    const auto s = ObservationScales::make(spec, cfg.normalize_observations);
    DecodedObservation d;
    d.ball.position = {obs[0] * s.x, obs[1] * s.y};
    d.ball.velocity = {obs[2] * s.speed, obs[3] * s.speed};
    d.ball.radius = spec.ball.radius;
    const std::size_t n = (obs.size() - 5) / 7;
    for (std::size_t i = 0; i < n; ++i) {
        const double* o = obs.data() + 4 + 7 * i;
        d.poses.push_back({o[0] * s.x, o[1] * s.y, std::atan2(o[2], o[3])});
        d.twists.push_back({o[4] * s.speed, o[5] * s.speed, o[6] * s.omega});
    }
    d.elapsed = obs.back() * cfg.max_duration;
    return d;
}

// ---------------------------------------------------------------------------
// Goals and resets
// ---------------------------------------------------------------------------

/// Team credited with a goal when the ball centre is past an end line inside
/// the mouth. Blue attacks +x.
inline std::optional<Team> check_goal(const WorldState& w, const FieldSpec& f) {
    const Vec2 b = w.ball.position;
    if (std::abs(b.y) >= f.goal_half_width) return std::nullopt;
    if (b.x > f.play_half_length) return Team::blue;
    if (b.x < -f.play_half_length) return Team::yellow;
    return std::nullopt;
}

inline RobotState make_robot(int id, Team team, Pose2D pose) {
    RobotState r;
    r.id = id;
    r.team = team;
    r.pose = pose;
    return r;
}

/// Ball at the centre spot; blue on the left facing +x, yellow mirrored
/// through the origin.
inline WorldState kickoff_world(int n_blue, int n_yellow, const SimSpec& spec) {
    static constexpr std::array<Vec2, 3> kSlots = {Vec2{-20.0, 0.0}, Vec2{-40.0, 30.0}, Vec2{-65.0, 0.0}};
    WorldState w;
    w.ball.radius = spec.ball.radius;
    for (int i = 0; i < n_blue; ++i) w.robots_blue.push_back(make_robot(i, Team::blue, {kSlots[i].x, kSlots[i].y, 0.0}));
    for (int i = 0; i < n_yellow; ++i)
        w.robots_yellow.push_back(make_robot(i, Team::yellow, {-kSlots[i].x, -kSlots[i].y, kPi}));
    return w;
}

/// Puts every body back in kickoff formation, keeping clock and score.
inline void place_kickoff(WorldState& w, const SimSpec& spec) {
    WorldState k = kickoff_world(static_cast<int>(w.robots_blue.size()), static_cast<int>(w.robots_yellow.size()), spec);
    k.elapsed = w.elapsed;
    k.frame = w.frame;
    k.score = w.score;
    w = std::move(k);
}

/// Independent uniform placement with rejection of overlapping bodies.
inline WorldState random_world(int n_blue, int n_yellow, const SimSpec& spec, Rng& rng, double ball_wall_margin = 2.0) {
    constexpr int kMaxAttempts = 1000;
    constexpr double kGap = 0.5;
    const auto& f = spec.field;
    const double rr = spec.robot.body_radius;
    const double br = spec.ball.radius;

    WorldState w;
    w.ball.radius = br;
    const double bx = f.play_half_length - br - ball_wall_margin;
    const double by = f.half_width - br - ball_wall_margin;
    w.ball.position = {rng.uniform(-bx, bx), rng.uniform(-by, by)};

    std::vector<Vec2> placed;
    auto place = [&](int id, Team team) {
        const double rx = f.play_half_length - rr - kGap;
        const double ry = f.half_width - rr - kGap;
        for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
            const Vec2 p{rng.uniform(-rx, rx), rng.uniform(-ry, ry)};
            const double theta = rng.uniform(-kPi, kPi);
            bool ok = distance(p, w.ball.position) >= rr + br + kGap;
            for (const auto& q : placed) ok = ok && distance(p, q) >= 2.0 * rr + kGap;
            if (!ok) continue;
            placed.push_back(p);
            w.team(team).push_back(make_robot(id, team, {p.x, p.y, normalize_angle(theta)}));
            return;
        }
        throw std::runtime_error("random_world: could not place robot without overlap after 1000 samples");
    };
    for (int i = 0; i < n_blue; ++i) place(i, Team::blue);
    for (int i = 0; i < n_yellow; ++i) place(i, Team::yellow);
    return w;
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

/// Policy for robots the caller does not control.
using OpponentPolicy = std::function<WheelCommand(const WorldState&, const RobotState&)>;

inline OpponentPolicy stationary_policy() {
    return [](const WorldState&, const RobotState&) { return WheelCommand{}; };
}

class SoccerEnv {
public:
    explicit SoccerEnv(SimSpec spec = {}, EpisodeConfig cfg = {})
        : spec_(std::move(spec)), cfg_(std::move(cfg)), actions_(ActionConfig::from(spec_)) {
        spec_.validate();
        cfg_.validate();
        spec_.physics.control_dt = cfg_.control_dt;
    }

    Observation reset() { return reset(cfg_); }

    Observation reset(const EpisodeConfig& cfg) {
        cfg.validate();
        cfg_ = cfg;
        spec_.physics.control_dt = cfg_.control_dt;
        rng_ = Rng(cfg_.seed);
        if (cfg_.reset_mode == ResetMode::kickoff) {
            world_ = kickoff_world(cfg_.blue_count(), cfg_.yellow_count(), spec_);
        } else {
            world_ = random_world(cfg_.blue_count(), cfg_.yellow_count(), spec_, rng_, cfg_.ball_wall_margin);
        }
        reset_targets();
        done_ = false;
        return build_observation(world_, spec_, cfg_);
    }

    /// One action per blue robot, ascending id.
    StepResult step(std::span<const AgentAction> actions) {
        if (done_) throw std::logic_error("step called on a finished episode; call reset()");
        if (actions.size() != world_.robots_blue.size())
            throw std::invalid_argument("step: expected " + std::to_string(world_.robots_blue.size()) +
                                        " actions, got " + std::to_string(actions.size()));

        std::vector<WheelCommand> commands;
        commands.reserve(world_.robot_count());
        for (std::size_t i = 0; i < actions.size(); ++i)
            commands.push_back(to_command(actions[i], world_.robots_blue[i], targets_[i]));
        for (const auto& r : world_.robots_yellow) commands.push_back(opponent_(world_, r));

        const WorldState prev = world_;
        world_ = step_world(prev, commands, spec_, cfg_.control_dt);

        StepResult res;
        res.info.goal = check_goal(world_, spec_.field);
        if (res.info.goal) {
            if (*res.info.goal == Team::blue) ++world_.score.own;
            else ++world_.score.adversary;
        }
        res.info.score = world_.score;
        res.info.world = world_;

        const double bp_prev = ball_potential(prev.ball.position, spec_.field, Team::blue);
        const double bp_now = ball_potential(world_.ball.position, spec_.field, Team::blue);
        const double goal_reward = !res.info.goal ? 0.0 : (*res.info.goal == Team::blue ? 1.0 : -1.0);
        for (std::size_t i = 0; i < world_.robots_blue.size(); ++i) {
            RewardComponents c;
            c.goal = goal_reward;
            c.move = reward_move(world_.robots_blue[i].pose.position(), world_.ball.position,
                                 prev.robots_blue[i].pose.position(), prev.ball.position, cfg_.control_dt);
            c.potential_grad = reward_potential_grad(bp_now, bp_prev, cfg_.control_dt);
            c.energy = reward_energy(commands[i]);
            res.rewards.push_back(combine(c, cfg_.weights));
        }

        const bool timeout = world_.frame >= cfg_.max_frames();
        done_ = timeout || (res.info.goal && cfg_.end_on_goal);
        if (res.info.goal && !done_) {
            place_kickoff(world_, spec_);
            reset_targets();
        }
        res.done = done_;
        res.observation = build_observation(world_, spec_, cfg_);
        return res;
    }

    StepResult step(const std::vector<AgentAction>& actions) { return step(std::span<const AgentAction>(actions)); }

    /// Replaces the simulation state (scripted scenarios, tests).
    void set_world(WorldState w) {
        world_ = std::move(w);
        reset_targets();
        done_ = false;
    }

    void set_opponent_policy(OpponentPolicy p) { opponent_ = std::move(p); }
    void set_action_config(const ActionConfig& c) { actions_ = c; }

    const WorldState& world() const { return world_; }
    const SimSpec& spec() const { return spec_; }
    const EpisodeConfig& config() const { return cfg_; }
    const ActionConfig& action_config() const { return actions_; }
    const std::vector<VirtualTarget>& targets() const { return targets_; }
    bool done() const { return done_; }
    Rng& rng() { return rng_; }

private:
    WheelCommand to_command(const AgentAction& a, const RobotState& r, VirtualTarget& target) const {
        return std::visit(
            [&](const auto& act) -> WheelCommand {
                using T = std::decay_t<decltype(act)>;
                if constexpr (std::is_same_v<T, WheelCommand>) {
                    return act;
                } else if constexpr (std::is_same_v<T, HighLevelAction>) {
                    return continuous_to_wheels(clamp_action(act, actions_.v_max, actions_.omega_max),
                                                spec_.robot.axle_length, spec_.robot.v_max);
                } else {
                    if (!discrete_action_from_index(static_cast<int>(act)))
                        throw std::invalid_argument("step: discrete action index out of range");
                    return discrete_step_pipeline(r.pose, target, act, actions_, spec_.robot.axle_length);
                }
            },
            a);
    }

    void reset_targets() {
        targets_.clear();
        for (const auto& r : world_.robots_blue) targets_.push_back({0.0, r.pose.theta});
    }

    SimSpec spec_;
    EpisodeConfig cfg_;
    ActionConfig actions_;
    WorldState world_;
    std::vector<VirtualTarget> targets_;
    OpponentPolicy opponent_ = stationary_policy();
    Rng rng_;
    bool done_ = true;
};

}  // namespace vsrl
