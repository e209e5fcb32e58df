#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsrl/action.hpp"
#include "vsrl/env.hpp"
#include "vsrl/netproto.hpp"
#include "vsrl/physics.hpp"
#include "vsrl/reward.hpp"
#include "vsrl/sim2real.hpp"

namespace vsrl {

/// Tunable part of the action layer; speed envelopes follow the robot spec.
struct ActionTuning {
    ControllerGains gains;
    double rotate_step = kPi / 12.0;
    double radial_step = 12.0;
};

/// Everything a run can be configured with.
struct RunConfig {
    SimSpec spec;
    EpisodeConfig episode;
    ActionTuning action;
    bool channel_enabled = false;
    ChannelModel channel;
    TrainConfig training;
    PseudoRealPlant plant = PseudoRealPlant::perturbed();
    CollectConfig collect;
    EvalConfig eval;
    ServerConfig server;

    ActionConfig action_config() const {
        ActionConfig c = ActionConfig::from(spec);
        c.gains = action.gains;
        c.rotate_step = action.rotate_step;
        c.radial_step = action.radial_step;
        return c;
    }

    ServerConfig server_config() const {
        ServerConfig s = server;
        s.channel_enabled = channel_enabled;
        s.channel = channel;
        return s;
    }

    void validate() const {
        spec.validate();
        episode.validate();
        channel.validate();
        training.validate();
        plant.validate();
        server.validate();
        if (!(action.rotate_step > 0.0 && action.radial_step > 0.0))
            throw std::invalid_argument("action steps must be positive");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("not a number");
    }
    if (used != s.size()) throw std::invalid_argument("not a number");
    return v;
}

inline long long parse_int(const std::string& s) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::out_of_range&) {
        throw std::invalid_argument("out of range");
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("not an integer");
    }
    if (used != s.size()) throw std::invalid_argument("not an integer");
    return v;
}

inline unsigned long long parse_uint(const std::string& s) {
    if (s.empty() || s.front() == '-') throw std::invalid_argument("must be non-negative");
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::out_of_range&) {
        throw std::invalid_argument("out of range");
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("not an integer");
    }
    if (used != s.size()) throw std::invalid_argument("not an integer");
    return v;
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::invalid_argument("not a boolean");
}

struct ConfigKey {
    std::string section;
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class Ref>
ConfigKey real_key(std::string sec, std::string key, Ref ref) {
    return {std::move(sec), std::move(key), [ref](RunConfig& c, const std::string& v) { ref(c) = parse_double(v); },
            [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); }};
}

template <class Ref>
ConfigKey int_key(std::string sec, std::string key, Ref ref) {
    return {std::move(sec), std::move(key),
            [ref](RunConfig& c, const std::string& v) {
                using T = std::decay_t<decltype(ref(c))>;
                if constexpr (std::is_unsigned_v<T>) {
                    const unsigned long long x = parse_uint(v);
                    if (x > std::numeric_limits<T>::max()) throw std::invalid_argument("out of range");
                    ref(c) = static_cast<T>(x);
                } else {
                    const long long x = parse_int(v);
                    if (x > std::numeric_limits<T>::max() || x < std::numeric_limits<T>::min())
                        throw std::invalid_argument("out of range");
                    ref(c) = static_cast<T>(x);
                }
            },
            [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

template <class Ref>
ConfigKey bool_key(std::string sec, std::string key, Ref ref) {
    return {std::move(sec), std::move(key), [ref](RunConfig& c, const std::string& v) { ref(c) = parse_bool(v); },
            [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <class Ref>
ConfigKey text_key(std::string sec, std::string key, Ref ref) {
    return {std::move(sec), std::move(key), [ref](RunConfig& c, const std::string& v) { ref(c) = v; },
            [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); }};
}

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        // physics
        k.push_back(real_key("physics", "play_half_length", [](RunConfig& c) -> double& { return c.spec.field.play_half_length; }));
        k.push_back(real_key("physics", "half_width", [](RunConfig& c) -> double& { return c.spec.field.half_width; }));
        k.push_back(real_key("physics", "pocket_depth", [](RunConfig& c) -> double& { return c.spec.field.pocket_depth; }));
        k.push_back(real_key("physics", "goal_half_width", [](RunConfig& c) -> double& { return c.spec.field.goal_half_width; }));
        k.push_back(real_key("physics", "normalization_length", [](RunConfig& c) -> double& { return c.spec.field.normalization_length; }));
        k.push_back(real_key("physics", "robot_radius", [](RunConfig& c) -> double& { return c.spec.robot.body_radius; }));
        k.push_back(real_key("physics", "axle_length", [](RunConfig& c) -> double& { return c.spec.robot.axle_length; }));
        k.push_back(real_key("physics", "wheel_radius", [](RunConfig& c) -> double& { return c.spec.robot.wheel_radius; }));
        k.push_back(real_key("physics", "robot_mass", [](RunConfig& c) -> double& { return c.spec.robot.mass; }));
        k.push_back(real_key("physics", "v_max", [](RunConfig& c) -> double& { return c.spec.robot.v_max; }));
        k.push_back(real_key("physics", "motor_tau", [](RunConfig& c) -> double& { return c.spec.robot.motor_tau; }));
        k.push_back(real_key("physics", "ball_radius", [](RunConfig& c) -> double& { return c.spec.ball.radius; }));
        k.push_back(real_key("physics", "ball_mass", [](RunConfig& c) -> double& { return c.spec.ball.mass; }));
        k.push_back(real_key("physics", "ball_friction", [](RunConfig& c) -> double& { return c.spec.ball.friction_decel; }));
        k.push_back(int_key("physics", "substeps", [](RunConfig& c) -> int& { return c.spec.physics.substeps; }));
        k.push_back(real_key("physics", "wall_restitution", [](RunConfig& c) -> double& { return c.spec.physics.wall_restitution; }));
        k.push_back(real_key("physics", "robot_ball_restitution", [](RunConfig& c) -> double& { return c.spec.physics.robot_ball_restitution; }));
        k.push_back(bool_key("physics", "walls_enabled", [](RunConfig& c) -> bool& { return c.spec.physics.walls_enabled; }));
        // env
        k.push_back(real_key("env", "control_dt", [](RunConfig& c) -> double& { return c.episode.control_dt; }));
        k.push_back(real_key("env", "max_duration", [](RunConfig& c) -> double& { return c.episode.max_duration; }));
        k.push_back(int_key("env", "n_per_team", [](RunConfig& c) -> int& { return c.episode.n_per_team; }));
        k.push_back(bool_key("env", "with_opponents", [](RunConfig& c) -> bool& { return c.episode.with_opponents; }));
        k.push_back(bool_key("env", "end_on_goal", [](RunConfig& c) -> bool& { return c.episode.end_on_goal; }));
        k.push_back(bool_key("env", "normalize_observations", [](RunConfig& c) -> bool& { return c.episode.normalize_observations; }));
        k.push_back(real_key("env", "ball_wall_margin", [](RunConfig& c) -> double& { return c.episode.ball_wall_margin; }));
        k.push_back({"env", "reset_mode",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "kickoff") c.episode.reset_mode = ResetMode::kickoff;
                         else if (v == "uniform_random") c.episode.reset_mode = ResetMode::uniform_random;
                         else throw std::invalid_argument("expected kickoff or uniform_random");
                     },
                     [](const RunConfig& c) {
                         return std::string(c.episode.reset_mode == ResetMode::kickoff ? "kickoff" : "uniform_random");
                     }});
        // rewards
        k.push_back(real_key("rewards", "goal", [](RunConfig& c) -> double& { return c.episode.weights.goal; }));
        k.push_back(real_key("rewards", "move", [](RunConfig& c) -> double& { return c.episode.weights.move; }));
        k.push_back(real_key("rewards", "potential", [](RunConfig& c) -> double& { return c.episode.weights.potential; }));
        k.push_back(real_key("rewards", "energy", [](RunConfig& c) -> double& { return c.episode.weights.energy; }));
        // action
        k.push_back(real_key("action", "k_theta", [](RunConfig& c) -> double& { return c.action.gains.k_theta; }));
        k.push_back(real_key("action", "k_v", [](RunConfig& c) -> double& { return c.action.gains.k_v; }));
        k.push_back(real_key("action", "d_sat", [](RunConfig& c) -> double& { return c.action.gains.d_sat; }));
        k.push_back(real_key("action", "rotate_step", [](RunConfig& c) -> double& { return c.action.rotate_step; }));
        k.push_back(real_key("action", "radial_step", [](RunConfig& c) -> double& { return c.action.radial_step; }));
        // channel
        k.push_back(bool_key("channel", "enabled", [](RunConfig& c) -> bool& { return c.channel_enabled; }));
        k.push_back(real_key("channel", "sensing_latency_mean", [](RunConfig& c) -> double& { return c.channel.sensing_latency_mean; }));
        k.push_back(real_key("channel", "sensing_latency_sd", [](RunConfig& c) -> double& { return c.channel.sensing_latency_sd; }));
        k.push_back(real_key("channel", "command_delay", [](RunConfig& c) -> double& { return c.channel.command_delay; }));
        k.push_back(real_key("channel", "loss_probability", [](RunConfig& c) -> double& { return c.channel.loss_probability; }));
        k.push_back(int_key("channel", "seed", [](RunConfig& c) -> std::uint64_t& { return c.channel.seed; }));
        // training
        k.push_back(int_key("training", "epochs", [](RunConfig& c) -> int& { return c.training.epochs; }));
        k.push_back(int_key("training", "batch_size", [](RunConfig& c) -> int& { return c.training.batch_size; }));
        k.push_back(real_key("training", "learning_rate", [](RunConfig& c) -> double& { return c.training.learning_rate; }));
        k.push_back(real_key("training", "final_lr_fraction", [](RunConfig& c) -> double& { return c.training.final_lr_fraction; }));
        k.push_back(real_key("training", "validation_fraction", [](RunConfig& c) -> double& { return c.training.validation_fraction; }));
        k.push_back(real_key("training", "beta1", [](RunConfig& c) -> double& { return c.training.beta1; }));
        k.push_back(real_key("training", "beta2", [](RunConfig& c) -> double& { return c.training.beta2; }));
        k.push_back(real_key("training", "collect_duration", [](RunConfig& c) -> double& { return c.collect.duration; }));
        k.push_back(int_key("training", "collect_hold", [](RunConfig& c) -> int& { return c.collect.hold; }));
        k.push_back({"training", "prev_is_command",
                     [](RunConfig& c, const std::string& v) {
                         c.collect.prev = c.eval.prev = parse_bool(v) ? PrevInput::command : PrevInput::observed;
                     },
                     [](const RunConfig& c) { return std::string(c.collect.prev == PrevInput::command ? "true" : "false"); }});
        k.push_back(int_key("training", "eval_episodes", [](RunConfig& c) -> int& { return c.eval.episodes; }));
        k.push_back(real_key("training", "eval_max_duration", [](RunConfig& c) -> double& { return c.eval.max_duration; }));
        // plant
        k.push_back(real_key("plant", "gain_left", [](RunConfig& c) -> double& { return c.plant.gain_left; }));
        k.push_back(real_key("plant", "gain_right", [](RunConfig& c) -> double& { return c.plant.gain_right; }));
        k.push_back(real_key("plant", "dead_zone_left", [](RunConfig& c) -> double& { return c.plant.dead_zone_left; }));
        k.push_back(real_key("plant", "dead_zone_right", [](RunConfig& c) -> double& { return c.plant.dead_zone_right; }));
        k.push_back(int_key("plant", "latency_steps", [](RunConfig& c) -> int& { return c.plant.latency_steps; }));
        k.push_back(real_key("plant", "noise_scale", [](RunConfig& c) -> double& { return c.plant.noise_scale; }));
        // server
        k.push_back(text_key("server", "bind_host", [](RunConfig& c) -> std::string& { return c.server.bind_host; }));
        k.push_back(int_key("server", "command_port", [](RunConfig& c) -> std::uint16_t& { return c.server.command_port; }));
        k.push_back(text_key("server", "state_host", [](RunConfig& c) -> std::string& { return c.server.state_host; }));
        k.push_back(int_key("server", "state_port", [](RunConfig& c) -> std::uint16_t& { return c.server.state_port; }));
        k.push_back(real_key("server", "rate_hz", [](RunConfig& c) -> double& { return c.server.rate_hz; }));
        k.push_back(bool_key("server", "lock_step", [](RunConfig& c) -> bool& { return c.server.lock_step; }));
        k.push_back(real_key("server", "rebroadcast_interval", [](RunConfig& c) -> double& { return c.server.rebroadcast_interval; }));
        return k;
    }();
    return keys;
}

}  // namespace detail

/// Sets one `section.key` entry from text.
inline void set_config_value(RunConfig& c, const std::string& section, const std::string& key, const std::string& value) {
    for (const auto& k : detail::config_keys()) {
        if (k.section != section || k.key != key) continue;
        try {
            k.set(c, value);
        } catch (const std::exception& e) {
            throw std::invalid_argument(section + "." + key + ": bad value '" + value + "' (" + e.what() + ")");
        }
        return;
    }
    throw std::invalid_argument("unknown config key " + section + "." + key);
}

/// Applies an override of the form `section.key=value`.
inline void apply_override(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw std::invalid_argument("override must look like section.key=value: " + assignment);
    set_config_value(c, detail::trim(assignment.substr(0, dot)), detail::trim(assignment.substr(dot + 1, eq - dot - 1)),
                     detail::trim(assignment.substr(eq + 1)));
}

/// Parses the sectioned key-value format:
///
///     # comment
///     [physics]
///     substeps = 10
///
/// Keys not set keep their defaults. `name` prefixes error messages.
inline RunConfig parse_config(std::istream& is, const std::string& name = "<config>", RunConfig base = {}) {
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string where = name + ":" + std::to_string(lineno) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw std::invalid_argument(where + "unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument(where + "expected key = value");
        if (section.empty()) throw std::invalid_argument(where + "key outside any section");
        try {
            set_config_value(base, section, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(where + e.what());
        }
    }
    return base;
}

inline RunConfig parse_config(const std::string& text, const std::string& name, RunConfig base = {}) {
    std::istringstream is(text);
    return parse_config(is, name, std::move(base));
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    return parse_config(f, path);
}

/// Every key with its current value, in the same format parse_config reads.
inline std::string config_to_text(const RunConfig& c) {
    std::ostringstream os;
    std::string section;
    for (const auto& k : detail::config_keys()) {
        if (k.section != section) {
            if (!section.empty()) os << '\n';
            section = k.section;
            os << '[' << section << "]\n";
        }
        os << k.key << " = " << k.get(c) << '\n';
    }
    return os.str();
}

/// section -> key -> value, for manifests.
inline std::map<std::string, std::map<std::string, std::string>> config_to_map(const RunConfig& c) {
    std::map<std::string, std::map<std::string, std::string>> m;
    for (const auto& k : detail::config_keys()) m[k.section][k.key] = k.get(c);
    return m;
}

}  // namespace vsrl
