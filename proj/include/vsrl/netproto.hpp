#pragma once

#include <algorithm>
#include <arpa/inet.h>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <netinet/in.h>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <sys/socket.h>
#include <thread>
#include <unistd.h>
#include <utility>
#include <vector>

#include "vsrl/action.hpp"
#include "vsrl/env.hpp"
#include "vsrl/geometry.hpp"
#include "vsrl/physics.hpp"

namespace vsrl {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint8_t kProtoMagic[4] = {'V', 'S', 'R', 'L'};
inline constexpr std::uint8_t kProtoVersion = 1;
inline constexpr std::uint8_t kStateType = 0x01;
inline constexpr std::uint8_t kCommandType = 0x02;
inline constexpr std::size_t kStateHeaderSize = 38;  // through the robot counts
inline constexpr std::size_t kStateRobotSize = 25;
inline constexpr std::size_t kCommandHeaderSize = 8;
inline constexpr std::size_t kCommandRobotSize = 10;
inline constexpr std::size_t kMaxDatagram = 1500;

enum class ProtoError {
    none,
    bad_magic,
    bad_version,
    bad_type,
    truncated,
    length_mismatch,
    invalid_team,
    invalid_mode,
    invalid_payload,
    oversized,
};

inline const char* to_string(ProtoError e) {
    switch (e) {
        case ProtoError::none: return "none";
        case ProtoError::bad_magic: return "bad magic";
        case ProtoError::bad_version: return "bad version";
        case ProtoError::bad_type: return "bad type";
        case ProtoError::truncated: return "truncated packet";
        case ProtoError::length_mismatch: return "length mismatch";
        case ProtoError::invalid_team: return "invalid team";
        case ProtoError::invalid_mode: return "invalid mode";
        case ProtoError::invalid_payload: return "invalid payload";
        case ProtoError::oversized: return "oversized datagram";
    }
    return "unknown";
}

/// Either a decoded value or the reason decoding failed.
template <class T>
struct Decoded {
    std::optional<T> value;
    ProtoError error = ProtoError::none;

    explicit operator bool() const { return value.has_value(); }
    const T& operator*() const { return *value; }
    const T* operator->() const { return &*value; }
};

// ---------------------------------------------------------------------------
// Byte helpers
// ---------------------------------------------------------------------------

namespace wire {

inline void put_u8(Bytes& b, std::uint8_t v) { b.push_back(v); }

inline void put_u32(Bytes& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(Bytes& b, double v) { put_u32(b, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

inline std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
    return v;
}

inline float get_f32(std::span<const std::uint8_t> b, std::size_t at) { return std::bit_cast<float>(get_u32(b, at)); }

inline void put_header(Bytes& b, std::uint8_t type) {
    for (std::uint8_t c : kProtoMagic) b.push_back(c);
    put_u8(b, kProtoVersion);
    put_u8(b, type);
}

inline ProtoError check_header(std::span<const std::uint8_t> b, std::uint8_t type) {
    if (b.size() < 4) return ProtoError::truncated;
    if (!std::equal(std::begin(kProtoMagic), std::end(kProtoMagic), b.begin())) return ProtoError::bad_magic;
    if (b.size() < 6) return ProtoError::truncated;
    if (b[4] != kProtoVersion) return ProtoError::bad_version;
    if (b[5] != type) return ProtoError::bad_type;
    return ProtoError::none;
}

inline std::int8_t saturate_i8(int v) { return static_cast<std::int8_t>(std::clamp(v, -128, 127)); }

}  // namespace wire

// ---------------------------------------------------------------------------
// State packet
// ---------------------------------------------------------------------------

struct RobotWire {
    std::uint8_t id = 0;
    float x = 0, y = 0, theta = 0, vx = 0, vy = 0, omega = 0;
    bool operator==(const RobotWire&) const = default;
};

struct StateMessage {
    std::uint32_t frame = 0;
    float timestamp = 0;
    std::int8_t score_own = 0;
    std::int8_t score_adv = 0;
    float ball_x = 0, ball_y = 0, ball_vx = 0, ball_vy = 0;
    std::vector<RobotWire> blue;
    std::vector<RobotWire> yellow;
    bool operator==(const StateMessage&) const = default;

    /// World reconstructed at 32-bit precision. Wheel speeds are not on the
    /// wire and come back as zero; the ball radius comes from `spec`.
    WorldState to_world(const SimSpec& spec = {}) const {
        WorldState w;
        w.frame = frame;
        w.score = {score_own, score_adv};
        w.ball.position = {ball_x, ball_y};
        w.ball.velocity = {ball_vx, ball_vy};
        w.ball.radius = spec.ball.radius;
        const auto add = [](std::vector<RobotState>& out, const std::vector<RobotWire>& in, Team team) {
            for (const auto& r : in) {
                RobotState s = make_robot(r.id, team, {r.x, r.y, r.theta});
                s.twist = {r.vx, r.vy, r.omega};
                out.push_back(s);
            }
        };
        add(w.robots_blue, blue, Team::blue);
        add(w.robots_yellow, yellow, Team::yellow);
        return w;
    }
};

/// Layout (little-endian): magic[4] version type frame:u32 timestamp:f32
/// own:i8 adv:i8 reserved:u32 ball x,y,vx,vy:f32 count_blue:u8 count_yellow:u8,
/// then per robot id:u8 x,y,theta,vx,vy,omega:f32. Robots are emitted in
/// ascending id order per team. `timestamp` is clamped to [0, 1].
inline Bytes encode_state(const WorldState& w, double timestamp) {
    if (w.robots_blue.size() > 255 || w.robots_yellow.size() > 255)
        throw std::invalid_argument("encode_state: at most 255 robots per team");
    Bytes b;
    b.reserve(kStateHeaderSize + kStateRobotSize * w.robot_count());
    wire::put_header(b, kStateType);
    wire::put_u32(b, static_cast<std::uint32_t>(w.frame));
    wire::put_f32(b, std::isfinite(timestamp) ? std::clamp(timestamp, 0.0, 1.0) : 0.0);
    wire::put_u8(b, static_cast<std::uint8_t>(wire::saturate_i8(w.score.own)));
    wire::put_u8(b, static_cast<std::uint8_t>(wire::saturate_i8(w.score.adversary)));
    wire::put_u32(b, 0);
    wire::put_f32(b, w.ball.position.x);
    wire::put_f32(b, w.ball.position.y);
    wire::put_f32(b, w.ball.velocity.x);
    wire::put_f32(b, w.ball.velocity.y);
    wire::put_u8(b, static_cast<std::uint8_t>(w.robots_blue.size()));
    wire::put_u8(b, static_cast<std::uint8_t>(w.robots_yellow.size()));
    for (const auto* team : {&w.robots_blue, &w.robots_yellow}) {
        std::vector<const RobotState*> sorted;
        for (const auto& r : *team) sorted.push_back(&r);
        std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
        for (const RobotState* r : sorted) {
            wire::put_u8(b, static_cast<std::uint8_t>(r->id));
            for (double v : {r->pose.x, r->pose.y, r->pose.theta, r->twist.vx, r->twist.vy, r->twist.omega})
                wire::put_f32(b, v);
        }
    }
    return b;
}

inline Bytes encode_state(const WorldState& w, const EpisodeConfig& cfg) {
    return encode_state(w, episode_timestamp(w.elapsed, cfg.max_duration));
}

inline Decoded<StateMessage> decode_state(std::span<const std::uint8_t> b) {
    if (const auto e = wire::check_header(b, kStateType); e != ProtoError::none) return {{}, e};
    if (b.size() < kStateHeaderSize) return {{}, ProtoError::truncated};
    StateMessage m;
    m.frame = wire::get_u32(b, 6);
    m.timestamp = wire::get_f32(b, 10);
    m.score_own = static_cast<std::int8_t>(b[14]);
    m.score_adv = static_cast<std::int8_t>(b[15]);
    m.ball_x = wire::get_f32(b, 20);
    m.ball_y = wire::get_f32(b, 24);
    m.ball_vx = wire::get_f32(b, 28);
    m.ball_vy = wire::get_f32(b, 32);
    const std::size_t nb = b[36];
    const std::size_t ny = b[37];
    const std::size_t expected = kStateHeaderSize + kStateRobotSize * (nb + ny);
    if (b.size() < expected) return {{}, ProtoError::truncated};
    if (b.size() != expected) return {{}, ProtoError::length_mismatch};
    std::size_t at = kStateHeaderSize;
    for (std::size_t i = 0; i < nb + ny; ++i, at += kStateRobotSize) {
        RobotWire r;
        r.id = b[at];
        r.x = wire::get_f32(b, at + 1);
        r.y = wire::get_f32(b, at + 5);
        r.theta = wire::get_f32(b, at + 9);
        r.vx = wire::get_f32(b, at + 13);
        r.vy = wire::get_f32(b, at + 17);
        r.omega = wire::get_f32(b, at + 21);
        (i < nb ? m.blue : m.yellow).push_back(r);
    }
    return {m, ProtoError::none};
}

// ---------------------------------------------------------------------------
// Command packet
// ---------------------------------------------------------------------------

enum class CommandMode : std::uint8_t { wheel = 0, high_level = 1, discrete = 2 };

struct RobotCommand {
    std::uint8_t id = 0;
    CommandMode mode = CommandMode::wheel;
    float a = 0;  // left wheel, v, or discrete index
    float b = 0;  // right wheel, omega, or unused
    bool operator==(const RobotCommand&) const = default;

    AgentAction to_action() const {
        switch (mode) {
            case CommandMode::wheel: return WheelCommand{a, b};
            case CommandMode::high_level: return HighLevelAction{a, b};
            case CommandMode::discrete: return *discrete_action_from_index(static_cast<int>(a));
        }
        return WheelCommand{};
    }

    static RobotCommand from_action(std::uint8_t id, const AgentAction& act) {
        return std::visit(
            [id](const auto& x) -> RobotCommand {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, WheelCommand>)
                    return {id, CommandMode::wheel, static_cast<float>(x.left()), static_cast<float>(x.right())};
                else if constexpr (std::is_same_v<T, HighLevelAction>)
                    return {id, CommandMode::high_level, static_cast<float>(x.v), static_cast<float>(x.omega)};
                else
                    return {id, CommandMode::discrete, static_cast<float>(static_cast<int>(x)), 0.0f};
            },
            act);
    }
};

struct CommandMessage {
    Team team = Team::blue;
    std::vector<RobotCommand> commands;
    bool operator==(const CommandMessage&) const = default;
};

/// Layout: magic[4] version type team:u8 count:u8, then per robot
/// id:u8 mode:u8 a:f32 b:f32.
inline Bytes encode_command(const CommandMessage& m) {
    if (m.commands.size() > 255) throw std::invalid_argument("encode_command: at most 255 robots");
    Bytes b;
    b.reserve(kCommandHeaderSize + kCommandRobotSize * m.commands.size());
    wire::put_header(b, kCommandType);
    wire::put_u8(b, static_cast<std::uint8_t>(m.team));
    wire::put_u8(b, static_cast<std::uint8_t>(m.commands.size()));
    for (const auto& c : m.commands) {
        wire::put_u8(b, c.id);
        wire::put_u8(b, static_cast<std::uint8_t>(c.mode));
        wire::put_f32(b, c.a);
        wire::put_f32(b, c.b);
    }
    return b;
}

inline Decoded<CommandMessage> decode_command(std::span<const std::uint8_t> b) {
    if (const auto e = wire::check_header(b, kCommandType); e != ProtoError::none) return {{}, e};
    if (b.size() < kCommandHeaderSize) return {{}, ProtoError::truncated};
    if (b[6] > 1) return {{}, ProtoError::invalid_team};
    const std::size_t n = b[7];
    const std::size_t expected = kCommandHeaderSize + kCommandRobotSize * n;
    if (b.size() < expected) return {{}, ProtoError::truncated};
    if (b.size() != expected) return {{}, ProtoError::length_mismatch};
    CommandMessage m;
    m.team = static_cast<Team>(b[6]);
    for (std::size_t i = 0, at = kCommandHeaderSize; i < n; ++i, at += kCommandRobotSize) {
        RobotCommand c;
        c.id = b[at];
        if (b[at + 1] > 2) return {{}, ProtoError::invalid_mode};
        c.mode = static_cast<CommandMode>(b[at + 1]);
        c.a = wire::get_f32(b, at + 2);
        c.b = wire::get_f32(b, at + 6);
        if (c.mode == CommandMode::discrete &&
            !(std::isfinite(c.a) && discrete_action_from_index(static_cast<int>(std::trunc(c.a)))))
            return {{}, ProtoError::invalid_payload};
        m.commands.push_back(c);
    }
    return {m, ProtoError::none};
}

// ---------------------------------------------------------------------------
// Channel model
// ---------------------------------------------------------------------------

struct ChannelModel {
    double sensing_latency_mean = 0.090;  // s
    double sensing_latency_sd = 0.010;    // s
    double command_delay = 0.0003;        // s
    double loss_probability = 0.0008;
    std::uint64_t seed = 0;

    static ChannelModel ideal() { return {0.0, 0.0, 0.0, 0.0, 0}; }

    void validate() const {
        if (!(loss_probability >= 0.0 && loss_probability <= 1.0))
            throw std::invalid_argument("channel loss probability must lie in [0, 1]");
        if (!(sensing_latency_mean >= 0.0 && sensing_latency_sd >= 0.0 && command_delay >= 0.0))
            throw std::invalid_argument("channel delays must be non-negative");
    }
};

enum class Direction { sensing, command };

/// Seeded packet channel. Each transmission draws the loss decision first,
/// then (if delivered) the delay.
class Channel {
public:
    explicit Channel(const ChannelModel& m = {}) : model_(m), rng_(m.seed) { model_.validate(); }

    std::optional<double> transmit(double now, Direction d) {
        ++sent_;
        if (model_.loss_probability > 0.0 && rng_.bernoulli(model_.loss_probability)) {
            ++dropped_;
            return std::nullopt;
        }
        return now + (d == Direction::sensing ? sample_sensing_delay() : model_.command_delay);
    }

    double sample_sensing_delay() {
        if (model_.sensing_latency_sd == 0.0) return model_.sensing_latency_mean;
        return std::max(0.0, rng_.normal(model_.sensing_latency_mean, model_.sensing_latency_sd));
    }

    std::uint64_t sent() const { return sent_; }
    std::uint64_t dropped() const { return dropped_; }
    const ChannelModel& model() const { return model_; }

private:
    ChannelModel model_;
    Rng rng_;
    std::uint64_t sent_ = 0;
    std::uint64_t dropped_ = 0;
};

/// Delivery time for one packet, or nullopt when the channel drops it.
inline std::optional<double> channel_transmit(Channel& ch, Direction d, double now) { return ch.transmit(now, d); }

// ---------------------------------------------------------------------------
// Server core (no sockets)
// ---------------------------------------------------------------------------

struct RobotKey {
    Team team = Team::blue;
    int id = 0;
    auto operator<=>(const RobotKey&) const = default;
};

struct ServerConfig {
    std::string bind_host = "127.0.0.1";
    std::uint16_t command_port = 9002;
    std::string state_host = "127.0.0.1";
    std::uint16_t state_port = 9001;
    double rate_hz = 30.0;
    bool lock_step = false;
    bool channel_enabled = false;
    ChannelModel channel;
    /// Robots whose commands lock-step waits for; empty means every blue robot.
    std::vector<RobotKey> controlled;
    double rebroadcast_interval = 0.1;  // s, lock-step only
    std::uint64_t max_frames = 0;       // stop after this many steps; 0 runs forever

    void validate() const {
        if (!(rate_hz > 0.0)) throw std::invalid_argument("server rate must be positive");
        if (!(rebroadcast_interval > 0.0)) throw std::invalid_argument("rebroadcast interval must be positive");
        channel.validate();
    }
};

struct DatagramReport {
    ProtoError error = ProtoError::none;
    int accepted = 0;
    std::vector<RobotKey> unknown;  // ids not present in the world; not applied
};

struct ServerStats {
    std::uint64_t datagrams = 0;
    std::uint64_t rejected = 0;
    std::uint64_t unknown_ids = 0;
    std::uint64_t commands_dropped = 0;
    std::uint64_t states_dropped = 0;
};

/// Owns the world. Commands enter through handle_datagram, time advances
/// through tick, and encoded state packets leave through take_due.
class ServerCore {
public:
    ServerCore(const ServerCore&) = delete;
    ServerCore& operator=(const ServerCore&) = delete;

    ServerCore(SimSpec spec, EpisodeConfig episode, ServerConfig cfg)
        : env_(std::move(spec), episode), cfg_(std::move(cfg)), channel_(cfg_.channel) {
        cfg_.validate();
        env_.reset();
        yellow_cmds_.assign(env_.world().robots_yellow.size(), WheelCommand{});
        env_.set_opponent_policy([this](const WorldState&, const RobotState& r) {
            return r.id >= 0 && static_cast<std::size_t>(r.id) < yellow_cmds_.size() ? yellow_cmds_[r.id] : WheelCommand{};
        });
        if (cfg_.controlled.empty())
            for (const auto& r : env_.world().robots_blue) cfg_.controlled.push_back({Team::blue, r.id});
        yellow_targets_.assign(env_.world().robots_yellow.size(), {});
        reset_yellow_targets();
        publish(0.0);
    }

    /// Parses one datagram and queues its commands. Never throws on bad input.
    DatagramReport handle_datagram(std::span<const std::uint8_t> bytes, double now) {
        ++stats_.datagrams;
        DatagramReport rep;
        if (bytes.size() > kMaxDatagram) {
            rep.error = ProtoError::oversized;
            ++stats_.rejected;
            return rep;
        }
        const auto msg = decode_command(bytes);
        if (!msg) {
            rep.error = msg.error;
            ++stats_.rejected;
            return rep;
        }
        double deliver = now;
        if (cfg_.channel_enabled) {
            const auto t = channel_.transmit(now, Direction::command);
            if (!t) {
                ++stats_.commands_dropped;
                return rep;
            }
            deliver = *t;
        }
        for (const auto& c : msg->commands) {
            const RobotKey key{msg->team, c.id};
            if (!has_robot(key)) {
                rep.unknown.push_back(key);
                ++stats_.unknown_ids;
                continue;
            }
            inbound_.push_back({deliver, key, c.to_action()});
            ++rep.accepted;
        }
        return rep;
    }

    /// True when a step may run at `now`: always in free-run mode, and in
    /// lock-step mode once every controlled robot has a delivered command.
    bool ready(double now) {
        deliver(now);
        if (!cfg_.lock_step) return true;
        return std::all_of(cfg_.controlled.begin(), cfg_.controlled.end(),
                           [&](const RobotKey& k) { return pending_.count(k) > 0; });
    }

    /// Advances one control step if ready. Commands delivered by `now` apply
    /// with last-write-wins; robots without one get a zero wheel command.
    bool tick(double now) {
        if (!ready(now)) return false;
        const auto& w = env_.world();
        std::vector<AgentAction> blue;
        for (const auto& r : w.robots_blue) {
            const auto it = pending_.find({Team::blue, r.id});
            blue.push_back(it != pending_.end() ? it->second : AgentAction{WheelCommand{}});
        }
        for (std::size_t i = 0; i < w.robots_yellow.size(); ++i) {
            const auto& r = w.robots_yellow[i];
            const auto it = pending_.find({Team::yellow, r.id});
            yellow_cmds_[i] = it != pending_.end() ? yellow_command(it->second, r, yellow_targets_[i]) : WheelCommand{};
        }
        pending_.clear();
        const auto res = env_.step(blue);
        if (res.done) env_.reset();
        if (res.done || res.info.goal) reset_yellow_targets();
        ++frames_;
        publish(now);
        return true;
    }

    /// State packets whose delivery time has come, oldest first.
    std::vector<Bytes> take_due(double now) {
        std::vector<Bytes> out;
        while (!outbox_.empty() && outbox_.front().first <= now) {
            out.push_back(std::move(outbox_.front().second));
            outbox_.pop_front();
        }
        return out;
    }

    std::optional<double> next_delivery() const {
        return outbox_.empty() ? std::nullopt : std::optional<double>(outbox_.front().first);
    }

    /// Most recent encoded state, regardless of the channel.
    const Bytes& latest_state() const { return latest_; }
    const WorldState& world() const { return env_.world(); }
    const ServerConfig& config() const { return cfg_; }
    const ServerStats& stats() const { return stats_; }
    std::uint64_t frames() const { return frames_; }
    bool finished() const { return cfg_.max_frames > 0 && frames_ >= cfg_.max_frames; }

private:
    struct Inbound {
        double at;
        RobotKey key;
        AgentAction action;
    };

    bool has_robot(const RobotKey& k) const {
        const auto& team = env_.world().team(k.team);
        return std::any_of(team.begin(), team.end(), [&](const RobotState& r) { return r.id == k.id; });
    }

    void deliver(double now) {
        // stable: equal delivery times keep arrival order, so the last write wins
        std::stable_sort(inbound_.begin(), inbound_.end(), [](const Inbound& a, const Inbound& b) { return a.at < b.at; });
        auto it = inbound_.begin();
        for (; it != inbound_.end() && it->at <= now; ++it) pending_.insert_or_assign(it->key, it->action);
        inbound_.erase(inbound_.begin(), it);
    }

    WheelCommand yellow_command(const AgentAction& a, const RobotState& r, VirtualTarget& target) const {
        const auto& ac = env_.action_config();
        const auto& spec = env_.spec();
        if (const auto* w = std::get_if<WheelCommand>(&a)) return *w;
        if (const auto* h = std::get_if<HighLevelAction>(&a))
            return continuous_to_wheels(clamp_action(*h, ac.v_max, ac.omega_max), spec.robot.axle_length, spec.robot.v_max);
        return discrete_step_pipeline(r.pose, target, std::get<DiscreteAction>(a), ac, spec.robot.axle_length);
    }

    void reset_yellow_targets() {
        const auto& ys = env_.world().robots_yellow;
        for (std::size_t i = 0; i < ys.size(); ++i) yellow_targets_[i] = {0.0, ys[i].pose.theta};
    }

    void publish(double now) {
        latest_ = encode_state(env_.world(), env_.config());
        double at = now;
        if (cfg_.channel_enabled) {
            const auto t = channel_.transmit(now, Direction::sensing);
            if (!t) {
                ++stats_.states_dropped;
                return;
            }
            at = *t;
        }
        const auto pos = std::upper_bound(outbox_.begin(), outbox_.end(), at,
                                          [](double v, const auto& e) { return v < e.first; });
        outbox_.insert(pos, {at, latest_});
    }

    SoccerEnv env_;
    ServerConfig cfg_;
    Channel channel_;
    std::vector<WheelCommand> yellow_cmds_;
    std::vector<VirtualTarget> yellow_targets_;
    std::vector<Inbound> inbound_;
    std::map<RobotKey, AgentAction> pending_;
    std::deque<std::pair<double, Bytes>> outbox_;
    Bytes latest_;
    ServerStats stats_;
    std::uint64_t frames_ = 0;
};

// ---------------------------------------------------------------------------
// UDP transport
// ---------------------------------------------------------------------------

class UdpSocket {
public:
    UdpSocket() : fd_(::socket(AF_INET, SOCK_DGRAM, 0)) {
        if (fd_ < 0) throw std::runtime_error("socket() failed");
    }
    ~UdpSocket() {
        if (fd_ >= 0) ::close(fd_);
    }
    UdpSocket(const UdpSocket&) = delete;
    UdpSocket& operator=(const UdpSocket&) = delete;

    static sockaddr_in address(const std::string& host, std::uint16_t port) {
        sockaddr_in a{};
        a.sin_family = AF_INET;
        a.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &a.sin_addr) != 1) throw std::runtime_error("bad IPv4 address: " + host);
        return a;
    }

    void bind(const std::string& host, std::uint16_t port) {
        const int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        const sockaddr_in a = address(host, port);
        if (::bind(fd_, reinterpret_cast<const sockaddr*>(&a), sizeof(a)) != 0)
            throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
    }

    std::uint16_t local_port() const {
        sockaddr_in a{};
        socklen_t len = sizeof(a);
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&a), &len);
        return ntohs(a.sin_port);
    }

    void set_timeout(double seconds) {
        timeval tv{};
        tv.tv_sec = static_cast<time_t>(seconds);
        tv.tv_usec = static_cast<suseconds_t>((seconds - static_cast<double>(tv.tv_sec)) * 1e6);
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    }

    void send_to(std::span<const std::uint8_t> data, const sockaddr_in& to) {
        ::sendto(fd_, data.data(), data.size(), 0, reinterpret_cast<const sockaddr*>(&to), sizeof(to));
    }

    struct Datagram {
        Bytes data;
        sockaddr_in from{};
        bool truncated = false;
    };

    /// Waits up to the socket timeout. Datagrams longer than kMaxDatagram are
    /// reported as truncated.
    std::optional<Datagram> receive() {
        Datagram d;
        d.data.resize(kMaxDatagram + 1);
        socklen_t len = sizeof(d.from);
        const ssize_t n =
            ::recvfrom(fd_, d.data.data(), d.data.size(), MSG_TRUNC, reinterpret_cast<sockaddr*>(&d.from), &len);
        if (n < 0) return std::nullopt;
        d.truncated = static_cast<std::size_t>(n) > kMaxDatagram;
        d.data.resize(std::min(static_cast<std::size_t>(n), d.data.size()));
        return d;
    }

private:
    int fd_;
};

/// Runs a ServerCore on real sockets. A receive thread hands datagrams to the
/// simulation loop through a queue; only the loop touches the core.
class UdpServer {
public:
    explicit UdpServer(ServerCore& core) : core_(core) {
        const auto& c = core_.config();
        socket_.bind(c.bind_host, c.command_port);
        socket_.set_timeout(0.05);
        state_dest_ = UdpSocket::address(c.state_host, c.state_port);
    }

    std::uint16_t command_port() const { return socket_.local_port(); }

    /// Blocks until `stop` is set or the core reaches max_frames.
    void run(const std::atomic<bool>& stop) {
        using clock = std::chrono::steady_clock;
        const auto t0 = clock::now();
        const auto now = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };
        std::atomic<bool> done{false};
        std::thread rx([&] {
            while (!stop && !done) {
                auto d = socket_.receive();
                if (!d) continue;
                const double t = now();
                std::lock_guard lk(mu_);
                inbox_.push_back({std::move(*d), t});
                cv_.notify_one();
            }
        });

        const auto& cfg = core_.config();
        const double period = 1.0 / cfg.rate_hz;
        double next_tick = period;
        double last_send = 0.0;
        flush(now(), last_send);
        while (!stop && !core_.finished()) {
            double wake = cfg.lock_step ? last_send + cfg.rebroadcast_interval : next_tick;
            if (const auto d = core_.next_delivery()) wake = std::min(wake, *d);
            {
                std::unique_lock lk(mu_);
                const double wait = std::max(0.0, wake - now());
                cv_.wait_for(lk, std::chrono::duration<double>(wait), [&] { return !inbox_.empty() || stop; });
            }
            drain();
            const double t = now();
            if (cfg.lock_step) {
                if (core_.tick(t)) {
                    flush(t, last_send);
                } else if (t - last_send >= cfg.rebroadcast_interval) {
                    send_all(core_.latest_state());
                    last_send = t;
                }
            } else if (t >= next_tick) {
                core_.tick(t);
                next_tick += period;
                if (next_tick < t) next_tick = t + period;
            }
            flush(t, last_send);
        }
        done = true;
        rx.join();
    }

    const ServerCore& core() const { return core_; }

private:
    struct Received {
        UdpSocket::Datagram datagram;
        double at;
    };

    void drain() {
        std::deque<Received> batch;
        {
            std::lock_guard lk(mu_);
            batch.swap(inbox_);
        }
        for (auto& r : batch) {
            remember(r.datagram.from);
            if (r.datagram.truncated) {
                Bytes big(kMaxDatagram + 1);
                core_.handle_datagram(big, r.at);
                continue;
            }
            core_.handle_datagram(r.datagram.data, r.at);
        }
    }

    void remember(const sockaddr_in& a) {
        constexpr std::size_t kMaxClients = 64;
        for (const auto& c : clients_)
            if (c.sin_addr.s_addr == a.sin_addr.s_addr && c.sin_port == a.sin_port) return;
        if (clients_.size() < kMaxClients) clients_.push_back(a);
    }

    void flush(double t, double& last_send) {
        for (const auto& p : core_.take_due(t)) {
            send_all(p);
            last_send = t;
        }
    }

    void send_all(const Bytes& p) {
        socket_.send_to(p, state_dest_);
        for (const auto& c : clients_) socket_.send_to(p, c);
    }

    ServerCore& core_;
    UdpSocket socket_;
    sockaddr_in state_dest_{};
    std::vector<sockaddr_in> clients_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Received> inbox_;
};

}  // namespace vsrl
