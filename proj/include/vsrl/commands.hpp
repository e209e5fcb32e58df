#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsrl/config.hpp"
#include "vsrl/env.hpp"
#include "vsrl/metrics.hpp"
#include "vsrl/policies.hpp"
#include "vsrl/sim2real.hpp"

namespace vsrl {

inline constexpr const char* kVersionTag = "vsrl 0.1.0";

std::uint64_t episode_seed(std::uint64_t base, int episode);

// ---------------------------------------------------------------------------
// Rollout log
// ---------------------------------------------------------------------------

inline constexpr const char* kRolloutHeader =
    "episode,step,t,team,id,v_d,w_d,v_obs,w_obs,vl_cmd,vr_cmd,x,y,theta,ball_x,ball_y,score_own,score_adv,"
    "r_goal,r_move,r_potential,r_energy,r_total";

/// One robot at one step. Speeds in cm/s and rad/s; team 0 is blue.
struct LogRow {
    int episode = 0;
    int step = 0;
    double t = 0.0;
    int team = 0;
    int id = 0;
    double v_d = 0, w_d = 0, v_obs = 0, w_obs = 0, vl_cmd = 0, vr_cmd = 0;
    double x = 0, y = 0, theta = 0, ball_x = 0, ball_y = 0;
    int score_own = 0, score_adv = 0;
    double r_goal = 0, r_move = 0, r_potential = 0, r_energy = 0, r_total = 0;
};

std::vector<LogRow> parse_rollout_log(std::istream& is, const std::string& name = "<log>");

std::vector<LogRow> load_rollout_log(const std::string& path);

// ---------------------------------------------------------------------------
// Rollout
// ---------------------------------------------------------------------------

struct EpisodeLog {
    std::string rows;
    std::vector<double> goal_rewards;  // per step
    EpisodeSummary summary;
};

EpisodeLog run_episode(const RunConfig& cfg, AgentKind agent, int index, std::uint64_t seed);

struct RolloutOptions {
    AgentKind agent = AgentKind::goto_ball_goal;
    int episodes = 10;
    std::uint64_t seed = 0;
    int threads = 1;
    int window = kGoalWindow;
};

struct RolloutResult {
    std::string log_csv;
    MetricsReport report;
};

/// Runs seeded episodes, optionally across threads; output order is by
/// episode index regardless of scheduling.
RolloutResult run_rollout(const RunConfig& cfg, const RolloutOptions& opt);

/// Recomputes the report of a rollout from its log. Episode seeds are not in
/// the log and are reported as zero.
MetricsReport metrics_from_log(const std::vector<LogRow>& rows, int window = kGoalWindow);

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// One SVG image of the field with oriented robots, the ball and the score.
std::string render_svg(const std::vector<LogRow>& frame, const SimSpec& spec);

struct ReplayResult {
    int frames = 0;
    std::map<int, Score> final_scores;  // by episode
};

/// Writes frame_000001.svg, frame_000002.svg, ... one per logged step.
ReplayResult replay_log(const std::vector<LogRow>& rows, const SimSpec& spec, const std::filesystem::path& out);

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::string utc_now_iso8601();

nlohmann::ordered_json make_manifest(const std::string& command, const RunConfig& cfg, std::uint64_t seed,
                                     const nlohmann::ordered_json& args, const std::vector<std::string>& outputs);

/// Loads a config file, or the config snapshot stored in a run manifest.
RunConfig load_config_or_manifest(const std::string& path);

void write_text(const std::filesystem::path& p, const std::string& text);

}  // namespace vsrl
