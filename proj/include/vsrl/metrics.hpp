#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsrl/physics.hpp"
#include "vsrl/stats.hpp"

namespace vsrl {

inline constexpr int kGoalWindow = 100;

/// out[t] = sum of goal rewards over steps t .. t + window - 1 (clipped at
/// the end of the series).
inline std::vector<double> windowed_goal_score(std::span<const double> goal_rewards, int window = kGoalWindow) {
    if (window < 1) throw std::invalid_argument("window must be positive");
    const std::size_t n = goal_rewards.size();
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + goal_rewards[i];
    std::vector<double> out(n);
    for (std::size_t t = 0; t < n; ++t) out[t] = prefix[std::min(n, t + static_cast<std::size_t>(window))] - prefix[t];
    return out;
}

struct RewardSums {
    double goal = 0.0;
    double move = 0.0;
    double potential = 0.0;
    double energy = 0.0;
    double total = 0.0;
};

struct EpisodeSummary {
    int episode = 0;
    std::uint64_t seed = 0;
    int steps = 0;
    Score score;
    std::optional<int> steps_to_goal;  // first blue goal, 1-based step count
    RewardSums rewards;                // summed over blue agents
};

struct MetricsReport {
    int episodes = 0;
    int window = kGoalWindow;
    std::optional<MeanSd> steps_to_goal;  // empty when no episode scored
    int episodes_scored = 0;
    std::vector<double> goal_score;  // windowed series over the concatenated episodes
    std::vector<EpisodeSummary> per_episode;
};

/// Builds a report from per-episode summaries and the per-step goal rewards
/// of all episodes in order.
inline MetricsReport make_report(std::vector<EpisodeSummary> episodes, std::span<const double> goal_rewards,
                                 int window = kGoalWindow) {
    MetricsReport r;
    r.episodes = static_cast<int>(episodes.size());
    r.window = window;
    std::vector<double> stg;
    for (const auto& e : episodes)
        if (e.steps_to_goal) stg.push_back(*e.steps_to_goal);
    r.episodes_scored = static_cast<int>(stg.size());
    if (!stg.empty()) r.steps_to_goal = mean_sd(stg);
    r.goal_score = windowed_goal_score(goal_rewards, window);
    r.per_episode = std::move(episodes);
    return r;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["episodes"] = r.episodes;
    j["episodes_scored"] = r.episodes_scored;
    if (r.steps_to_goal) {
        j["steps_to_goal"] = {{"mean", r.steps_to_goal->mean}, {"sd", r.steps_to_goal->sd}, {"n", r.steps_to_goal->n}};
    } else {
        j["steps_to_goal"] = nullptr;
    }
    j["window"] = r.window;
    auto& eps = j["per_episode"] = nlohmann::ordered_json::array();
    for (const auto& e : r.per_episode) {
        nlohmann::ordered_json o;
        o["episode"] = e.episode;
        o["seed"] = e.seed;
        o["steps"] = e.steps;
        o["score_own"] = e.score.own;
        o["score_adv"] = e.score.adversary;
        o["steps_to_goal"] = e.steps_to_goal ? nlohmann::ordered_json(*e.steps_to_goal) : nlohmann::ordered_json(nullptr);
        o["rewards"] = {{"goal", e.rewards.goal},
                        {"move", e.rewards.move},
                        {"potential", e.rewards.potential},
                        {"energy", e.rewards.energy},
                        {"total", e.rewards.total}};
        eps.push_back(std::move(o));
    }
    auto& gs = j["goal_score"] = nlohmann::ordered_json::array();
    for (double v : r.goal_score) gs.push_back(static_cast<int>(v) == v ? nlohmann::ordered_json(static_cast<int>(v)) : nlohmann::ordered_json(v));
    return j;
}

}  // namespace vsrl
