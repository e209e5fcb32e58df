#include "vsrl/commands.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace vsrl {

std::uint64_t episode_seed(std::uint64_t base, int episode) {
    return Rng(base).fork(static_cast<std::uint64_t>(episode)).next_u64();
}

namespace {

void append_row(std::string& out, const LogRow& r) {
    char buf[768];
    std::snprintf(buf, sizeof(buf),
                  "%d,%d,%.17g,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,"
                  "%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.episode, r.step, r.t, r.team, r.id, r.v_d, r.w_d, r.v_obs, r.w_obs, r.vl_cmd, r.vr_cmd, r.x, r.y,
                  r.theta, r.ball_x, r.ball_y, r.score_own, r.score_adv, r.r_goal, r.r_move, r.r_potential, r.r_energy,
                  r.r_total);
    out += buf;
}

}  // namespace

std::vector<LogRow> parse_rollout_log(std::istream& is, const std::string& name) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error(name + ": empty log file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kRolloutHeader) throw std::runtime_error(name + ":1: not a rollout log header");
    std::vector<LogRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 23) throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected 23 fields");
        try {
            std::size_t k = 0;
            const auto i = [&] { return static_cast<int>(detail::parse_int(f[k++])); };
            const auto d = [&] { return detail::parse_double(f[k++]); };
            LogRow r;
            r.episode = i();
            r.step = i();
            r.t = d();
            r.team = i();
            r.id = i();
            r.v_d = d(); r.w_d = d(); r.v_obs = d(); r.w_obs = d(); r.vl_cmd = d(); r.vr_cmd = d();
            r.x = d(); r.y = d(); r.theta = d(); r.ball_x = d(); r.ball_y = d();
            r.score_own = i();
            r.score_adv = i();
            r.r_goal = d(); r.r_move = d(); r.r_potential = d(); r.r_energy = d(); r.r_total = d();
            if (r.team != 0 && r.team != 1) throw std::invalid_argument("team");
            rows.push_back(r);
        } catch (const std::exception&) {
            throw std::runtime_error(name + ":" + std::to_string(lineno) + ": malformed row");
        }
    }
    return rows;
}

std::vector<LogRow> load_rollout_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open log " + path);
    return parse_rollout_log(f, path);
}

EpisodeLog run_episode(const RunConfig& cfg, AgentKind agent, int index, std::uint64_t seed) {
    EpisodeConfig ec = cfg.episode;
    ec.seed = seed;
    SoccerEnv env(cfg.spec, ec);
    env.set_action_config(cfg.action_config());
    env.reset();
    const SimSpec& spec = env.spec();
    const double vm = spec.robot.v_max;
    const double L = spec.robot.axle_length;

    std::vector<ScriptedAgent> agents;
    for (std::size_t i = 0; i < env.world().robots_blue.size(); ++i)
        agents.emplace_back(agent, spec, cfg.action_config(), Rng(seed).fork(1000 + i).next_u64());

    EpisodeLog log;
    log.summary.episode = index;
    log.summary.seed = seed;
    int step = 0;
    while (!env.done()) {
        const WorldState& w = env.world();
        std::vector<AgentAction> actions;
        std::vector<HighLevelAction> desired;
        for (std::size_t i = 0; i < w.robots_blue.size(); ++i) {
            AgentAction a = agents[i].act(w, w.robots_blue[i]);
            if (const auto* hl = std::get_if<HighLevelAction>(&a)) {
                desired.push_back(*hl);
            } else {
                const auto& c = std::get<WheelCommand>(a);
                const double l = c.left() * vm / 100.0;
                const double r = c.right() * vm / 100.0;
                desired.push_back({(l + r) / 2.0, (r - l) / L});
            }
            actions.push_back(std::move(a));
        }
        const auto res = env.step(actions);
        ++step;
        const WorldState& now = env.world();
        log.goal_rewards.push_back(res.rewards.empty() ? 0.0 : res.rewards.front().r_goal);
        for (std::size_t i = 0; i < now.robot_count(); ++i) {
            const RobotState& r = now.robot(i);
            LogRow row;
            row.episode = index;
            row.step = step;
            row.t = now.elapsed;
            row.team = r.team == Team::blue ? 0 : 1;
            row.id = r.id;
            row.v_obs = r.forward_speed();
            row.w_obs = r.twist.omega;
            if (i < desired.size()) {
                row.v_d = desired[i].v;
                row.w_d = desired[i].omega;
                const auto c = std::holds_alternative<WheelCommand>(actions[i])
                                   ? std::get<WheelCommand>(actions[i])
                                   : continuous_to_wheels(clamp_action(desired[i], env.action_config().v_max,
                                                                       env.action_config().omega_max),
                                                          L, vm);
                row.vl_cmd = c.left() * vm / 100.0;
                row.vr_cmd = c.right() * vm / 100.0;
                const auto& rb = res.rewards[i];
                row.r_goal = rb.r_goal;
                row.r_move = rb.r_move;
                row.r_potential = rb.r_potential_grad;
                row.r_energy = rb.r_energy;
                row.r_total = rb.total;
                auto& sums = log.summary.rewards;
                sums.goal += rb.r_goal;
                sums.move += rb.r_move;
                sums.potential += rb.r_potential_grad;
                sums.energy += rb.r_energy;
                sums.total += rb.total;
            }
            row.x = r.pose.x;
            row.y = r.pose.y;
            row.theta = r.pose.theta;
            row.ball_x = now.ball.position.x;
            row.ball_y = now.ball.position.y;
            row.score_own = now.score.own;
            row.score_adv = now.score.adversary;
            append_row(log.rows, row);
        }
        if (res.info.goal == Team::blue && !log.summary.steps_to_goal) log.summary.steps_to_goal = step;
    }
    log.summary.steps = step;
    log.summary.score = env.world().score;
    return log;
}

RolloutResult run_rollout(const RunConfig& cfg, const RolloutOptions& opt) {
    cfg.validate();
    if (opt.episodes < 0) throw std::invalid_argument("episodes must be >= 0");
    std::vector<EpisodeLog> logs(static_cast<std::size_t>(opt.episodes));
    std::atomic<int> next{0};
    std::vector<std::string> errors(logs.size());
    const auto worker = [&] {
        for (int i = next++; i < opt.episodes; i = next++) {
            try {
                logs[i] = run_episode(cfg, opt.agent, i, episode_seed(opt.seed, i));
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int n_threads = std::max(1, std::min(opt.threads, opt.episodes));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error(e);

    RolloutResult out;
    out.log_csv = std::string(kRolloutHeader) + "\n";
    std::vector<double> goals;
    std::vector<EpisodeSummary> summaries;
    for (auto& l : logs) {
        out.log_csv += l.rows;
        goals.insert(goals.end(), l.goal_rewards.begin(), l.goal_rewards.end());
        summaries.push_back(l.summary);
    }
    out.report = make_report(std::move(summaries), goals, opt.window);
    return out;
}

MetricsReport metrics_from_log(const std::vector<LogRow>& rows, int window) {
    std::vector<EpisodeSummary> eps;
    std::vector<double> goals;
    int last_step = -1;
    for (const auto& r : rows) {
        if (eps.empty() || eps.back().episode != r.episode) {
            eps.push_back({});
            eps.back().episode = r.episode;
            last_step = -1;
        }
        auto& e = eps.back();
        if (r.step != last_step) {
            goals.push_back(0.0);
            last_step = r.step;
            e.steps = r.step;
        }
        e.score = {r.score_own, r.score_adv};
        if (r.team != 0) continue;
        if (r.id == 0 || r.r_goal != 0.0) goals.back() = r.r_goal;
        if (r.r_goal > 0.0 && !e.steps_to_goal) e.steps_to_goal = r.step;
        e.rewards.goal += r.r_goal;
        e.rewards.move += r.r_move;
        e.rewards.potential += r.r_potential;
        e.rewards.energy += r.r_energy;
        e.rewards.total += r.r_total;
    }
    return make_report(std::move(eps), goals, window);
}

std::string render_svg(const std::vector<LogRow>& frame, const SimSpec& spec) {
    const auto& f = spec.field;
    const double W = 2.0 * f.half_length_total();
    const double H = 2.0 * f.half_width;
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << -W / 2 - 5 << ' ' << -H / 2 - 15 << ' ' << W + 10
       << ' ' << H + 20 << "\" width=\"" << (W + 10) * 4 << "\" height=\"" << (H + 20) * 4 << "\">\n";
    os << "<g transform=\"scale(1,-1)\">\n";
    os << "<rect x=\"" << -f.play_half_length << "\" y=\"" << -f.half_width << "\" width=\"" << 2 * f.play_half_length
       << "\" height=\"" << H << "\" fill=\"#2e7d32\" stroke=\"white\" stroke-width=\"0.8\"/>\n";
    for (double s : {-1.0, 1.0}) {
        const double x = s > 0 ? f.play_half_length : -f.half_length_total();
        os << "<rect x=\"" << x << "\" y=\"" << -f.goal_half_width << "\" width=\"" << f.pocket_depth << "\" height=\""
           << 2 * f.goal_half_width << "\" fill=\"#1b5e20\" stroke=\"white\" stroke-width=\"0.8\"/>\n";
    }
    os << "<line x1=\"0\" y1=\"" << -f.half_width << "\" x2=\"0\" y2=\"" << f.half_width
       << "\" stroke=\"white\" stroke-width=\"0.4\"/>\n";
    const double rr = spec.robot.body_radius;
    for (const auto& r : frame) {
        const char* fill = r.team == 0 ? "#1565c0" : "#f9a825";
        os << "<g transform=\"translate(" << r.x << ',' << r.y << ") rotate(" << r.theta * 180.0 / kPi << ")\">"
           << "<rect x=\"" << -rr << "\" y=\"" << -rr << "\" width=\"" << 2 * rr << "\" height=\"" << 2 * rr
           << "\" fill=\"" << fill << "\"/>"
           << "<line x1=\"0\" y1=\"0\" x2=\"" << rr << "\" y2=\"0\" stroke=\"black\" stroke-width=\"1\"/></g>\n";
    }
    if (!frame.empty())
        os << "<circle cx=\"" << frame.front().ball_x << "\" cy=\"" << frame.front().ball_y << "\" r=\""
           << spec.ball.radius << "\" fill=\"#ff6f00\"/>\n";
    os << "</g>\n";
    if (!frame.empty()) {
        const auto& r = frame.front();
        os << "<text x=\"0\" y=\"" << -f.half_width - 5 << "\" font-size=\"8\" text-anchor=\"middle\" fill=\"black\">"
           << r.score_own << " : " << r.score_adv << "  ep " << r.episode << "  step " << r.step << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

ReplayResult replay_log(const std::vector<LogRow>& rows, const SimSpec& spec, const std::filesystem::path& out) {
    std::filesystem::create_directories(out);
    ReplayResult res;
    std::size_t i = 0;
    while (i < rows.size()) {
        std::size_t j = i;
        while (j < rows.size() && rows[j].episode == rows[i].episode && rows[j].step == rows[i].step) ++j;
        const std::vector<LogRow> frame(rows.begin() + static_cast<std::ptrdiff_t>(i),
                                        rows.begin() + static_cast<std::ptrdiff_t>(j));
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%06d.svg", ++res.frames);
        std::ofstream f(out / name);
        f << render_svg(frame, spec);
        if (!f) throw std::runtime_error("cannot write " + (out / name).string());
        res.final_scores[rows[i].episode] = {rows[i].score_own, rows[i].score_adv};
        i = j;
    }
    return res;
}

std::string utc_now_iso8601() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::ordered_json make_manifest(const std::string& command, const RunConfig& cfg, std::uint64_t seed,
                                     const nlohmann::ordered_json& args, const std::vector<std::string>& outputs) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["version"] = kVersionTag;
    j["seed"] = seed;
    j["start_time"] = utc_now_iso8601();
    j["args"] = args;
    j["config"] = config_to_map(cfg);
    j["config_text"] = config_to_text(cfg);
    j["outputs"] = outputs;
    return j;
}

RunConfig load_config_or_manifest(const std::string& path) {
    if (std::filesystem::path(path).extension() == ".json") {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("cannot open manifest " + path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(f);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": " + e.what());
        }
        if (!j.contains("config_text")) throw std::runtime_error(path + ": manifest has no config_text");
        return parse_config(j["config_text"].get<std::string>(), path);
    }
    return load_config(path);
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
    f.flush();
    if (!f) throw std::runtime_error("write failed: " + p.string());
}

}  // namespace vsrl
