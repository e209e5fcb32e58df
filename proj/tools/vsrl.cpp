#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vsrl/vsrl.hpp"

namespace fs = std::filesystem;
using namespace vsrl;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct Globals {
    std::string config;
    std::uint64_t seed = 0;
    std::string out = "run";
    std::vector<std::string> overrides;
};

RunConfig resolve_config(const Globals& g) {
    RunConfig cfg = g.config.empty() ? RunConfig{} : load_config_or_manifest(g.config);
    for (const auto& o : g.overrides) apply_override(cfg, o);
    cfg.validate();
    return cfg;
}

fs::path prepare_out(const Globals& g) {
    const fs::path out(g.out);
    fs::create_directories(out);
    return out;
}

void write_manifest(const fs::path& out, const std::string& command, const RunConfig& cfg, const Globals& g,
                    const nlohmann::ordered_json& args, const std::vector<std::string>& outputs) {
    write_text(out / "manifest.json", make_manifest(command, cfg, g.seed, args, outputs).dump(2) + "\n");
}

PseudoRealPlant pick_plant(const std::string& name, const RunConfig& cfg) {
    if (name == "identity") return PseudoRealPlant::identity();
    if (name == "config") return cfg.plant;
    throw std::invalid_argument("unknown plant '" + name + "' (expected identity or config)");
}

std::string fmt(double v, int prec = 1) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robot soccer simulator, sim-to-real adaptor and wire protocol tools"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "config file (sectioned key = value) or run manifest.json");
    app.add_option("--seed", g.seed, "base random seed");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--set", g.overrides, "override a config value, e.g. --set env.max_duration=60");

    // rollout
    auto* rollout = app.add_subcommand("rollout", "run seeded episodes with a scripted agent")->fallthrough();
    std::string agent_name = "goto-ball-goal";
    int episodes = 10;
    int threads = 1;
    int window = kGoalWindow;
    rollout->add_option("--agent", agent_name, "still | random | chase | goto-ball-goal");
    rollout->add_option("--episodes", episodes)->check(CLI::NonNegativeNumber);
    rollout->add_option("--threads", threads)->check(CLI::PositiveNumber);
    rollout->add_option("--window", window)->check(CLI::PositiveNumber);

    // collect
    auto* collect = app.add_subcommand("collect", "record an inverse-dynamics trajectory log")->fallthrough();
    double duration = -1.0;
    std::size_t identity_samples = 0;
    std::string plant_name = "config";
    collect->add_option("--duration", duration, "seconds of excitation (default from config)");
    collect->add_option("--identity", identity_samples, "write N synthetic exact-kinematics samples instead");
    collect->add_option("--plant", plant_name, "identity | config");

    // train-adaptor
    auto* train = app.add_subcommand("train-adaptor", "train the adaptor network on a trajectory log")->fallthrough();
    std::string data_path;
    train->add_option("--data", data_path)->required();
    int epochs = -1;
    train->add_option("--epochs", epochs);

    // eval-adaptor
    auto* eval = app.add_subcommand("eval-adaptor", "closed-loop comparison with and without the adaptor")->fallthrough();
    std::string model_path;
    int eval_episodes = -1;
    eval->add_option("--model", model_path)->required();
    eval->add_option("--episodes", eval_episodes);
    eval->add_option("--plant", plant_name, "identity | config");

    // serve
    auto* serve = app.add_subcommand("serve", "run the UDP server over a live world")->fallthrough();
    int port = -1;
    int state_port = -1;
    bool lock_step = false;
    std::uint64_t frames = 0;
    serve->add_option("--port", port, "command port");
    serve->add_option("--state-port", state_port, "state destination port");
    serve->add_flag("--lock-step", lock_step);
    serve->add_option("--frames", frames, "stop after N steps (0 = until interrupted)");

    // replay
    auto* replay = app.add_subcommand("replay", "render a rollout log to SVG frames")->fallthrough();
    std::string log_path;
    replay->add_option("--log", log_path)->required();

    // metrics
    auto* metrics = app.add_subcommand("metrics", "recompute the metrics report of a rollout log")->fallthrough();
    metrics->add_option("--log", log_path)->required();
    metrics->add_option("--window", window)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const RunConfig cfg = resolve_config(g);

        if (*rollout) {
            const auto kind = parse_agent_kind(agent_name);
            if (!kind) throw std::invalid_argument("unknown agent '" + agent_name + "'");
            const fs::path out = prepare_out(g);
            const auto res = run_rollout(cfg, {*kind, episodes, g.seed, threads, window});
            write_text(out / "rollout.csv", res.log_csv);
            write_text(out / "report.json", to_json(res.report).dump(2) + "\n");
            write_manifest(out, "rollout", cfg, g,
                           {{"agent", agent_name}, {"episodes", episodes}, {"threads", threads}, {"window", window}},
                           {"rollout.csv", "report.json"});
            const auto& r = res.report;
            std::cout << "episodes " << r.episodes << ", scored " << r.episodes_scored << ", steps-to-goal "
                      << (r.steps_to_goal ? fmt(r.steps_to_goal->mean) + " +- " + fmt(r.steps_to_goal->sd)
                                          : std::string("undefined (no goals)"))
                      << "\n";
        } else if (*collect) {
            const fs::path out = prepare_out(g);
            std::vector<TrajectorySample> data;
            if (identity_samples > 0) {
                data = identity_dataset(identity_samples, cfg.spec.robot, g.seed);
            } else {
                CollectConfig cc = cfg.collect;
                if (duration >= 0.0) cc.duration = duration;
                cc.seed = g.seed;
                data = collect_trajectories(pick_plant(plant_name, cfg), cfg.spec, cc);
            }
            write_trajectory_csv((out / "trajectory.csv").string(), data);
            write_manifest(out, "collect", cfg, g,
                           {{"duration", duration}, {"identity", identity_samples}, {"plant", plant_name}},
                           {"trajectory.csv"});
            std::cout << data.size() << " samples\n";
        } else if (*train) {
            const auto data = read_trajectory_csv(data_path);
            if (data.empty()) throw std::runtime_error(data_path + ": no samples");
            TrainConfig tc = cfg.training;
            tc.seed = g.seed;
            if (epochs > 0) tc.epochs = epochs;
            const fs::path out = prepare_out(g);
            const auto params = mlp_train(data, tc);
            save_model(params, (out / "model.vsmlp").string());
            std::string hist = "epoch,train_loss,val_loss,val_rmse\n";
            for (const auto& h : params.history) {
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", h.epoch, h.train_loss, h.val_loss, h.val_rmse);
                hist += buf;
            }
            write_text(out / "loss_history.csv", hist);
            write_manifest(out, "train-adaptor", cfg, g, {{"data", data_path}, {"epochs", tc.epochs}},
                           {"model.vsmlp", "loss_history.csv"});
            std::cout << "validation RMSE " << fmt(params.history.back().val_rmse, 4) << " cm/s ("
                      << fmt(100.0 * params.history.back().val_rmse / cfg.spec.robot.v_max, 3) << "% of v_max)\n";
        } else if (*eval) {
            const auto model = load_model(model_path);
            EvalConfig ec = cfg.eval;
            ec.seed = g.seed;
            if (eval_episodes > 0) ec.episodes = eval_episodes;
            const auto plant = pick_plant(plant_name, cfg);
            const fs::path out = prepare_out(g);
            const auto r = compare_adaptor(cfg.spec, plant, model, ec);
            const auto arm = [](const char* name, const ArmResult& a) {
                std::cout << name << fmt(a.summary.mean) << " +- " << fmt(a.summary.sd) << "  (" << a.goals << "/"
                          << a.episodes << " scored)\n";
            };
            std::cout << "steps to goal over " << ec.episodes << " episodes\n";
            arm("  unperturbed baseline   ", r.baseline);
            arm("  plant, no adaptor      ", r.perturbed);
            arm("  plant, adaptor         ", r.adapted);
            std::cout << "  ratio adapted/no-adaptor " << fmt(r.ratio, 3) << "\n"
                      << "  Welch t adapted vs no-adaptor  t=" << fmt(r.vs_perturbed.t, 3)
                      << " p=" << fmt(r.vs_perturbed.p_value, 4) << "\n"
                      << "  Welch t adapted vs baseline    t=" << fmt(r.vs_baseline.t, 3)
                      << " p=" << fmt(r.vs_baseline.p_value, 4) << "\n";
            const auto arm_json = [](const ArmResult& a) {
                return nlohmann::ordered_json{{"mean", a.summary.mean}, {"sd", a.summary.sd}, {"goals", a.goals},
                                              {"episodes", a.episodes}, {"steps", a.steps}};
            };
            nlohmann::ordered_json j;
            j["baseline"] = arm_json(r.baseline);
            j["no_adaptor"] = arm_json(r.perturbed);
            j["adaptor"] = arm_json(r.adapted);
            j["ratio"] = r.ratio;
            j["vs_no_adaptor"] = {{"t", r.vs_perturbed.t}, {"df", r.vs_perturbed.df}, {"p_value", r.vs_perturbed.p_value}};
            j["vs_baseline"] = {{"t", r.vs_baseline.t}, {"df", r.vs_baseline.df}, {"p_value", r.vs_baseline.p_value}};
            write_text(out / "eval.json", j.dump(2) + "\n");
            write_manifest(out, "eval-adaptor", cfg, g,
                           {{"model", model_path}, {"episodes", ec.episodes}, {"plant", plant_name}}, {"eval.json"});
        } else if (*serve) {
            ServerConfig sc = cfg.server_config();
            if (port >= 0) sc.command_port = static_cast<std::uint16_t>(port);
            if (state_port >= 0) sc.state_port = static_cast<std::uint16_t>(state_port);
            if (lock_step) sc.lock_step = true;
            sc.max_frames = frames;
            EpisodeConfig ec = cfg.episode;
            ec.seed = g.seed;
            ServerCore core(cfg.spec, ec, sc);
            UdpServer server(core);
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "serving commands on " << sc.bind_host << ":" << server.command_port() << ", state to "
                      << sc.state_host << ":" << sc.state_port << (sc.lock_step ? " (lock-step)" : "") << std::endl;
            server.run(g_stop);
            const auto& st = core.stats();
            std::cout << "frames " << core.frames() << ", datagrams " << st.datagrams << ", rejected " << st.rejected
                      << ", score " << core.world().score.own << ":" << core.world().score.adversary << "\n";
        } else if (*replay) {
            const auto rows = load_rollout_log(log_path);
            const fs::path out = prepare_out(g);
            const auto r = replay_log(rows, cfg.spec, out);
            write_manifest(out, "replay", cfg, g, {{"log", log_path}}, {"frame_*.svg"});
            std::cout << r.frames << " frames\n";
            for (const auto& [ep, s] : r.final_scores)
                std::cout << "episode " << ep << " final score " << s.own << ":" << s.adversary << "\n";
        } else if (*metrics) {
            const auto rows = load_rollout_log(log_path);
            const auto report = metrics_from_log(rows, window);
            const fs::path out = prepare_out(g);
            write_text(out / "report.json", to_json(report).dump(2) + "\n");
            write_manifest(out, "metrics", cfg, g, {{"log", log_path}, {"window", window}}, {"report.json"});
            std::cout << "episodes " << report.episodes << ", scored " << report.episodes_scored << ", steps-to-goal "
                      << (report.steps_to_goal
                              ? fmt(report.steps_to_goal->mean) + " +- " + fmt(report.steps_to_goal->sd)
                              : std::string("undefined (no goals)"))
                      << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
