#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "vsrl/commands.hpp"

using namespace vsrl;
namespace fs = std::filesystem;

namespace {

struct RunOutput {
    int status = -1;
    std::string text;  // stdout and stderr
};

RunOutput run_cli(const std::string& args) {
    const std::string cmd = std::string(VSRL_CLI) + " " + args + " 2>&1";
    RunOutput out;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return out;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), p)) > 0) out.text.append(buf, n);
    const int st = ::pclose(p);
    out.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("vsrl_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

RunConfig quick_config() {
    RunConfig c;
    c.episode.max_duration = 10;
    c.episode.reset_mode = ResetMode::uniform_random;
    return c;
}

}  // namespace

TEST(Config, ParsesSectionsAndComments) {
    const auto c = parse_config(
        "# comment\n[physics]\nsubsteps = 20 ; trailing\nwall_restitution=0.5\n\n[env]\nreset_mode = uniform_random\n"
        "with_opponents = false\n[training]\nprev_is_command = true\n",
        "x.cfg");
    EXPECT_EQ(c.spec.physics.substeps, 20);
    EXPECT_DOUBLE_EQ(c.spec.physics.wall_restitution, 0.5);
    EXPECT_EQ(c.episode.reset_mode, ResetMode::uniform_random);
    EXPECT_FALSE(c.episode.with_opponents);
    EXPECT_EQ(c.collect.prev, PrevInput::command);
    EXPECT_EQ(c.eval.prev, PrevInput::command);
}

TEST(Config, ErrorsCarryFileAndLine) {
    const auto err = [](const std::string& text) {
        try {
            parse_config(text, "run.cfg");
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_EQ(err("[physics]\nsubsteps = ten\n"), "run.cfg:2: physics.substeps: bad value 'ten' (not an integer)");
    EXPECT_EQ(err("[physics]\nnope = 1\n"), "run.cfg:2: unknown config key physics.nope");
    EXPECT_EQ(err("substeps = 1\n"), "run.cfg:1: key outside any section");
    EXPECT_EQ(err("[env\n"), "run.cfg:1: unterminated section header");
    EXPECT_EQ(err("[env]\nmax_duration\n"), "run.cfg:2: expected key = value");
    EXPECT_EQ(err("[env]\nend_on_goal = maybe\n"), "run.cfg:2: env.end_on_goal: bad value 'maybe' (not a boolean)");
    EXPECT_THROW(load_config("/nonexistent/run.cfg"), std::runtime_error);
}

TEST(Config, OverridesAndTextRoundTrip) {
    RunConfig c;
    apply_override(c, "env.max_duration=60");
    apply_override(c, "channel.seed = 18446744073709551615");
    EXPECT_DOUBLE_EQ(c.episode.max_duration, 60.0);
    EXPECT_EQ(c.channel.seed, 18446744073709551615ULL);
    EXPECT_THROW(apply_override(c, "max_duration=60"), std::invalid_argument);
    EXPECT_THROW(apply_override(c, "channel.seed=-1"), std::invalid_argument);
    EXPECT_THROW(apply_override(c, "channel.seed=18446744073709551616"), std::invalid_argument);
    RunConfig bad = c;
    apply_override(bad, "env.n_per_team=-1");
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    c.spec.field.half_width = 1.0 / 3.0;
    const auto back = parse_config(config_to_text(c), "roundtrip");
    EXPECT_EQ(config_to_text(back), config_to_text(c));
    EXPECT_EQ(back.spec.field.half_width, 1.0 / 3.0);
}

TEST(Metrics, SingleGoalWindow) {
    std::vector<double> g(1000, 0.0);
    const int k = 437;
    g[k] = 1.0;
    const auto s = windowed_goal_score(g, 100);
    for (int t = 0; t < 1000; ++t) EXPECT_EQ(s[t], (t >= k - 99 && t <= k) ? 1.0 : 0.0) << t;
    g[k] = 0.0;
    g[5] = 1.0;
    const auto early = windowed_goal_score(g, 100);
    EXPECT_EQ(early[0], 1.0);
    EXPECT_EQ(early[6], 0.0);
    EXPECT_THROW(windowed_goal_score(g, 0), std::invalid_argument);
}

TEST(Metrics, StillAgentHasUndefinedStepsToGoal) {
    RolloutOptions opt;
    opt.agent = AgentKind::still;
    opt.episodes = 2;
    const auto r = run_rollout(quick_config(), opt);
    EXPECT_FALSE(r.report.steps_to_goal);
    EXPECT_EQ(r.report.episodes_scored, 0);
    EXPECT_TRUE(to_json(r.report)["steps_to_goal"].is_null());
}

TEST(Rollout, ThreadCountDoesNotChangeOutput) {
    RolloutOptions opt;
    opt.episodes = 4;
    opt.seed = 7;
    const auto a = run_rollout(quick_config(), opt);
    opt.threads = 3;
    const auto b = run_rollout(quick_config(), opt);
    EXPECT_EQ(a.log_csv, b.log_csv);
    EXPECT_EQ(to_json(a.report).dump(), to_json(b.report).dump());
}

TEST(Rollout, LogReproducesReport) {
    RolloutOptions opt;
    opt.episodes = 3;
    opt.seed = 11;
    auto cfg = quick_config();
    cfg.episode.max_duration = 30;
    const auto r = run_rollout(cfg, opt);
    std::istringstream is(r.log_csv);
    const auto rows = parse_rollout_log(is);
    auto expect = to_json(r.report);
    for (auto& e : expect["per_episode"]) e["seed"] = 0;
    auto got = to_json(metrics_from_log(rows));
    // sums are re-accumulated from printed values
    for (auto* j : {&expect, &got})
        for (auto& e : (*j)["per_episode"]) e.erase("rewards");
    EXPECT_EQ(got.dump(), expect.dump());
    EXPECT_GT(r.report.episodes_scored, 0);
}

TEST(Rollout, ChaseScoresOnEmptyField) {
    RunConfig cfg;
    cfg.episode.with_opponents = false;
    cfg.episode.max_duration = 60;
    RolloutOptions opt;
    opt.agent = AgentKind::chase;
    opt.episodes = 100;
    opt.seed = 3;
    const auto r = run_rollout(cfg, opt);
    int goals = 0;
    for (const auto& e : r.report.per_episode) goals += e.score.own;
    EXPECT_GE(goals, 95);
}

TEST(Replay, OneFramePerStepAndFinalScores) {
    RolloutOptions opt;
    opt.episodes = 2;
    opt.seed = 5;
    auto cfg = quick_config();
    cfg.episode.reset_mode = ResetMode::kickoff;
    cfg.episode.with_opponents = false;
    cfg.episode.max_duration = 20;
    const auto r = run_rollout(cfg, opt);
    std::istringstream is(r.log_csv);
    const auto rows = parse_rollout_log(is);
    const auto dir = scratch("replay");
    const auto res = replay_log(rows, cfg.spec, dir);
    EXPECT_EQ(res.frames, 2 * 600);
    EXPECT_TRUE(fs::exists(dir / "frame_001200.svg"));
    EXPECT_FALSE(fs::exists(dir / "frame_001201.svg"));
    for (const auto& e : r.report.per_episode) EXPECT_EQ(res.final_scores.at(e.episode), e.score);
    EXPECT_NE(slurp(dir / "frame_000001.svg").find("<svg"), std::string::npos);
}

TEST(Replay, TenStepLogGivesTenFiles) {
    auto cfg = quick_config();
    cfg.episode.max_duration = 10.0 / 30.0;
    RolloutOptions opt;
    opt.episodes = 1;
    const auto r = run_rollout(cfg, opt);
    std::istringstream is(r.log_csv);
    const auto dir = scratch("ten");
    EXPECT_EQ(replay_log(parse_rollout_log(is), cfg.spec, dir).frames, 10);
    EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}), 10);
}

TEST(RolloutLog, MalformedRowsReportLine) {
    std::istringstream empty("");
    EXPECT_THROW(parse_rollout_log(empty, "a.csv"), std::runtime_error);
    std::istringstream bad(std::string(kRolloutHeader) + "\n1,2,3\n");
    try {
        parse_rollout_log(bad, "a.csv");
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_EQ(std::string(e.what()).rfind("a.csv:2:", 0), 0u) << e.what();
    }
}

TEST(Cli, RolloutIsReproducibleAndWritesManifest) {
    const auto a = scratch("cli_a");
    const auto b = scratch("cli_b");
    const std::string common = " --seed 7 --set env.max_duration=5 rollout --episodes 2";
    ASSERT_EQ(run_cli("--out " + a.string() + common).status, 0);
    ASSERT_EQ(run_cli("--out " + b.string() + common + " --threads 2").status, 0);
    EXPECT_EQ(slurp(a / "rollout.csv"), slurp(b / "rollout.csv"));
    EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
    const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
    EXPECT_EQ(m["command"], "rollout");
    EXPECT_EQ(m["seed"], 7);
    EXPECT_EQ(m["config"]["env"]["max_duration"], "5");

    // the manifest alone reproduces the run
    const auto c = scratch("cli_c");
    ASSERT_EQ(run_cli("--config " + (a / "manifest.json").string() + " --out " + c.string() + " --seed 7 rollout --episodes 2").status, 0);
    EXPECT_EQ(slurp(a / "rollout.csv"), slurp(c / "rollout.csv"));

    const auto d = scratch("cli_d");
    ASSERT_EQ(run_cli("--out " + d.string() + " metrics --log " + (a / "rollout.csv").string()).status, 0);
    EXPECT_TRUE(fs::exists(d / "report.json"));
}

TEST(Cli, ExitStatusOnErrors) {
    const auto dir = scratch("cli_err");
    EXPECT_NE(run_cli("").status, 0);
    EXPECT_EQ(run_cli("--out " + dir.string() + " rollout --agent dqn").status, 1);
    EXPECT_EQ(run_cli("--out " + dir.string() + " --set env.nope=1 rollout").status, 1);
    EXPECT_EQ(run_cli("--config /nonexistent.cfg rollout").status, 1);
    EXPECT_EQ(run_cli("--out " + dir.string() + " replay --log /nonexistent.csv").status, 1);
    EXPECT_EQ(run_cli("--out " + dir.string() + " eval-adaptor --model /nonexistent.vsmlp").status, 1);
    EXPECT_EQ(run_cli("--out /proc/vsrl_cannot_write rollout --episodes 1").status, 1);
    EXPECT_NE(run_cli("rollout --episodes -3").status, 0);
}

TEST(Cli, EmptyTrainingFileIsNamed) {
    const auto dir = scratch("cli_empty");
    const auto data = dir / "empty.csv";
    std::ofstream(data).close();
    const auto r = run_cli("--out " + dir.string() + " train-adaptor --data " + data.string());
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.text.find(data.string() + ": empty trajectory file"), std::string::npos) << r.text;
}

TEST(Cli, MalformedTrainingRowReportsLine) {
    const auto dir = scratch("cli_bad");
    const auto data = dir / "bad.csv";
    std::ofstream(data) << kTrajectoryHeader << "\n0,1,2,3,4,5,6\n0,1,2,3\n";
    const auto r = run_cli("--out " + dir.string() + " train-adaptor --data " + data.string());
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.text.find(data.string() + ":3:"), std::string::npos) << r.text;
}

TEST(Cli, CollectTrainEvalPipeline) {
    const auto dir = scratch("cli_pipe");
    ASSERT_EQ(run_cli("--out " + dir.string() + " --seed 3 collect --duration 20").status, 0);
    const auto data = (dir / "trajectory.csv").string();
    EXPECT_EQ(read_trajectory_csv(data).size(), 600u);

    const auto a = scratch("cli_train_a");
    const auto b = scratch("cli_train_b");
    ASSERT_EQ(run_cli("--out " + a.string() + " --seed 4 train-adaptor --epochs 3 --data " + data).status, 0);
    ASSERT_EQ(run_cli("--out " + b.string() + " --seed 4 train-adaptor --epochs 3 --data " + data).status, 0);
    EXPECT_EQ(slurp(a / "model.vsmlp"), slurp(b / "model.vsmlp"));
    EXPECT_FALSE(slurp(a / "loss_history.csv").empty());

    const auto r = run_cli("--out " + dir.string() + " --set training.eval_max_duration=5 eval-adaptor --episodes 2 --model " +
                           (a / "model.vsmlp").string());
    ASSERT_EQ(r.status, 0) << r.text;
    const auto j = nlohmann::json::parse(slurp(dir / "eval.json"));
    EXPECT_TRUE(j.contains("ratio"));
    EXPECT_NE(r.text.find("p"), std::string::npos);

    std::ofstream(dir / "junk.vsmlp") << "not a model";
    EXPECT_EQ(run_cli("--out " + dir.string() + " eval-adaptor --model " + (dir / "junk.vsmlp").string()).status, 1);
}

TEST(Cli, ServeRunsFixedFrames) {
    const auto dir = scratch("cli_serve");
    const auto r = run_cli("--out " + dir.string() + " serve --port 0 --state-port 9 --frames 15");
    EXPECT_EQ(r.status, 0) << r.text;
}
