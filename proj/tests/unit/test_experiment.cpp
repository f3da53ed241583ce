#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "homopinn/experiment.hpp"

namespace fs = std::filesystem;

namespace homopinn {
namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("homopinn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every line has the header's column count.
int check_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  EXPECT_TRUE(static_cast<bool>(std::getline(in, line))) << p;
  const auto cols = std::count(line.begin(), line.end(), ',');
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), cols) << p << ": " << line;
    ++rows;
  }
  return rows;
}

TEST(Presets, SchedulesResolveExactly) {
  const EpsSchedule a = make_preset("ac1d-table1").schedule.build();
  EXPECT_EQ(a.size(), 91u);
  EXPECT_DOUBLE_EQ(a.head(), 0.1);
  EXPECT_DOUBLE_EQ(a.tail(), 0.01);
  EXPECT_NEAR(a.step(1), 0.001, 1e-12);

  const EpsSchedule h = make_preset("highfreq-table5").schedule.build();
  ASSERT_EQ(h.size(), 8u);
  for (int k = 0; k < 8; ++k) EXPECT_DOUBLE_EQ(h[k], 1.0 / (15 + 5 * k));

  const EpsSchedule s = make_preset("ac2d").schedule.build();
  ASSERT_EQ(s.size(), 20u);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_DOUBLE_EQ(s[9], 0.1);
  EXPECT_DOUBLE_EQ(s[10], 0.09);
  EXPECT_EQ(s.tail(), 0.0);

  const EpsSchedule m = make_preset("helmholtz-d5").schedule.build();
  ASSERT_EQ(m.size(), 19u);
  EXPECT_DOUBLE_EQ(m[8], 0.2);
  EXPECT_DOUBLE_EQ(m[9], 0.19);
  EXPECT_DOUBLE_EQ(m.tail(), 0.1);
}

TEST(Presets, AllValidateAndUnknownRejected) {
  for (const auto& name : preset_names()) EXPECT_NO_THROW(validate_config(make_preset(name))) << name;
  try {
    make_preset("nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
  }
}

TEST(Config, IncreasingScheduleRejected) {
  try {
    parse_config_text(R"({"schedule": {"values": [0.01, 0.1]}})");
    FAIL() << "expected schedule error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::schedule);
    EXPECT_NE(std::string(e.what()).find("schedule must strictly decrease"), std::string::npos);
  }
}

TEST(Config, SyntaxErrorNamesLine) {
  try {
    parse_config_text("{\n  \"seed\": 1,\n  oops\n}");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, FieldErrorsNameTheField) {
  try {
    parse_config_text(R"({"collocation": {"n_res": "many"}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("collocation.n_res"), std::string::npos) << e.what();
  }
  try {
    parse_config_text(R"({"phase1": {"learning_rate": 1e-3}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("phase1.learning_rate"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config_text(R"({"strategy": "s3"})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"dim": 2})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"phase1": {"lr": -1}})"), ConfigError);
}

TEST(Config, PresetThenOverrides) {
  const ExperimentConfig c = parse_config_text(
      R"({"preset": "ac1d-table1", "strategy": "s2", "seed": 7, "step": {"max_epochs": 12},
          "phase1": {"tolerance": null}})");
  EXPECT_EQ(c.strategy, Strategy::s2);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.step.seed, 7u);
  EXPECT_EQ(c.step.max_epochs, 12);
  EXPECT_DOUBLE_EQ(c.step.optimizer.lr, 1e-4);
  EXPECT_FALSE(c.phase1.stops_early());
  EXPECT_DOUBLE_EQ(c.phase1.svd_rtol, 1e-3);
  EXPECT_EQ(c.homotopy_epochs(), 50000 + 90 * 12);
}

TEST(Config, SeedEnvironmentOverride) {
  setenv("HOMOPINN_SEED", "42", 1);
  const ExperimentConfig c = parse_config_text(R"({"preset": "ac1d-table1", "seed": 3})");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.phase1.seed, 42u);
  setenv("HOMOPINN_SEED", "x1", 1);
  EXPECT_THROW(parse_config_text(R"({"preset": "ac1d-table1"})"), ConfigError);
  unsetenv("HOMOPINN_SEED");
}

TEST(Config, JsonRoundTrip) {
  for (const auto& name : preset_names()) {
    const json a = config_to_json(make_preset(name));
    const json b = config_to_json(config_from_json(a));
    EXPECT_EQ(a, b) << name;
  }
}

ExperimentConfig tiny_config(const fs::path& out, Strategy s) {
  ExperimentConfig c = make_preset("ac1d-table1");
  c.strategy = s;
  c.phase1.max_epochs = 60;
  c.step.max_epochs = 20;
  c.schedule.segments = {{0.1, 0.096, 0.002}};
  c.report_eps = {0.1, 0.098};
  c.checkpoint_every = 1;
  c.output = out.string();
  return c;
}

TEST(Run, WritesArtifactsWithFixedSchemas) {
  const fs::path out = scratch_dir("artifacts");
  const RunOutput r = run_experiment(tiny_config(out, Strategy::s2), false);
  for (const char* f : {"history.csv", "steps.csv", "profiles.csv", "solution.csv", "kernel.csv",
                        "summary.json", "final.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_EQ(check_csv(out / "history.csv"), 60 + 2 * 20);
  EXPECT_EQ(check_csv(out / "steps.csv"), 3);
  EXPECT_EQ(check_csv(out / "solution.csv"), 1024);
  EXPECT_EQ(check_csv(out / "kernel.csv"), 5);
  check_csv(out / "profiles.csv");
  for (const char* f : {"step_0000.json", "step_0001.json", "step_0002.json"}) {
    EXPECT_TRUE(fs::exists(out / "checkpoints" / f)) << f;
  }
  const json s = json::parse(read_file(out / "summary.json"));
  EXPECT_EQ(s["status"], "ok");
  EXPECT_EQ(s["steps"], 2);
  EXPECT_EQ(s["epochs"], 100);
  EXPECT_TRUE(s["l2re_at"].contains("0.1"));
  EXPECT_TRUE(s["l2re_at"].contains("0.098"));
  EXPECT_DOUBLE_EQ(s["final_loss"].get<double>(), r.summary.final_loss);
}

TEST(Run, ReplayFromEchoedConfigIsBitwise) {
  const fs::path out = scratch_dir("replay");
  const RunOutput first = run_experiment(tiny_config(out / "a", Strategy::s2), false);
  const json s = json::parse(read_file(out / "a" / "summary.json"));
  ExperimentConfig again = config_from_json(s["config"]);
  again.output = (out / "b").string();
  const RunOutput second = run_experiment(again, false);
  EXPECT_EQ(first.summary.final_loss, second.summary.final_loss);
  EXPECT_EQ(first.params, second.params);
}

TEST(Run, ClassicalGetsTheHomotopyBudget) {
  const fs::path out = scratch_dir("classical");
  ExperimentConfig c = tiny_config(out, Strategy::s2);
  const long budget = c.homotopy_epochs();
  c.strategy = Strategy::classical;
  c.phase1.max_epochs = budget;
  const RunOutput r = run_experiment(c, false);
  EXPECT_EQ(r.summary.epochs, budget);
  EXPECT_DOUBLE_EQ(r.summary.final_eps, 0.096);
}

TEST(Run, FailureIsRecordedInSummary) {
  const fs::path out = scratch_dir("failure");
  ExperimentConfig c = tiny_config(out, Strategy::s1);
  c.phase1.divergence_limit = 1e-9;
  EXPECT_THROW(run_experiment(c, false), DivergenceError);
  const json s = json::parse(read_file(out / "summary.json"));
  EXPECT_EQ(s["status"], "error");
  EXPECT_EQ(s["error"]["kind"], "divergence");
}

// The CLI binary path is injected by CMake.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(HOMOPINN_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST(Cli, IncreasingScheduleExitsWithTwo) {
  const fs::path dir = scratch_dir("cli_sched");
  std::ofstream(dir / "bad.json") << R"({"schedule": {"values": [0.01, 0.02]}})";
  EXPECT_EQ(run_cli("run " + (dir / "bad.json").string(), dir / "log.txt"), 2);
  EXPECT_NE(read_file(dir / "log.txt").find("schedule must strictly decrease"), std::string::npos);
}

TEST(Cli, SweepRejectsEmptyValues) {
  const fs::path dir = scratch_dir("cli_empty");
  std::ofstream(dir / "c.json") << "{}";
  EXPECT_EQ(run_cli("sweep " + (dir / "c.json").string() + " --axis seed --values ,", dir / "log.txt"), 2);
}

TEST(Cli, SeedSweepMakesOneDirectoryPerCell) {
  const fs::path dir = scratch_dir("cli_sweep");
  std::ofstream(dir / "c.json") << config_to_json(tiny_config(dir / "unused", Strategy::s1)).dump();
  ASSERT_EQ(run_cli("sweep " + (dir / "c.json").string() +
                        " --axis seed --values 0,1,2 --jobs 2 --out " + (dir / "out").string(),
                    dir / "log.txt"),
            0)
      << read_file(dir / "log.txt");
  for (const char* sub : {"seed_0", "seed_1", "seed_2"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / sub / "summary.json")) << sub;
  }
  EXPECT_EQ(check_csv(dir / "out" / "aggregate.csv"), 3);
}

TEST(Cli, PresetCommandPrintsParsableConfig) {
  const fs::path dir = scratch_dir("cli_preset");
  ASSERT_EQ(run_cli("preset highfreq-table5", dir / "p.json"), 0);
  const ExperimentConfig c = config_from_json(json::parse(read_file(dir / "p.json")));
  EXPECT_EQ(c.problem, "highfreq");
  EXPECT_EQ(run_cli("preset bogus", dir / "log.txt"), 2);
}

}  // namespace
}  // namespace homopinn
