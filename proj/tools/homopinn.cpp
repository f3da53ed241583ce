// Command-line runner: run one experiment, sweep a config along an axis, or
// print a preset config.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "homopinn/experiment.hpp"

namespace fs = std::filesystem;
using namespace homopinn;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError(ErrorKind::parse, "bad sweep value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

// Ends the schedule at eps, dropping entries at or below it.
ScheduleSpec with_final_eps(const ScheduleSpec& spec, double eps) {
  const EpsSchedule s = spec.build();
  ScheduleSpec out;
  for (double e : s.values()) {
    if (e > eps + 1e-12) out.values.push_back(e);
  }
  out.values.push_back(eps);
  return out;
}

ExperimentConfig cell_config(ExperimentConfig base, const std::string& axis, double v,
                             const fs::path& dir) {
  if (axis == "eps") {
    base.schedule = with_final_eps(base.schedule, v);
  } else if (axis == "seed") {
    if (v < 0 || v != std::floor(v)) throw ConfigError(ErrorKind::parse, "seed values must be non-negative integers");
    base.seed = static_cast<std::uint64_t>(v);
    base.phase1.seed = base.step.seed = base.seed;
  } else {
    base.phase1.optimizer.lr = base.step.optimizer.lr = v;
    base.phase1.lr_grid.clear();
    base.step.lr_grid.clear();
  }
  base.output = dir.string();
  validate_config(base);
  return base;
}

int run_command(const std::string& path, const std::string& out_override, bool quiet) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(path);
    if (!out_override.empty()) cfg.output = out_override;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    run_experiment(cfg, !quiet);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

int sweep_command(const std::string& path, const std::string& axis, const std::string& values_text,
                  int jobs, const std::string& out_dir, bool quiet) {
  ExperimentConfig base;
  std::vector<double> values;
  try {
    base = load_config(path);
    values = parse_values(values_text);
    if (values.empty()) throw ConfigError(ErrorKind::parse, "sweep needs at least one value");
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  const fs::path root = out_dir.empty() ? fs::path(base.output) : fs::path(out_dir);

  std::vector<ExperimentConfig> cells;
  try {
    for (double v : values) {
      cells.push_back(cell_config(base, axis, v, root / (axis + "_" + eps_key(v))));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  std::vector<RunSummary> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = run_experiment(cells[i], !quiet && jobs == 1).summary;
      } catch (const Error& e) {
        results[i].status = "error";
        results[i].error_kind = to_string(e.kind());
        results[i].error_message = e.what();
      }
      if (!quiet) {
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << "cell " << axis << "=" << eps_key(values[i]) << ": " << results[i].status
                  << " loss=" << results[i].final_loss << " l2re=" << results[i].final_l2re << '\n';
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  fs::create_directories(root);
  std::ofstream agg(root / "aggregate.csv");
  agg.precision(17);
  agg << "axis,value,status,final_loss,final_l2re,final_eps,epochs,wall_seconds,dir\n";
  bool all_ok = true;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const RunSummary& s = results[i];
    all_ok = all_ok && s.status == "ok";
    agg << axis << ',' << values[i] << ',' << s.status << ',' << s.final_loss << ','
        << s.final_l2re << ',' << s.final_eps << ',' << s.epochs << ',' << s.wall_seconds << ','
        << fs::path(cells[i].output).filename().string() << '\n';
  }
  return all_ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Homotopy-dynamics training for singularly perturbed PDEs"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--out", out_dir, "Output directory (overrides the config)");
  run->add_flag("-q,--quiet", quiet, "No progress output");

  std::string axis, values;
  int jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Run a config across values of one axis");
  sweep->add_option("config", config_path, "Base config file")->required();
  sweep->add_option("--axis", axis, "eps|seed|lr")
      ->required()
      ->check(CLI::IsMember({"eps", "seed", "lr"}));
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--jobs", jobs, "Cells run in parallel")->check(CLI::PositiveNumber);
  sweep->add_option("--out", out_dir, "Root output directory");
  sweep->add_flag("-q,--quiet", quiet, "No progress output");

  std::string preset_name;
  auto* preset = app.add_subcommand("preset", "Print a preset as a JSON config");
  preset->add_option("name", preset_name, "Preset name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  if (run->parsed()) return run_command(config_path, out_dir, quiet);
  if (sweep->parsed()) return sweep_command(config_path, axis, values, jobs, out_dir, quiet);
  if (preset->parsed()) {
    try {
      std::cout << config_to_json(make_preset(preset_name)).dump(2) << '\n';
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitUsage;
    }
  }
  return 0;
}
