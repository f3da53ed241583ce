#pragma once

// Experiment configuration, presets and the run driver behind the CLI.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "homopinn/analysis.hpp"
#include "homopinn/errors.hpp"
#include "homopinn/network.hpp"
#include "homopinn/problems.hpp"
#include "homopinn/reference.hpp"
#include "homopinn/trainer.hpp"

namespace homopinn {

using nlohmann::json;

enum class Strategy { classical, s1, s2 };

inline Strategy parse_strategy(const std::string& s) {
  if (s == "classical") return Strategy::classical;
  if (s == "s1") return Strategy::s1;
  if (s == "s2") return Strategy::s2;
  throw Error(ErrorKind::parse, "unknown strategy '" + s + "' (expected classical|s1|s2)");
}

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::classical: return "classical";
    case Strategy::s1: return "s1";
    case Strategy::s2: return "s2";
  }
  return "?";
}

inline SampleMode parse_sample_mode(const std::string& s) {
  if (s == "grid") return SampleMode::grid;
  if (s == "uniform" || s == "uniform-random") return SampleMode::uniform_random;
  throw Error(ErrorKind::parse, "unknown collocation mode '" + s + "' (expected grid|uniform)");
}

inline const char* to_string(SampleMode m) { return m == SampleMode::grid ? "grid" : "uniform"; }

struct CollocSpec {
  long n_res = 200;
  long n_bc = 2;
  SampleMode mode = SampleMode::grid;
};

// One schedule segment {start, end, step}; an explicit list bypasses them.
struct Segment {
  double start = 0.0;
  double end = 0.0;
  double step = 0.0;
};

struct ScheduleSpec {
  std::vector<double> values;
  std::vector<Segment> segments;

  EpsSchedule build() const {
    if (!values.empty()) return EpsSchedule(values);
    if (segments.empty()) throw Error(ErrorKind::schedule, "schedule is empty");
    EpsSchedule s = EpsSchedule::range(segments[0].start, segments[0].end, segments[0].step);
    for (std::size_t i = 1; i < segments.size(); ++i) {
      if (std::abs(segments[i].start - s.tail()) > 1e-12) {
        throw Error(ErrorKind::schedule, "schedule segments must join end to start");
      }
      s = s.then(EpsSchedule::range(segments[i].start, segments[i].end, segments[i].step));
    }
    return s;
  }
};

struct KernelSpec {
  bool enabled = false;
  int nodes = 8;
  std::vector<double> eps;
};

struct ExperimentConfig {
  std::string preset;
  std::string problem = "ac1d";
  int dim = 1;
  std::vector<int> layers{1, 30, 30, 30, 1};
  std::uint64_t seed = 0;
  CollocSpec colloc;
  ScheduleSpec schedule;
  Strategy strategy = Strategy::s1;
  TrainConfig phase1;  // Phase I, and the classical run
  TrainConfig step;    // per-step optimization of Strategy 2
  std::vector<double> report_eps;
  KernelSpec kernel;
  long checkpoint_every = 10;
  int reference_grid = 256;  // FDM nodes per side for the 2D Allen-Cahn reference
  std::string output = "runs/out";

  // Epochs a classical run gets so it matches the homotopy run's budget.
  long homotopy_epochs() const {
    const EpsSchedule s = schedule.build();
    long total = phase1.max_epochs;
    if (strategy == Strategy::s2) total += static_cast<long>(s.size() - 1) * step.max_epochs;
    return total;
  }
};

// ---------------------------------------------------------------------------
// Presets

namespace detail {

inline TrainConfig adam_config(long epochs, double lr, double tol) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.optimizer.lr = lr;
  c.tolerance = tol;
  return c;
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
  return {"ac1d-table1", "highfreq-table5", "ac2d", "helmholtz-d5"};
}

inline ExperimentConfig make_preset(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  c.output = "runs/" + name;
  if (name == "ac1d-table1") {
    c.problem = "ac1d";
    c.dim = 1;
    c.layers = {1, 30, 30, 30, 1};
    c.colloc = {200, 2, SampleMode::grid};
    c.schedule.segments = {{0.1, 0.01, 0.001}};
    c.strategy = Strategy::s1;
    c.phase1 = detail::adam_config(50000, 1e-3, 1e-14);
    c.phase1.svd_rtol = 1e-3;
    c.step = detail::adam_config(300, 1e-4, 1e-14);
    c.report_eps = {0.1, 0.03, 0.01};
    c.kernel = {true, 8, {1.0, 0.5, 0.1, 0.05, 0.01}};
  } else if (name == "highfreq-table5") {
    c.problem = "highfreq";
    c.dim = 1;
    c.layers = {1, 30, 30, 30, 1};
    c.colloc = {300, 0, SampleMode::grid};
    c.schedule.values = {1.0 / 15, 1.0 / 20, 1.0 / 25, 1.0 / 30,
                         1.0 / 35, 1.0 / 40, 1.0 / 45, 1.0 / 50};
    c.strategy = Strategy::s2;
    c.phase1 = detail::adam_config(20000, 1e-3, 1e-14);
    c.step = detail::adam_config(40000, 1e-4, 1e-14);
    c.step.alpha = 0.0;
    c.report_eps = {1.0 / 15, 1.0 / 35, 1.0 / 50};
    c.kernel = {true, 8, {1.0 / 15, 1.0 / 35, 1.0 / 50}};
  } else if (name == "ac2d") {
    c.problem = "ac2d";
    c.dim = 2;
    c.layers = {2, 30, 30, 30, 1};
    c.colloc = {2500, 198, SampleMode::grid};
    c.schedule.segments = {{1.0, 0.1, 0.1}, {0.1, 0.0, 0.01}};
    c.strategy = Strategy::s2;
    c.phase1 = detail::adam_config(5000, 1e-3, 1e-14);
    c.step = detail::adam_config(1000, 1e-3, 1e-14);
    c.report_eps = {0.0};
  } else if (name == "helmholtz-d5") {
    c.problem = "helmholtz";
    c.dim = 5;
    c.layers = {5, 30, 30, 30, 1};
    c.colloc = {2000, 400, SampleMode::uniform_random};
    c.schedule.segments = {{1.0, 0.2, 0.1}, {0.2, 0.1, 0.01}};
    c.strategy = Strategy::s2;
    c.phase1 = detail::adam_config(5000, 1e-3, 1e-14);
    c.step = detail::adam_config(1000, 1e-3, 1e-14);
    c.step.alpha = 0.0;
    c.report_eps = {1.0, 0.5, 0.1};
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw Error(ErrorKind::parse, "unknown preset '" + name + "' (known: " + known + ")");
  }
  return c;
}

// ---------------------------------------------------------------------------
// JSON config

class ConfigError : public Error {
 public:
  explicit ConfigError(ErrorKind kind, const std::string& what) : Error(kind, what) {}
};

namespace detail {

template <class T>
T field(const json& doc, const char* key, const std::string& path, const T& fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(ErrorKind::parse, "field '" + path + key + "': wrong type (got " +
                                            std::string(doc.at(key).type_name()) + ")");
  }
}

inline void check_keys(const json& doc, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  if (!doc.is_object()) {
    throw ConfigError(ErrorKind::parse, "field '" + (path.empty() ? "<root>" : path) +
                                            "': expected an object");
  }
  for (const auto& [key, _] : doc.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(ErrorKind::parse, "unknown field '" + path + key + "'");
  }
}

inline void read_train(const json& doc, const std::string& path, TrainConfig& t) {
  check_keys(doc, path, {"optimizer", "lr", "lr_grid", "probe_epochs", "max_epochs", "tolerance",
                         "alpha", "divergence_limit"});
  try {
    t.optimizer.kind = parse_optimizer(field<std::string>(doc, "optimizer", path,
                                                          to_string(t.optimizer.kind)));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(ErrorKind::parse, "field '" + path + "optimizer': " + e.what());
  }
  t.optimizer.lr = field(doc, "lr", path, t.optimizer.lr);
  t.lr_grid = field(doc, "lr_grid", path, t.lr_grid);
  t.probe_epochs = field(doc, "probe_epochs", path, t.probe_epochs);
  t.max_epochs = field(doc, "max_epochs", path, t.max_epochs);
  // JSON has no infinity; null stands for "never stop early".
  if (doc.contains("tolerance") && doc.at("tolerance").is_null()) {
    t.tolerance = std::numeric_limits<double>::infinity();
  } else {
    t.tolerance = field(doc, "tolerance", path, t.tolerance);
  }
  t.alpha = field(doc, "alpha", path, t.alpha);
  t.divergence_limit = field(doc, "divergence_limit", path, t.divergence_limit);
}

inline json train_to_json(const TrainConfig& t) {
  json j{{"optimizer", to_string(t.optimizer.kind)},
         {"lr", t.optimizer.lr},
         {"lr_grid", t.lr_grid},
         {"probe_epochs", t.probe_epochs},
         {"max_epochs", t.max_epochs},
         {"alpha", t.alpha},
         {"divergence_limit", t.divergence_limit}};
  if (std::isfinite(t.tolerance)) j["tolerance"] = t.tolerance;
  else j["tolerance"] = nullptr;
  return j;
}

inline std::string locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

inline json config_to_json(const ExperimentConfig& c) {
  json sched;
  if (!c.schedule.values.empty()) {
    sched["values"] = c.schedule.values;
  } else {
    sched["segments"] = json::array();
    for (const auto& s : c.schedule.segments) {
      sched["segments"].push_back({{"start", s.start}, {"end", s.end}, {"step", s.step}});
    }
  }
  json j{{"problem", c.problem},
         {"dim", c.dim},
         {"layers", c.layers},
         {"seed", c.seed},
         {"collocation",
          {{"n_res", c.colloc.n_res}, {"n_bc", c.colloc.n_bc}, {"mode", to_string(c.colloc.mode)}}},
         {"schedule", sched},
         {"strategy", to_string(c.strategy)},
         {"phase1", detail::train_to_json(c.phase1)},
         {"step", detail::train_to_json(c.step)},
         {"lambda", c.phase1.lambda},
         {"svd_rtol", c.phase1.svd_rtol},
         {"report_eps", c.report_eps},
         {"kernel", {{"enabled", c.kernel.enabled}, {"nodes", c.kernel.nodes}, {"eps", c.kernel.eps}}},
         {"checkpoint_every", c.checkpoint_every},
         {"reference_grid", c.reference_grid},
         {"output", c.output}};
  if (!c.preset.empty()) j["preset"] = c.preset;
  return j;
}

inline void validate_config(const ExperimentConfig& c) {
  try {
    NetworkParams::check_dims(c.layers);
  } catch (const Error& e) {
    throw ConfigError(e.kind(), std::string("field 'layers': ") + e.what());
  }
  if (c.layers.front() != c.dim) {
    throw ConfigError(ErrorKind::shape, "field 'layers': input width " +
                                            std::to_string(c.layers.front()) +
                                            " does not match dim " + std::to_string(c.dim));
  }
  if (c.layers.back() != 1) throw ConfigError(ErrorKind::shape, "field 'layers': output width must be 1");
  try {
    c.schedule.build();
  } catch (const Error& e) {
    throw ConfigError(ErrorKind::schedule, std::string("field 'schedule': ") + e.what());
  }
  try {
    c.phase1.validate();
  } catch (const Error& e) {
    throw ConfigError(e.kind(), std::string("field 'phase1': ") + e.what());
  }
  try {
    c.step.validate();
  } catch (const Error& e) {
    throw ConfigError(e.kind(), std::string("field 'step': ") + e.what());
  }
  if (c.colloc.n_res < 1 || c.colloc.n_bc < 0) {
    throw ConfigError(ErrorKind::precondition, "field 'collocation': counts must be n_res >= 1, n_bc >= 0");
  }
  if (c.kernel.enabled && c.kernel.nodes < 2) {
    throw ConfigError(ErrorKind::precondition, "field 'kernel.nodes': need at least 2");
  }
  if (c.checkpoint_every < 0) {
    throw ConfigError(ErrorKind::precondition, "field 'checkpoint_every': must be >= 0");
  }
}

/// Builds a config from a JSON document. A "preset" key fills every field
/// first; explicit keys then override. HOMOPINN_SEED overrides the seed.
inline ExperimentConfig config_from_json(const json& doc) {
  using detail::field;
  detail::check_keys(doc, "", {"preset", "problem", "dim", "layers", "seed", "collocation",
                               "schedule", "strategy", "phase1", "step", "lambda", "svd_rtol",
                               "report_eps", "kernel", "checkpoint_every", "reference_grid",
                               "output"});
  ExperimentConfig c;
  try {
    if (doc.contains("preset")) c = make_preset(field<std::string>(doc, "preset", "", ""));
    c.problem = field(doc, "problem", "", c.problem);
    c.dim = field(doc, "dim", "", c.dim);
    c.layers = field(doc, "layers", "", c.layers);
    c.seed = field(doc, "seed", "", c.seed);
    if (doc.contains("collocation")) {
      const json& cj = doc.at("collocation");
      detail::check_keys(cj, "collocation.", {"n_res", "n_bc", "mode"});
      c.colloc.n_res = field(cj, "n_res", "collocation.", c.colloc.n_res);
      c.colloc.n_bc = field(cj, "n_bc", "collocation.", c.colloc.n_bc);
      if (cj.contains("mode")) c.colloc.mode = parse_sample_mode(field<std::string>(cj, "mode", "collocation.", ""));
    }
    if (doc.contains("schedule")) {
      const json& sj = doc.at("schedule");
      detail::check_keys(sj, "schedule.", {"values", "segments", "start", "end", "step"});
      ScheduleSpec s;
      if (sj.contains("values")) {
        s.values = field<std::vector<double>>(sj, "values", "schedule.", {});
      } else if (sj.contains("segments")) {
        for (const auto& seg : sj.at("segments")) {
          detail::check_keys(seg, "schedule.segments[].", {"start", "end", "step"});
          s.segments.push_back({field(seg, "start", "schedule.segments[].", 0.0),
                                field(seg, "end", "schedule.segments[].", 0.0),
                                field(seg, "step", "schedule.segments[].", 0.0)});
        }
      } else {
        s.segments.push_back({field(sj, "start", "schedule.", 0.0), field(sj, "end", "schedule.", 0.0),
                              field(sj, "step", "schedule.", 0.0)});
      }
      c.schedule = s;
    }
    if (doc.contains("strategy")) c.strategy = parse_strategy(field<std::string>(doc, "strategy", "", ""));
    if (doc.contains("phase1")) detail::read_train(doc.at("phase1"), "phase1.", c.phase1);
    if (doc.contains("step")) detail::read_train(doc.at("step"), "step.", c.step);
    const double lambda = field(doc, "lambda", "", c.phase1.lambda);
    const double rtol = field(doc, "svd_rtol", "", c.phase1.svd_rtol);
    c.phase1.lambda = c.step.lambda = lambda;
    c.phase1.svd_rtol = c.step.svd_rtol = rtol;
    c.report_eps = field(doc, "report_eps", "", c.report_eps);
    if (doc.contains("kernel")) {
      const json& kj = doc.at("kernel");
      detail::check_keys(kj, "kernel.", {"enabled", "nodes", "eps"});
      c.kernel.enabled = field(kj, "enabled", "kernel.", true);
      c.kernel.nodes = field(kj, "nodes", "kernel.", c.kernel.nodes);
      c.kernel.eps = field(kj, "eps", "kernel.", c.kernel.eps);
    }
    c.checkpoint_every = field(doc, "checkpoint_every", "", c.checkpoint_every);
    c.reference_grid = field(doc, "reference_grid", "", c.reference_grid);
    c.output = field(doc, "output", "", c.output);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.kind(), e.what());
  }
  if (const char* env = std::getenv("HOMOPINN_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError(ErrorKind::parse, "HOMOPINN_SEED is not an unsigned integer");
    c.seed = v;
  }
  c.phase1.seed = c.step.seed = c.seed;
  validate_config(c);
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(ErrorKind::parse, "config is not valid JSON at " + detail::locate(text, e.byte) +
                                            ": " + e.what());
  }
  return config_from_json(doc);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(ErrorKind::io, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// Evaluation

/// Points and reference values used for L2RE. For the pseudo-time 2D
/// Allen-Cahn problem the reference exists only at s = 0.
struct Evaluator {
  Matrix points;
  Vector reference;           // used when the problem has no closed form
  bool has_reference = false;
  ProblemPtr problem;
  double reference_eps = 0.0;  // the only eps with a reference (ac2d)

  Vector truth(double eps) const {
    if (problem->has_exact()) return eval_exact(*problem, points, eps);
    if (has_reference && eps == reference_eps) return reference;
    return {};
  }

  double l2re(const NetworkParams& params, double eps) const {
    const Vector t = truth(eps);
    if (t.size() == 0) return kNaN;
    return homopinn::l2re(forward(params, points), t);
  }
};

inline Matrix uniform_line(double lo, double hi, int n) {
  Matrix x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = lo + (hi - lo) * i / (n - 1);
  return x;
}

inline Matrix uniform_square(double lo, double hi, int n) {
  Matrix x(n * n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      x(i * n + j, 0) = lo + (hi - lo) * i / (n - 1);
      x(i * n + j, 1) = lo + (hi - lo) * j / (n - 1);
    }
  return x;
}

inline Evaluator make_evaluator(ProblemPtr problem, int reference_grid,
                                const std::filesystem::path& cache_dir = {}) {
  Evaluator ev;
  ev.problem = problem;
  const int d = problem->dim();
  if (problem->id() == "ac2d") {
    ev.points = uniform_square(problem->lo(), problem->hi(), 128);
    const auto* ac = dynamic_cast<const AllenCahn2DPseudoTime*>(problem.get());
    const double eps = ac ? ac->eps_floor() : 0.05;
    GridField2D ref;
    const auto cache = cache_dir.empty()
                           ? std::filesystem::path()
                           : cache_dir / ("ac2d_fdm_" + std::to_string(reference_grid) + ".bin");
    if (!cache.empty() && std::filesystem::exists(cache)) {
      ref = load_grid(cache.string());
    } else {
      ref = fdm_ac2d_steady(eps, reference_grid, reference_grid).field;
      if (!cache.empty()) save_grid(cache.string(), ref);
    }
    ev.reference = ref.at(ev.points);
    ev.has_reference = true;
    ev.reference_eps = 0.0;
  } else if (d == 1) {
    ev.points = uniform_line(problem->lo(), problem->hi(), 1024);
  } else if (d == 2) {
    ev.points = uniform_square(problem->lo(), problem->hi(), 128);
  } else {
    std::mt19937_64 rng(4096);
    std::uniform_real_distribution<double> uni(problem->lo(), problem->hi());
    ev.points.resize(4096, d);
    for (int i = 0; i < 4096; ++i)
      for (int j = 0; j < d; ++j) ev.points(i, j) = uni(rng);
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Artifacts

inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& hist,
                              const std::string& phase, const std::map<double, int>& step_of) {
  os.precision(17);
  for (const auto& e : hist) {
    const auto it = step_of.find(e.eps);
    os << phase << ',' << (it == step_of.end() ? 0 : it->second) << ',' << e.epoch << ',' << e.eps
       << ',' << e.report.total << ',' << e.report.l_res << ',' << e.report.l_bc << ','
       << e.report.l_heps << ',' << e.l2re << '\n';
  }
}

inline const char* kHistoryHeader = "phase,step,epoch,eps,total,l_res,l_bc,l_heps,l2re\n";
inline const char* kStepsHeader = "step,eps,total,l_res,l_bc,l_heps,l2re,epochs,rank,stalled\n";

struct RunSummary {
  std::string status = "ok";
  double final_loss = kNaN;
  double final_l2re = kNaN;
  double final_eps = kNaN;
  long steps = 0;
  long epochs = 0;
  double wall_seconds = 0.0;
  std::map<std::string, double> l2re_at;
  std::string error_kind;
  std::string error_message;
};

inline json summary_to_json(const RunSummary& s, const ExperimentConfig& c) {
  auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j{{"status", s.status},
         {"final_loss", num(s.final_loss)},
         {"final_l2re", num(s.final_l2re)},
         {"final_eps", num(s.final_eps)},
         {"steps", s.steps},
         {"epochs", s.epochs},
         {"seed", c.seed},
         {"strategy", to_string(c.strategy)},
         {"wall_seconds", s.wall_seconds},
         {"config", config_to_json(c)}};
  json at = json::object();
  for (const auto& [k, v] : s.l2re_at) at[k] = num(v);
  j["l2re_at"] = at;
  if (s.status != "ok") j["error"] = {{"kind", s.error_kind}, {"message", s.error_message}};
  return j;
}

inline std::string eps_key(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", eps);
  return buf;
}

// ---------------------------------------------------------------------------
// Run

struct RunOutput {
  RunSummary summary;
  NetworkParams params;
};

namespace detail {

inline void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline void write_solution(const std::filesystem::path& path, const Evaluator& ev,
                           const NetworkParams& params, double eps) {
  std::ofstream os(path);
  os.precision(17);
  const Vector pred = forward(params, ev.points);
  const Vector truth = ev.truth(eps);
  const int d = static_cast<int>(ev.points.cols());
  if (d == 1) os << "x,u_pred,u_ref\n";
  else if (d == 2) os << "x,y,u_pred,u_ref\n";
  else os << "index,u_pred,u_ref\n";
  for (Eigen::Index i = 0; i < ev.points.rows(); ++i) {
    if (d <= 2) {
      for (int j = 0; j < d; ++j) os << ev.points(i, j) << ',';
    } else {
      os << i << ',';
    }
    os << pred[i] << ',';
    if (truth.size() > 0) os << truth[i];
    else os << "nan";
    os << '\n';
  }
}

inline void write_profiles(std::ostream& os, const Evaluator& ev, const NetworkParams& params,
                           int step, double eps) {
  const Vector pred = forward(params, ev.points);
  const Vector truth = ev.truth(eps);
  for (Eigen::Index i = 0; i < ev.points.rows(); i += 4) {
    os << step << ',' << eps << ',' << ev.points(i, 0) << ',' << pred[i] << ',';
    if (truth.size() > 0) os << truth[i];
    else os << "nan";
    os << '\n';
  }
}

inline void write_checkpoint(const std::filesystem::path& dir, int k, double eps,
                             const NetworkParams& params) {
  char name[32];
  std::snprintf(name, sizeof name, "step_%04d.json", k);
  std::ofstream os(dir / name);
  if (!os) throw Error(ErrorKind::io, "cannot write checkpoint " + (dir / name).string());
  os << json{{"step", k}, {"eps", eps}, {"network", to_json(params)}}.dump() << '\n';
}

inline bool is_report_eps(const std::vector<double>& list, double eps) {
  for (double e : list) {
    if (std::abs(e - eps) < 1e-12) return true;
  }
  return false;
}

}  // namespace detail

/// Runs one experiment and writes its artifacts into cfg.output. Errors raised
/// during training are recorded in summary.json and rethrown.
inline RunOutput run_experiment(const ExperimentConfig& cfg, bool verbose = true) {
  namespace fs = std::filesystem;
  using detail::fmt;
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out(cfg.output);
  fs::create_directories(out / "checkpoints");

  RunOutput result;
  RunSummary& sum = result.summary;
  auto finish = [&] {
    sum.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream(out / "summary.json") << summary_to_json(sum, cfg).dump(2) << '\n';
  };
  auto log = [&](const std::string& m) {
    if (verbose) detail::log_line(m);
  };

  try {
    const ProblemPtr problem = make_problem(cfg.problem, cfg.dim);
    const EpsSchedule schedule = cfg.schedule.build();
    const CollocationSet colloc =
        sample_collocation(*problem, cfg.colloc.n_res, cfg.colloc.n_bc, cfg.colloc.mode, cfg.seed);
    const Evaluator ev = make_evaluator(problem, cfg.reference_grid, out);
    const MetricFn metric = [&ev](const NetworkParams& p, double eps) { return ev.l2re(p, eps); };
    const TrainHooks hooks{metric, 0};
    const NetworkParams init = init_xavier(cfg.layers, cfg.seed);

    std::map<double, int> step_of;
    for (std::size_t k = 0; k < schedule.size(); ++k) step_of[schedule[k]] = static_cast<int>(k);

    std::ofstream hist(out / "history.csv");
    hist << kHistoryHeader;
    std::ofstream steps(out / "steps.csv");
    steps << kStepsHeader;
    steps.precision(17);
    std::ofstream profiles;
    if (cfg.dim == 1) {
      profiles.open(out / "profiles.csv");
      profiles << "step,eps,x,u_pred,u_ref\n";
      profiles.precision(17);
    }

    NetworkParams final_params = init;
    double final_eps = schedule.tail();

    if (cfg.strategy == Strategy::classical) {
      TrainConfig tc = cfg.phase1;
      tc.max_epochs = cfg.homotopy_epochs();
      log("classical: eps=" + fmt("%g", final_eps) + " epochs=" + std::to_string(tc.max_epochs));
      TrainResult r = train_classical(problem, init, colloc, final_eps, tc, hooks);
      write_history_csv(hist, r.history, "classical", {});
      final_params = r.params;
      sum.final_loss = r.report.total;
      sum.epochs = static_cast<long>(r.history.size());
      sum.final_l2re = ev.l2re(final_params, final_eps);
      steps << 0 << ',' << final_eps << ',' << r.report.total << ',' << r.report.l_res << ','
            << r.report.l_bc << ',' << r.report.l_heps << ',' << sum.final_l2re << ','
            << sum.epochs << ",-1,0\n";
      for (double e : cfg.report_eps) {
        if (std::abs(e - final_eps) < 1e-12) sum.l2re_at[eps_key(e)] = sum.final_l2re;
      }
      if (profiles.is_open()) detail::write_profiles(profiles, ev, final_params, 0, final_eps);
      detail::write_checkpoint(out / "checkpoints", 0, final_eps, final_params);
    } else {
      log("phase1: eps=" + fmt("%g", schedule.head()) + " epochs=" +
          std::to_string(cfg.phase1.max_epochs));
      TrainResult p1 = train_phase1(problem, init, colloc, schedule.head(), cfg.phase1, hooks);
      write_history_csv(hist, p1.history, "phase1", step_of);
      const double l2_0 = ev.l2re(p1.params, schedule.head());
      log("phase1: loss=" + fmt("%.3e", p1.report.total) + " l2re=" + fmt("%.3e", l2_0));
      steps << 0 << ',' << schedule.head() << ',' << p1.report.total << ',' << p1.report.l_res
            << ',' << p1.report.l_bc << ',' << p1.report.l_heps << ',' << l2_0 << ','
            << p1.history.size() << ",-1,0\n";
      if (detail::is_report_eps(cfg.report_eps, schedule.head())) {
        sum.l2re_at[eps_key(schedule.head())] = l2_0;
      }
      if (profiles.is_open()) detail::write_profiles(profiles, ev, p1.params, 0, schedule.head());
      detail::write_checkpoint(out / "checkpoints", 0, schedule.head(), p1.params);

      PathState st = start_path(*problem, p1.params, colloc, schedule.head());
      const std::size_t last = schedule.size() - 1;
      StepHook on_step = [&](const PathState& s) {
        const StepRecord& r = s.steps.back();
        steps << r.k << ',' << r.eps << ',' << r.report.total << ',' << r.report.l_res << ','
              << r.report.l_bc << ',' << r.report.l_heps << ',' << r.l2re << ',' << r.epochs
              << ',' << r.rank << ',' << (r.stalled ? 1 : 0) << '\n';
        steps.flush();
        const bool reported = detail::is_report_eps(cfg.report_eps, r.eps);
        if (reported) sum.l2re_at[eps_key(r.eps)] = r.l2re;
        if (profiles.is_open() && (reported || static_cast<std::size_t>(r.k) == last ||
                                   (cfg.checkpoint_every > 0 && r.k % cfg.checkpoint_every == 0))) {
          detail::write_profiles(profiles, ev, s.params, r.k, r.eps);
        }
        if (static_cast<std::size_t>(r.k) == last ||
            (cfg.checkpoint_every > 0 && r.k % cfg.checkpoint_every == 0)) {
          detail::write_checkpoint(out / "checkpoints", r.k, r.eps, s.params);
        }
        log("step " + std::to_string(r.k) + ": eps=" + fmt("%g", r.eps) + " loss=" +
            fmt("%.3e", r.report.total) + " l2re=" + fmt("%.3e", r.l2re));
      };
      if (cfg.strategy == Strategy::s1) {
        st = track_strategy1(problem, st, schedule, colloc, cfg.phase1, hooks, on_step);
      } else {
        st = track_strategy2(problem, st, schedule, colloc, cfg.step, hooks, on_step);
      }
      std::vector<EpochRecord> path_hist(st.history.begin(), st.history.end());
      write_history_csv(hist, path_hist, "path", step_of);
      final_params = st.params;
      sum.steps = static_cast<long>(st.steps.size());
      sum.epochs = static_cast<long>(p1.history.size() + path_hist.size());
      if (!st.steps.empty()) {
        // Report the plain PDE loss at the final eps so homotopy and
        // classical runs compare like with like.
        sum.final_loss = loss_pinn(problem, final_params, colloc, final_eps, cfg.phase1.lambda).total;
      } else {
        sum.final_loss = p1.report.total;
      }
      sum.final_l2re = ev.l2re(final_params, final_eps);
    }
    sum.final_eps = final_eps;

    if (cfg.kernel.enabled && problem->dim() == 1) {
      std::vector<KernelReport> rows;
      for (double e : cfg.kernel.eps) rows.push_back(kernel_spectrum(*problem, final_params, cfg.kernel.nodes, e));
      std::ofstream ks(out / "kernel.csv");
      write_kernel_csv(ks, rows);
    }
    detail::write_solution(out / "solution.csv", ev, final_params, final_eps);
    save_network(final_params, (out / "final.json").string());
    result.params = final_params;
    log("done: loss=" + fmt("%.3e", sum.final_loss) + " l2re=" + fmt("%.3e", sum.final_l2re));
  } catch (const Error& e) {
    sum.status = "error";
    sum.error_kind = to_string(e.kind());
    sum.error_message = e.what();
    finish();
    throw;
  }
  finish();
  return result;
}

}  // namespace homopinn
