#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "homopinn/derivs.hpp"
#include "homopinn/errors.hpp"
#include "homopinn/linalg.hpp"
#include "homopinn/losses.hpp"
#include "homopinn/network.hpp"
#include "homopinn/optim.hpp"
#include "homopinn/problems.hpp"

namespace homopinn {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct TrainConfig {
  OptimizerSettings optimizer;
  long max_epochs = 10000;
  // Stop once total <= tolerance. An infinite tolerance disables early stopping.
  double tolerance = 1e-10;
  std::vector<double> lr_grid;  // empty: use optimizer.lr as is
  long probe_epochs = 500;
  std::uint64_t seed = 0;
  double lambda = 1.0;
  double alpha = 1.0;
  double divergence_limit = 1e6;
  double svd_rtol = 1e-8;

  void validate() const {
    if (!(optimizer.lr > 0.0)) throw Error(ErrorKind::precondition, "lr must be positive");
    if (!(tolerance > 0.0)) throw Error(ErrorKind::precondition, "tolerance must be positive");
    if (max_epochs < 0) throw Error(ErrorKind::precondition, "max_epochs must be >= 0");
    for (double lr : lr_grid) {
      if (!(lr > 0.0)) throw Error(ErrorKind::precondition, "lr grid entries must be positive");
    }
    if (!lr_grid.empty() && probe_epochs < 1) {
      throw Error(ErrorKind::precondition, "probe_epochs must be positive with a lr grid");
    }
    if (lambda < 0.0 || alpha < 0.0) {
      throw Error(ErrorKind::precondition, "loss weights must be non-negative");
    }
  }

  bool stops_early() const { return std::isfinite(tolerance); }
};

struct EpochRecord {
  long epoch = 0;
  double eps = 0.0;
  LossReport report;
  double l2re = kNaN;
};

// Error metric against the known or reference solution at a given eps.
using MetricFn = std::function<double(const NetworkParams&, double eps)>;

struct TrainHooks {
  MetricFn l2re;
  long l2re_every = 0;  // 0: only on the final record
};

struct TrainResult {
  NetworkParams params;  // best-so-far
  LossReport report;     // loss of params
  std::vector<EpochRecord> history;
  double lr = 0.0;
  bool converged = false;
};

namespace detail {

struct Run {
  Vector theta;
  Optimizer opt;
  Vector best_theta;
  LossReport best;
  bool has_best = false;
  bool converged = false;
  long epoch = 0;
  std::vector<EpochRecord> history;
};

inline void advance(const Objective& obj, Run& run, long until, const TrainConfig& cfg,
                    const TrainHooks& hooks, NetworkParams& scratch) {
  while (!run.converged && run.epoch < until) {
    scratch.assign(run.theta);
    LossEval ev = obj.evaluate(scratch, true);
    ++run.epoch;
    const double total = ev.report.total;
    if (!std::isfinite(total) || total > cfg.divergence_limit || !ev.grad.allFinite()) {
      throw DivergenceError(run.epoch, total);
    }
    EpochRecord rec{run.epoch, obj.eps(), ev.report, kNaN};
    if (hooks.l2re && hooks.l2re_every > 0 && run.epoch % hooks.l2re_every == 0) {
      rec.l2re = hooks.l2re(scratch, obj.eps());
    }
    run.history.push_back(rec);
    if (!run.has_best || total < run.best.total) {
      run.best = ev.report;
      run.best_theta = run.theta;
      run.has_best = true;
    }
    if (cfg.stops_early() && total <= cfg.tolerance) {
      run.converged = true;
      break;
    }
    run.opt.step(run.theta, ev.grad);
  }
}

}  // namespace detail

/// Full-batch minimization of obj from params with best-so-far acceptance.
/// With a learning-rate grid every candidate runs probe_epochs from the same
/// start; the candidate with the lowest best loss continues to max_epochs.
inline TrainResult minimize(const Objective& obj, const NetworkParams& params,
                            const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  NetworkParams scratch = params;
  const Vector theta0 = params.flatten();
  auto make_run = [&](double lr) {
    OptimizerSettings s = cfg.optimizer;
    s.lr = lr;
    return detail::Run{theta0, Optimizer(s, theta0.size()), theta0, {}, false, false, 0, {}};
  };

  std::optional<detail::Run> chosen;
  if (cfg.lr_grid.empty()) {
    chosen.emplace(make_run(cfg.optimizer.lr));
  } else {
    std::optional<DivergenceError> last_failure;
    const long probe = std::min(cfg.probe_epochs, cfg.max_epochs);
    for (double lr : cfg.lr_grid) {
      detail::Run run = make_run(lr);
      try {
        detail::advance(obj, run, probe, cfg, {}, scratch);
      } catch (const DivergenceError& e) {
        last_failure = e;
        continue;
      }
      if (!chosen || run.best.total < chosen->best.total) chosen.emplace(std::move(run));
    }
    if (!chosen) throw *last_failure;
  }
  detail::advance(obj, *chosen, cfg.max_epochs, cfg, hooks, scratch);

  TrainResult out;
  out.lr = chosen->opt.settings().lr;
  out.converged = chosen->converged;
  out.history = std::move(chosen->history);
  out.params = NetworkParams::unflatten(params.dims(), chosen->best_theta);
  if (chosen->has_best) {
    out.report = chosen->best;
  } else {
    out.report = obj.evaluate(out.params, false).report;
  }
  if (hooks.l2re && !out.history.empty()) out.history.back().l2re = hooks.l2re(out.params, obj.eps());
  return out;
}

/// Phase I: direct training at the head of the schedule.
inline TrainResult train_phase1(ProblemPtr problem, const NetworkParams& params,
                                const CollocationSet& colloc, double eps0, const TrainConfig& cfg,
                                const TrainHooks& hooks = {}) {
  return minimize(Objective(std::move(problem), colloc, eps0, cfg.lambda), params, cfg, hooks);
}

/// Baseline: direct training at the target eps.
inline TrainResult train_classical(ProblemPtr problem, const NetworkParams& params,
                                   const CollocationSet& colloc, double eps_target,
                                   const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  return minimize(Objective(std::move(problem), colloc, eps_target, cfg.lambda), params, cfg,
                  hooks);
}

// ---------------------------------------------------------------------------
// Phase II

struct StepRecord {
  int k = 0;
  double eps = 0.0;
  LossReport report;
  double l2re = kNaN;
  long epochs = 0;
  bool stalled = false;
  int rank = -1;  // pseudo-inverse rank for Euler steps
};

struct PathState {
  int k = 0;
  double eps = 0.0;
  NetworkParams params;
  FrozenField frozen;  // fields of the accepted step k (the next step's previous values)
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> history;  // epochs numbered continuously along the path
};

using StepHook = std::function<void(const PathState&)>;

struct EulerStep {
  NetworkParams params;
  int rank = 0;
};

/// One forward Euler step of the parameter dynamics from eps_from to eps_to:
/// theta += (eps_to - eps_from) * dtheta/deps with dtheta/deps = -M^+ r.
/// Interior rows of M are H_u applied to the parameter Jacobian and r = H_eps;
/// boundary rows are sqrt(lambda) d u / d theta with r = -sqrt(lambda) dg/deps.
inline EulerStep euler_step_strategy1(const HomotopyProblem& problem, const NetworkParams& params,
                                      const CollocationSet& colloc, double eps_from,
                                      double eps_to, const TrainConfig& cfg) {
  if (eps_to > eps_from) throw Error(ErrorKind::schedule, "schedule must strictly decrease");
  if (eps_to == eps_from) return {params, 0};
  const bool lap_used = problem.uses_laplacian();
  const Eigen::Index n = colloc.interior.rows();
  const bool with_bc = problem.has_boundary() && colloc.boundary.rows() > 0;
  const Eigen::Index m = with_bc ? colloc.boundary.rows() : 0;

  TaylorTape tape(params, colloc.interior, lap_used ? 2 : 0);
  const Vector& u = tape.values();
  const Vector lap = lap_used ? tape.laplacian() : Vector::Zero(n);
  const PointRows pts(colloc.interior);
  Seeds seeds{Vector(n), lap_used ? Vector(n) : Vector(), {}};
  Vector r(n + m);
  for (Eigen::Index i = 0; i < n; ++i) {
    // H_u is linear in (v, lap v); unit tangents read off both coefficients.
    const Jet a = problem.hu_action(Jet(u[i]), Jet(0.0, 1.0, 0.0), Jet(0.0, 0.0, 1.0), pts[i],
                                    eps_from);
    seeds.u[i] = a.du;
    if (lap_used) seeds.lap[i] = a.dl;
    r[i] = problem.h_eps(u[i], lap[i], pts[i], eps_from);
  }
  Matrix M(n + m, static_cast<Eigen::Index>(params.param_count()));
  M.topRows(n) = tape.jacobian(seeds);
  if (with_bc) {
    const double w = std::sqrt(cfg.lambda);
    TaylorTape btape(params, colloc.boundary, 0);
    M.bottomRows(m) = btape.jacobian(Seeds{Vector::Constant(m, w), {}, {}});
    const PointRows bpts(colloc.boundary);
    for (Eigen::Index j = 0; j < m; ++j) {
      r[n + j] = -w * problem.boundary_value_eps(bpts[j], eps_from);
    }
  }
  const PinvSolution sol = pinv_solve(M, r, cfg.svd_rtol);
  Vector theta = params.flatten();
  theta -= (eps_to - eps_from) * sol.x;
  return {NetworkParams::unflatten(params.dims(), theta), sol.rank};
}

inline PathState start_path(const HomotopyProblem& problem, const NetworkParams& params,
                            const CollocationSet& colloc, double eps0,
                            std::vector<EpochRecord> phase1_history = {}) {
  PathState st;
  st.k = 0;
  st.eps = eps0;
  st.params = params;
  st.frozen = freeze(problem, params, colloc);
  st.history = std::move(phase1_history);
  return st;
}

/// Strategy 1: Euler steps along the schedule tail, no optimization.
inline PathState track_strategy1(ProblemPtr problem, PathState state, const EpsSchedule& schedule,
                                 const CollocationSet& colloc, const TrainConfig& cfg,
                                 const TrainHooks& hooks = {}, const StepHook& on_step = {}) {
  for (std::size_t k = 1; k < schedule.size(); ++k) {
    const double eps = schedule[k];
    EulerStep step = euler_step_strategy1(*problem, state.params, colloc, state.eps, eps, cfg);
    state.params = std::move(step.params);
    state.eps = eps;
    state.k = static_cast<int>(k);
    state.frozen = freeze(*problem, state.params, colloc);
    StepRecord rec;
    rec.k = state.k;
    rec.eps = eps;
    rec.report = loss_pinn(problem, state.params, colloc, eps, cfg.lambda);
    rec.rank = step.rank;
    if (hooks.l2re) rec.l2re = hooks.l2re(state.params, eps);
    state.steps.push_back(rec);
    const long epoch = state.history.empty() ? 1 : state.history.back().epoch + 1;
    state.history.push_back({epoch, eps, rec.report, rec.l2re});
    if (on_step) on_step(state);
  }
  return state;
}

/// Strategy 2: at each eps_k minimize the homotopy loss against the frozen
/// fields of the accepted previous step.
inline PathState track_strategy2(ProblemPtr problem, PathState state, const EpsSchedule& schedule,
                                 const CollocationSet& colloc, const TrainConfig& step_cfg,
                                 const TrainHooks& hooks = {}, const StepHook& on_step = {}) {
  for (std::size_t k = 1; k < schedule.size(); ++k) {
    const double eps = schedule[k];
    Objective obj(problem, colloc, eps, step_cfg.lambda);
    obj.with_homotopy(state.frozen, state.eps, step_cfg.alpha);
    TrainResult res = minimize(obj, state.params, step_cfg, hooks);

    StepRecord rec;
    rec.k = static_cast<int>(k);
    rec.eps = eps;
    rec.report = res.report;
    rec.epochs = static_cast<long>(res.history.size());
    rec.stalled = !(res.report.total <= 10.0 * step_cfg.tolerance);
    if (!res.history.empty()) rec.l2re = res.history.back().l2re;
    else if (hooks.l2re) rec.l2re = hooks.l2re(res.params, eps);

    const long offset = state.history.empty() ? 0 : state.history.back().epoch;
    for (auto& e : res.history) {
      e.epoch += offset;
      state.history.push_back(e);
    }
    state.params = std::move(res.params);
    state.eps = eps;
    state.k = rec.k;
    state.frozen = freeze(*problem, state.params, colloc);
    state.steps.push_back(rec);
    if (on_step) on_step(state);
  }
  return state;
}

}  // namespace homopinn
