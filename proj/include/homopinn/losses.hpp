#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "homopinn/derivs.hpp"
#include "homopinn/errors.hpp"
#include "homopinn/jet.hpp"
#include "homopinn/network.hpp"
#include "homopinn/problems.hpp"

namespace homopinn {

struct LossReport {
  double total = 0.0;
  double l_res = 0.0;
  double l_bc = 0.0;
  double l_heps = 0.0;
  double lambda = 1.0;
  double alpha = 0.0;
};

struct LossEval {
  LossReport report;
  Vector grad;  // empty unless requested
};

// Row-major copy of a point set so each row can be passed as a span.
class PointRows {
 public:
  PointRows() = default;
  explicit PointRows(const Matrix& pts) : n_(pts.rows()), d_(pts.cols()), data_(pts.size()) {
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index j = 0; j < d_; ++j) data_[i * d_ + j] = pts(i, j);
  }
  Eigen::Index size() const { return n_; }
  Point operator[](Eigen::Index i) const {
    return {data_.data() + i * d_, static_cast<std::size_t>(d_)};
  }

 private:
  Eigen::Index n_ = 0, d_ = 0;
  std::vector<double> data_;
};

// Network values (and Laplacians) at the interior points of an accepted step.
struct FrozenField {
  Vector u;
  Vector lap;
};

inline FrozenField freeze(const HomotopyProblem& problem, const NetworkParams& params,
                          const CollocationSet& colloc) {
  if (problem.uses_laplacian()) {
    TaylorTape tape(params, colloc.interior, 2);
    return {tape.values(), tape.laplacian()};
  }
  return {forward(params, colloc.interior), Vector::Zero(colloc.interior.rows())};
}

/// Residual loss l_res + lambda l_bc, optionally augmented with the homotopy
/// term alpha l_heps. l_heps penalizes H_u[v] + H_eps at eps_k where
/// v = (u - u_prev) / (eps_k - eps_prev) is the secant estimate of du/deps.
class Objective {
 public:
  Objective(ProblemPtr problem, const CollocationSet& colloc, double eps, double lambda)
      : problem_(std::move(problem)),
        colloc_(colloc),
        interior_(colloc.interior),
        boundary_(colloc.boundary),
        eps_(eps),
        lambda_(lambda) {
    if (colloc.interior.cols() != problem_->dim() ||
        (colloc.boundary.rows() > 0 && colloc.boundary.cols() != problem_->dim())) {
      throw Error(ErrorKind::shape, "collocation dimension does not match problem '" +
                                        problem_->id() + "'");
    }
    if (problem_->has_boundary()) {
      g_.resize(boundary_.size());
      for (Eigen::Index j = 0; j < boundary_.size(); ++j) {
        g_[j] = problem_->boundary_value(boundary_[j], eps_);
      }
    }
  }

  Objective& with_homotopy(FrozenField prev, double eps_prev, double alpha) {
    if (!(eps_prev > eps_)) {
      throw Error(ErrorKind::schedule, "schedule must strictly decrease (eps " +
                                           std::to_string(eps_prev) + " -> " +
                                           std::to_string(eps_) + ")");
    }
    if (prev.u.size() != interior_.size() ||
        (problem_->uses_laplacian() && prev.lap.size() != interior_.size())) {
      throw Error(ErrorKind::shape, "frozen field does not match the collocation set");
    }
    prev_ = std::move(prev);
    eps_prev_ = eps_prev;
    alpha_ = alpha;
    return *this;
  }

  double eps() const { return eps_; }
  bool homotopy() const { return prev_.has_value(); }
  const CollocationSet& colloc() const { return colloc_; }
  const HomotopyProblem& problem() const { return *problem_; }

  LossEval evaluate(const NetworkParams& params, bool want_grad) const {
    const bool lap_used = problem_->uses_laplacian();
    const Eigen::Index n = interior_.size();
    TaylorTape tape(params, colloc_.interior, lap_used ? 2 : 0);
    const Vector lap = lap_used ? tape.laplacian() : Vector::Zero(n);
    std::optional<TaylorTape> btape;
    Vector ub;
    if (boundary_active()) {
      btape.emplace(params, colloc_.boundary, 0);
      ub = btape->values();
    }
    Seeds seeds{Vector(n), lap_used ? Vector(n) : Vector(), {}};
    Vector bseed(ub.size());
    LossEval out;
    out.report = evaluate_fields(tape.values(), lap, ub, want_grad ? &seeds : nullptr,
                                 want_grad ? &bseed : nullptr);
    if (want_grad) {
      out.grad = tape.vjp(seeds);
      if (btape) out.grad += btape->vjp(Seeds{bseed, {}, {}});
    }
    return out;
  }

  /// Loss from field values at the interior points (u, lap) and boundary
  /// points (ub). When seeds are given they receive dLoss/du_i, dLoss/dlap_i
  /// and dLoss/dub_j.
  LossReport evaluate_fields(const Vector& u, const Vector& lap, const Vector& ub,
                             Seeds* seeds = nullptr, Vector* bseed = nullptr) const {
    const HomotopyProblem& pb = *problem_;
    const bool lap_used = pb.uses_laplacian();
    const Eigen::Index n = interior_.size();
    if (u.size() != n || (lap_used && lap.size() != n)) {
      throw Error(ErrorKind::shape, "interior field does not match the collocation set");
    }
    LossReport rep;
    rep.lambda = lambda_;
    rep.alpha = prev_ ? alpha_ : 0.0;

    const double inv_n = 1.0 / static_cast<double>(n);
    const double de = prev_ ? eps_ - eps_prev_ : 0.0;
    double sum_res = 0.0, sum_heps = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Point x = interior_[i];
      const Jet uj = Jet::var_u(u[i]);
      const Jet lj = Jet::var_lap(lap_used ? lap[i] : 0.0);
      const Jet h = pb.residual(uj, lj, x, eps_);
      if (!std::isfinite(h.v)) {
        throw NonFiniteError(static_cast<std::size_t>(i),
                             "non-finite residual at interior point " + std::to_string(i));
      }
      sum_res += h.v * h.v;
      double su = h.v * h.du, sl = h.v * h.dl;
      if (prev_) {
        const Jet v = (uj - prev_->u[i]) / de;
        const Jet lv = lap_used ? (lj - prev_->lap[i]) / de : Jet(0.0);
        const Jet q = pb.hu_action(uj, v, lv, x, eps_) + pb.h_eps(uj, lj, x, eps_);
        if (!std::isfinite(q.v)) {
          throw NonFiniteError(static_cast<std::size_t>(i),
                               "non-finite homotopy term at interior point " + std::to_string(i));
        }
        sum_heps += q.v * q.v;
        su += alpha_ * q.v * q.du;
        sl += alpha_ * q.v * q.dl;
      }
      if (seeds) {
        seeds->u[i] = su * inv_n;
        if (lap_used) seeds->lap[i] = sl * inv_n;
      }
    }
    rep.l_res = 0.5 * sum_res * inv_n;
    rep.l_heps = prev_ ? 0.5 * sum_heps * inv_n : 0.0;

    if (boundary_active()) {
      const Eigen::Index m = boundary_.size();
      if (ub.size() != m) throw Error(ErrorKind::shape, "boundary field size mismatch");
      double sum_bc = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        const double r = ub[j] - g_[j];
        if (!std::isfinite(r)) {
          throw NonFiniteError(static_cast<std::size_t>(j),
                               "non-finite boundary mismatch at boundary point " +
                                   std::to_string(j));
        }
        sum_bc += r * r;
        if (bseed) (*bseed)[j] = lambda_ * r / static_cast<double>(m);
      }
      rep.l_bc = 0.5 * sum_bc / static_cast<double>(m);
    }
    rep.total = rep.l_res + lambda_ * rep.l_bc + rep.alpha * rep.l_heps;
    return rep;
  }

 private:
  bool boundary_active() const { return problem_->has_boundary() && boundary_.size() > 0; }

  ProblemPtr problem_;
  CollocationSet colloc_;
  PointRows interior_, boundary_;
  std::vector<double> g_;
  double eps_;
  double lambda_;
  std::optional<FrozenField> prev_;
  double eps_prev_ = 0.0;
  double alpha_ = 0.0;
};

inline LossReport loss_pinn(ProblemPtr problem, const NetworkParams& params,
                            const CollocationSet& colloc, double eps, double lambda = 1.0) {
  return Objective(std::move(problem), colloc, eps, lambda).evaluate(params, false).report;
}

inline LossReport loss_homotopy(ProblemPtr problem, const NetworkParams& params,
                                const FrozenField& prev, const CollocationSet& colloc,
                                double eps_k, double eps_prev, double lambda = 1.0,
                                double alpha = 1.0) {
  return Objective(std::move(problem), colloc, eps_k, lambda)
      .with_homotopy(prev, eps_prev, alpha)
      .evaluate(params, false)
      .report;
}

}  // namespace homopinn
