#pragma once

// Derivative engine for tanh MLPs.
//
// Input derivatives come from coordinate-wise Taylor propagation: for each
// input axis j the forward pass carries (value, first, second) coefficients
// of t -> u(x + t e_j), so the Laplacian is the sum of the d second
// coefficients. Parameter derivatives come from one reverse sweep through
// that computation (reverse-over-forward). Points are batched as columns.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "homopinn/errors.hpp"
#include "homopinn/jet.hpp"
#include "homopinn/network.hpp"

namespace homopinn {

// n * p ceiling for dense Jacobians (4096 points x 4000 parameters).
inline constexpr std::size_t kMaxJacobianEntries = std::size_t{4096} * 4000;

struct DerivBatch {
  Vector u;         // n
  Matrix grad_x;    // n x d
  Vector lap;       // n
  Matrix jac_u;     // n x p, row i = d u(x_i) / d theta
  Matrix jac_lap;   // n x p, row i = d lap u(x_i) / d theta
  bool has_input_derivs = false;
  bool has_jacobians = false;

  Eigen::Index size() const { return u.size(); }
};

namespace detail {

inline void check_points(const NetworkParams& params, const Matrix& points) {
  if (params.num_layers() == 0) throw Error(ErrorKind::invalid_architecture, "empty network");
  if (params.output_dim() != 1) {
    throw Error(ErrorKind::invalid_architecture, "network output must be scalar");
  }
  if (points.cols() != params.input_dim()) {
    throw Error(ErrorKind::shape, "point dimension " + std::to_string(points.cols()) +
                                      " does not match input layer " +
                                      std::to_string(params.input_dim()));
  }
}

}  // namespace detail

// Adjoint seeds for a reverse sweep; empty vectors mean zero.
struct Seeds {
  Vector u;                  // n
  Vector lap;                // n, seeds every axis' second coefficient
  std::vector<Vector> grad;  // d entries of n, optional
};

class TaylorTape {
 public:
  // order 0: values only; order 2: values + per-axis first/second coefficients.
  TaylorTape(const NetworkParams& params, const Matrix& points, int order)
      : params_(&params), order_(order) {
    detail::check_points(params, points);
    const auto& layers = params.layers();
    const std::size_t L = layers.size();
    n_ = points.rows();
    dirs_ = order_ >= 1 ? static_cast<int>(points.cols()) : 0;

    a0_.resize(L);
    a1_.assign(L, std::vector<Matrix>(dirs_));
    a2_.assign(L, std::vector<Matrix>(dirs_));
    t_.resize(L);
    dt_.resize(L);
    ddt_.resize(L);
    z1_.assign(L, std::vector<Matrix>(dirs_));
    z2_.assign(L, std::vector<Matrix>(dirs_));

    a0_[0] = points.transpose();
    for (int j = 0; j < dirs_; ++j) {
      a1_[0][j] = Matrix::Zero(points.cols(), n_);
      a1_[0][j].row(j).setOnes();
      a2_[0][j] = Matrix::Zero(points.cols(), n_);
    }

    for (std::size_t k = 0; k < L; ++k) {
      const Matrix& W = layers[k].weight;
      Matrix z0 = W * a0_[k];
      z0.colwise() += layers[k].bias;
      for (int j = 0; j < dirs_; ++j) {
        z1_[k][j] = W * a1_[k][j];
        z2_[k][j] = k == 0 ? Matrix::Zero(W.rows(), n_) : Matrix(W * a2_[k][j]);
      }
      if (k + 1 == L) {
        out0_ = z0.row(0).transpose();
        out1_.resize(dirs_);
        out2_.resize(dirs_);
        for (int j = 0; j < dirs_; ++j) {
          out1_[j] = z1_[k][j].row(0).transpose();
          out2_[j] = z2_[k][j].row(0).transpose();
        }
        break;
      }
      t_[k] = z0.array().tanh().matrix();
      dt_[k] = (1.0 - t_[k].array().square()).matrix();
      ddt_[k] = (-2.0 * t_[k].array() * dt_[k].array()).matrix();
      a0_[k + 1] = t_[k];
      for (int j = 0; j < dirs_; ++j) {
        a1_[k + 1][j] = (dt_[k].array() * z1_[k][j].array()).matrix();
        a2_[k + 1][j] = (dt_[k].array() * z2_[k][j].array() +
                         ddt_[k].array() * z1_[k][j].array().square())
                            .matrix();
      }
    }
  }

  Eigen::Index size() const { return n_; }
  int order() const { return order_; }

  const Vector& values() const { return out0_; }

  Matrix grad_x() const {
    require_order();
    Matrix g(n_, dirs_);
    for (int j = 0; j < dirs_; ++j) g.col(j) = out1_[j];
    return g;
  }

  Vector laplacian() const {
    require_order();
    Vector lap = Vector::Zero(n_);
    for (int j = 0; j < dirs_; ++j) lap += out2_[j];
    return lap;
  }

  // Sum over points of the seeded derivatives: sum_i seed_i . d(out_i)/d theta.
  Vector vjp(const Seeds& seeds) const {
    Vector grad = Vector::Zero(static_cast<Eigen::Index>(params_->param_count()));
    sweep(seeds, [&](std::size_t k, Eigen::Index offset, const Channels& z) {
      const Eigen::Index rows = z.z0.rows();
      const Eigen::Index cols = a0_[k].rows();
      Matrix wbar = z.z0 * a0_[k].transpose();
      for (std::size_t j = 0; j < z.z1.size(); ++j) {
        wbar.noalias() += z.z1[j] * a1_[k][j].transpose();
        if (k > 0) wbar.noalias() += z.z2[j] * a2_[k][j].transpose();
      }
      for (Eigen::Index r = 0; r < rows; ++r) {
        grad.segment(offset + r * cols, cols) = wbar.row(r).transpose();
      }
      grad.segment(offset + rows * cols, rows) = z.z0.rowwise().sum();
    });
    return grad;
  }

  // Per-point rows of the seeded derivatives: row i = seed_i . d(out_i)/d theta.
  Matrix jacobian(const Seeds& seeds) const {
    const auto p = static_cast<Eigen::Index>(params_->param_count());
    if (static_cast<std::size_t>(n_) * static_cast<std::size_t>(p) > kMaxJacobianEntries) {
      throw Error(ErrorKind::too_large, "Jacobian of " + std::to_string(n_) + " x " +
                                            std::to_string(p) + " exceeds the dense limit");
    }
    Matrix jac(n_, p);
    sweep(seeds, [&](std::size_t k, Eigen::Index offset, const Channels& z) {
      const Eigen::Index rows = z.z0.rows();
      const Eigen::Index cols = a0_[k].rows();
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          auto col = jac.col(offset + r * cols + c);
          col = (z.z0.row(r).array() * a0_[k].row(c).array()).transpose().matrix();
          for (std::size_t j = 0; j < z.z1.size(); ++j) {
            col.array() += (z.z1[j].row(r).array() * a1_[k][j].row(c).array()).transpose();
            if (k > 0) {
              col.array() += (z.z2[j].row(r).array() * a2_[k][j].row(c).array()).transpose();
            }
          }
        }
      }
      jac.middleCols(offset + rows * cols, rows) = z.z0.transpose();
    });
    return jac;
  }

 private:
  struct Channels {
    Matrix z0;
    std::vector<Matrix> z1;
    std::vector<Matrix> z2;
  };

  void require_order() const {
    if (order_ < 2) throw Error(ErrorKind::unsupported, "tape recorded without input derivatives");
  }

  // Reverse sweep; visit(k, offset, adjoints of layer k pre-activations).
  template <class Visit>
  void sweep(const Seeds& seeds, Visit&& visit) const {
    const auto& layers = params_->layers();
    const std::size_t L = layers.size();
    const bool directional = seeds.lap.size() > 0 || !seeds.grad.empty();
    if (directional) require_order();

    std::vector<Eigen::Index> offsets(L);
    Eigen::Index offset = 0;
    for (std::size_t k = 0; k < L; ++k) {
      offsets[k] = offset;
      offset += layers[k].weight.size() + layers[k].bias.size();
    }

    Channels z;
    z.z0 = seeds.u.size() > 0 ? Matrix(seeds.u.transpose()) : Matrix(Matrix::Zero(1, n_));
    if (directional) {
      z.z1.resize(dirs_);
      z.z2.resize(dirs_);
      for (int j = 0; j < dirs_; ++j) {
        z.z1[j] = static_cast<std::size_t>(j) < seeds.grad.size() && seeds.grad[j].size() > 0
                      ? Matrix(seeds.grad[j].transpose())
                      : Matrix(Matrix::Zero(1, n_));
        z.z2[j] = seeds.lap.size() > 0 ? Matrix(seeds.lap.transpose()) : Matrix(Matrix::Zero(1, n_));
      }
    }

    for (std::size_t k = L; k-- > 0;) {
      visit(k, offsets[k], z);
      if (k == 0) break;
      const Matrix& W = layers[k].weight;
      const std::size_t h = k - 1;  // activation feeding layer k
      Matrix tbar = W.transpose() * z.z0;
      if (directional) {
        Matrix dtbar = Matrix::Zero(tbar.rows(), n_);
        Matrix ddtbar = Matrix::Zero(tbar.rows(), n_);
        for (int j = 0; j < dirs_; ++j) {
          Matrix abar1 = W.transpose() * z.z1[j];
          Matrix abar2 = W.transpose() * z.z2[j];
          const auto& zz1 = z1_[h][j].array();
          const auto& zz2 = z2_[h][j].array();
          dtbar.array() += abar1.array() * zz1 + abar2.array() * zz2;
          ddtbar.array() += abar2.array() * zz1.square();
          z.z1[j] = (abar1.array() * dt_[h].array() +
                     2.0 * abar2.array() * ddt_[h].array() * zz1)
                        .matrix();
          z.z2[j] = (abar2.array() * dt_[h].array()).matrix();
        }
        // ddt = -2 t dt, dt = 1 - t^2
        dtbar.array() += -2.0 * ddtbar.array() * t_[h].array();
        tbar.array() += -2.0 * ddtbar.array() * dt_[h].array();
        tbar.array() += -2.0 * dtbar.array() * t_[h].array();
      }
      z.z0 = (tbar.array() * dt_[h].array()).matrix();
    }
  }

  const NetworkParams* params_;
  int order_;
  Eigen::Index n_ = 0;
  int dirs_ = 0;
  std::vector<Matrix> a0_;
  std::vector<std::vector<Matrix>> a1_, a2_;
  std::vector<Matrix> t_, dt_, ddt_;
  std::vector<std::vector<Matrix>> z1_, z2_;
  Vector out0_;
  std::vector<Vector> out1_, out2_;
};

/// Plain network evaluation; points is n x d.
inline Vector forward(const NetworkParams& params, const Matrix& points) {
  detail::check_points(params, points);
  const auto& layers = params.layers();
  Matrix a = points.transpose();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    Matrix z = layers[k].weight * a;
    z.colwise() += layers[k].bias;
    a = k + 1 == layers.size() ? z : Matrix(z.array().tanh().matrix());
  }
  return a.row(0).transpose();
}

inline DerivBatch forward_with_input_derivs(const NetworkParams& params, const Matrix& points) {
  TaylorTape tape(params, points, 2);
  DerivBatch out;
  out.u = tape.values();
  out.grad_x = tape.grad_x();
  out.lap = tape.laplacian();
  out.has_input_derivs = true;
  return out;
}

inline DerivBatch param_jacobians(const NetworkParams& params, const Matrix& points) {
  TaylorTape tape(params, points, 2);
  DerivBatch out;
  out.u = tape.values();
  out.grad_x = tape.grad_x();
  out.lap = tape.laplacian();
  const Vector ones = Vector::Ones(tape.size());
  out.jac_u = tape.jacobian(Seeds{ones, {}, {}});
  out.jac_lap = tape.jacobian(Seeds{{}, ones, {}});
  out.has_input_derivs = true;
  out.has_jacobians = true;
  return out;
}

// Loss of the form sum_i term(u_i, lap_i, i). term is evaluated on Jets so
// its partials with respect to u_i and lap_i drive the reverse sweep.
struct PointwiseLoss {
  std::function<Jet(const Jet& u, const Jet& lap, Eigen::Index i)> term;
  bool uses_laplacian = true;
};

struct ScalarGrad {
  double value = 0.0;
  Vector grad;
};

inline ScalarGrad grad_of_scalar(const NetworkParams& params, const PointwiseLoss& loss,
                                 const Matrix& points) {
  if (!loss.term) throw Error(ErrorKind::unsupported, "loss has no term");
  TaylorTape tape(params, points, loss.uses_laplacian ? 2 : 0);
  const Eigen::Index n = tape.size();
  const Vector& u = tape.values();
  const Vector lap = loss.uses_laplacian ? tape.laplacian() : Vector::Zero(n);
  Seeds seeds{Vector(n), loss.uses_laplacian ? Vector(n) : Vector(), {}};
  ScalarGrad out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Jet term = loss.term(Jet::var_u(u[i]), Jet::var_lap(lap[i]), i);
    if (!loss.uses_laplacian && term.dl != 0.0) {
      throw Error(ErrorKind::unsupported, "loss depends on the Laplacian but declares it unused");
    }
    out.value += term.v;
    seeds.u[i] = term.du;
    if (loss.uses_laplacian) seeds.lap[i] = term.dl;
  }
  out.grad = tape.vjp(seeds);
  return out;
}

}  // namespace homopinn
