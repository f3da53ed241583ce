#include <gtest/gtest.h>

#include <cmath>

#include "homopinn/derivs.hpp"
#include "test_support.hpp"

using namespace homopinn;
using homopinn::oracle::naive_eval;
using homopinn::oracle::random_net;
using homopinn::oracle::random_points;
using homopinn::oracle::rel_err;

namespace {

Matrix one_point(const std::vector<double>& x) {
  Matrix m(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) m(0, static_cast<Eigen::Index>(j)) = x[j];
  return m;
}

double fd_first(const NetworkParams& net, std::vector<double> x, std::size_t j, double h) {
  auto xp = x, xm = x;
  xp[j] += h;
  xm[j] -= h;
  return (naive_eval(net, xp) - naive_eval(net, xm)) / (2 * h);
}

double fd_lap(const NetworkParams& net, const std::vector<double>& x, double h) {
  double lap = 0.0;
  const double u0 = naive_eval(net, x);
  for (std::size_t j = 0; j < x.size(); ++j) {
    auto xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    lap += (naive_eval(net, xp) - 2 * u0 + naive_eval(net, xm)) / (h * h);
  }
  return lap;
}

// d(quantity)/d theta by central differences over the flat parameter vector.
template <class F>
Vector fd_theta(const NetworkParams& net, F&& quantity, double h) {
  const auto dims = net.dims();
  const Vector theta = net.flatten();
  Vector out(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Vector tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    out[k] = (quantity(NetworkParams::unflatten(dims, tp)) -
              quantity(NetworkParams::unflatten(dims, tm))) /
             (2 * h);
  }
  return out;
}

}  // namespace

TEST(Forward, ZeroNetworkReturnsOutputBias) {
  auto net = NetworkParams::zeros({2, 5, 5, 1});
  net.layers().back().bias[0] = 0.37;
  const Vector u = forward(net, random_points(9, 2, 1));
  for (Eigen::Index i = 0; i < u.size(); ++i) EXPECT_EQ(u[i], 0.37);
}

TEST(Forward, SingleAffineLayer) {
  Matrix w(1, 1);
  w << 2.0;
  Vector b(1);
  b << 1.0;
  NetworkParams net({{w, b}});
  EXPECT_EQ(forward(net, one_point({3.0}))[0], 7.0);
}

TEST(Forward, MatchesIndependentScalarEvaluator) {
  // Eigen's blocked products sum in a different order from the scalar loops,
  // so agreement is to rounding, not bitwise.
  const auto net = random_net({3, 30, 30, 30, 1}, 11);
  const Matrix pts = random_points(10, 3, 12);
  const Vector u = forward(net, pts);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double ref = naive_eval(net, oracle::row(pts, i));
    EXPECT_NEAR(u[i], ref, 1e-14 * std::max(1.0, std::abs(ref)));
  }
  // The Taylor tape's value channel is the same computation.
  EXPECT_EQ(forward_with_input_derivs(net, pts).u, u);
}

TEST(Forward, DimensionMismatchIsShapeError) {
  const auto net = random_net({2, 4, 1}, 0);
  try {
    forward(net, random_points(3, 3, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
  EXPECT_THROW(forward_with_input_derivs(net, random_points(3, 1, 0)), Error);
  EXPECT_THROW(param_jacobians(net, random_points(3, 1, 0)), Error);
}

TEST(InputDerivs, AffineNetworkHasZeroLaplacian) {
  Matrix w(1, 3);
  w << 0.5, -2.0, 1.25;
  NetworkParams net({{w, Vector::Constant(1, 0.1)}});
  const Matrix pts = random_points(7, 3, 3);
  const auto batch = forward_with_input_derivs(net, pts);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    EXPECT_EQ(batch.lap[i], 0.0);
    EXPECT_EQ(batch.grad_x(i, 0), 0.5);
    EXPECT_EQ(batch.grad_x(i, 1), -2.0);
    EXPECT_EQ(batch.grad_x(i, 2), 1.25);
  }
}

TEST(InputDerivs, ZeroBiasNetAtOriginIsExactlyLinear) {
  // tanh''(0) = 0 and tanh'(0) = 1: at x = 0 the Laplacian vanishes and the
  // gradient is the product of the weight matrices.
  const auto net = init_xavier({3, 8, 8, 1}, 4);
  const auto batch = forward_with_input_derivs(net, Matrix::Zero(1, 3));
  EXPECT_EQ(batch.lap[0], 0.0);
  EXPECT_EQ(batch.u[0], 0.0);
  const auto& L = net.layers();
  const Matrix prod = L[2].weight * L[1].weight * L[0].weight;
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(batch.grad_x(0, j), prod(0, j), 1e-15);
}

TEST(InputDerivs, ZeroHiddenWeightsGiveConstantOutput) {
  auto net = random_net({2, 6, 6, 1}, 8);
  net.layers()[1].weight.setZero();
  const auto batch = forward_with_input_derivs(net, random_points(5, 2, 9));
  EXPECT_TRUE(batch.lap.isZero(0.0));
  EXPECT_TRUE(batch.grad_x.isZero(0.0));
}

TEST(InputDerivs, MatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int d = 1 + static_cast<int>(seed % 3);
    const auto net = random_net({d, 16, 16, 1}, 100 + seed);
    const Matrix pts = random_points(4, d, 200 + seed);
    const auto batch = forward_with_input_derivs(net, pts);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const auto x = oracle::row(pts, i);
      Vector fd(d);
      for (int j = 0; j < d; ++j) fd[j] = fd_first(net, x, j, 1e-5);
      EXPECT_LT(rel_err(Vector(batch.grad_x.row(i).transpose()), fd), 1e-6);
      EXPECT_LT(rel_err(batch.lap[i], fd_lap(net, x, 1e-4), 1e-2), 1e-4)
          << "seed " << seed << " lap " << batch.lap[i];
    }
  }
}

TEST(ParamJacobians, OutputBiasColumn) {
  const auto net = random_net({2, 8, 8, 1}, 5);
  const auto batch = param_jacobians(net, random_points(6, 2, 6));
  const auto last = batch.jac_u.cols() - 1;
  EXPECT_TRUE(batch.jac_u.col(last).isOnes(0.0));
  EXPECT_TRUE(batch.jac_lap.col(last).isZero(0.0));
  EXPECT_TRUE(batch.has_jacobians);
  EXPECT_EQ(static_cast<std::size_t>(batch.jac_u.cols()), net.param_count());
}

TEST(ParamJacobians, JacUMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto net = random_net({1, 8, 1}, 300 + seed);
    const Matrix pts = random_points(5, 1, 400 + seed);
    const auto batch = param_jacobians(net, pts);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const Matrix x = pts.row(i);
      const Vector fd = fd_theta(net, [&](const NetworkParams& p) { return forward(p, x)[0]; }, 1e-6);
      EXPECT_LT(rel_err(Vector(batch.jac_u.row(i).transpose()), fd), 1e-5);
    }
  }
}

TEST(ParamJacobians, JacLapMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto net = random_net({2, 8, 1}, 500 + seed);
    const Matrix pts = random_points(5, 2, 600 + seed);
    const auto batch = param_jacobians(net, pts);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const Matrix x = pts.row(i);
      const Vector fd = fd_theta(
          net, [&](const NetworkParams& p) { return forward_with_input_derivs(p, x).lap[0]; }, 1e-6);
      EXPECT_LT(rel_err(Vector(batch.jac_lap.row(i).transpose()), fd), 1e-4);
    }
  }
}

TEST(ParamJacobians, DeepNetworkAgreesWithFiniteDifferences) {
  const auto net = random_net({2, 6, 6, 6, 1}, 77);
  const Matrix pts = random_points(3, 2, 78);
  const auto batch = param_jacobians(net, pts);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const Matrix x = pts.row(i);
    const Vector fd_u = fd_theta(net, [&](const NetworkParams& p) { return forward(p, x)[0]; }, 1e-6);
    const Vector fd_lap = fd_theta(
        net, [&](const NetworkParams& p) { return forward_with_input_derivs(p, x).lap[0]; }, 1e-6);
    EXPECT_LT(rel_err(Vector(batch.jac_u.row(i).transpose()), fd_u), 1e-5);
    EXPECT_LT(rel_err(Vector(batch.jac_lap.row(i).transpose()), fd_lap), 1e-4);
  }
}

TEST(ParamJacobians, StorageGuard) {
  const auto net = NetworkParams::zeros({1, 64, 64, 1});  // p = 4353
  try {
    param_jacobians(net, Matrix::Zero(4096, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::too_large);
  }
}

TEST(ParamJacobians, Deterministic) {
  const auto net = random_net({2, 10, 10, 1}, 9);
  const Matrix pts = random_points(12, 2, 10);
  const auto a = param_jacobians(net, pts);
  const auto b = param_jacobians(net, pts);
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.lap, b.lap);
  EXPECT_EQ(a.jac_u, b.jac_u);
  EXPECT_EQ(a.jac_lap, b.jac_lap);
}

TEST(GradOfScalar, ZeroResidualGivesZeroGradient) {
  const auto net = random_net({1, 8, 8, 1}, 1);
  PointwiseLoss loss{[](const Jet& u, const Jet&, Eigen::Index) {
                       const Jet r = u - u;
                       return 0.5 * r * r;
                     },
                     false};
  const auto g = grad_of_scalar(net, loss, random_points(10, 1, 2));
  EXPECT_EQ(g.value, 0.0);
  EXPECT_TRUE(g.grad.isZero(0.0));
}

TEST(GradOfScalar, MeanOfOutputIsColumnMeanOfJacobian) {
  const auto net = random_net({2, 8, 8, 1}, 3);
  const Matrix pts = random_points(15, 2, 4);
  const double n = static_cast<double>(pts.rows());
  PointwiseLoss loss{[n](const Jet& u, const Jet&, Eigen::Index) { return u / n; }, false};
  const auto g = grad_of_scalar(net, loss, pts);
  const Vector colmean = param_jacobians(net, pts).jac_u.colwise().mean().transpose();
  EXPECT_LT(rel_err(g.grad, colmean), 1e-13);
}

TEST(GradOfScalar, AllenCahnResidualLossMatchesFiniteDifferences) {
  const auto net = random_net({1, 10, 10, 1}, 21);
  const Matrix pts = random_points(20, 1, 22, 0.0, 1.0);
  const double eps = 0.1;
  const double n = static_cast<double>(pts.rows());
  auto term = [&](const auto& u, const auto& lap) {
    const auto r = eps * eps * lap + u - u * u * u;
    return r * r / (2.0 * n);
  };
  PointwiseLoss loss{[&](const Jet& u, const Jet& lap, Eigen::Index) { return term(u, lap); }};
  const auto g = grad_of_scalar(net, loss, pts);

  auto total = [&](const NetworkParams& p) {
    const auto b = forward_with_input_derivs(p, pts);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) acc += term(b.u[i], b.lap[i]);
    return acc;
  };
  EXPECT_NEAR(g.value, total(net), 1e-15);
  EXPECT_LT(rel_err(g.grad, fd_theta(net, total, 1e-6)), 1e-5);
}

TEST(GradOfScalar, UndeclaredLaplacianDependenceIsUnsupported) {
  const auto net = random_net({1, 4, 1}, 0);
  PointwiseLoss loss{[](const Jet& u, const Jet&, Eigen::Index) { return u + Jet(0.0, 0.0, 1.0); },
                     false};
  try {
    grad_of_scalar(net, loss, random_points(3, 1, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unsupported);
  }
}
