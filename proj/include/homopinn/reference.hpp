#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "homopinn/errors.hpp"
#include "homopinn/losses.hpp"
#include "homopinn/network.hpp"
#include "homopinn/problems.hpp"

namespace homopinn {

inline double l2re(const Vector& u_pred, const Vector& u_true) {
  if (u_pred.size() != u_true.size()) throw Error(ErrorKind::shape, "l2re: length mismatch");
  const double den = u_true.norm();
  if (!(den > 0.0)) throw Error(ErrorKind::undefined_metric, "l2re: reference has zero norm");
  return (u_pred - u_true).norm() / den;
}

inline Vector eval_exact(const HomotopyProblem& problem, const Matrix& points, double eps) {
  if (!problem.has_exact()) {
    throw Error(ErrorKind::unsupported, "problem '" + problem.id() + "' has no exact solution");
  }
  if (points.cols() != problem.dim()) throw Error(ErrorKind::shape, "point dimension mismatch");
  const PointRows rows(points);
  Vector u(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) u[i] = problem.exact(rows[i], eps);
  return u;
}

/// Node values on a uniform nx x ny grid over [lo, hi]^2, boundary nodes
/// included. values(i, j) sits at (x_i, y_j).
struct GridField2D {
  int nx = 0;
  int ny = 0;
  double lo = -1.0;
  double hi = 1.0;
  Matrix values;

  GridField2D() = default;
  GridField2D(int nx_, int ny_, double lo_ = -1.0, double hi_ = 1.0)
      : nx(nx_), ny(ny_), lo(lo_), hi(hi_), values(Matrix::Zero(nx_, ny_)) {
    if (nx < 3 || ny < 3) throw Error(ErrorKind::precondition, "grid needs at least 3x3 nodes");
    if (!(hi > lo)) throw Error(ErrorKind::precondition, "empty grid box");
  }

  double hx() const { return (hi - lo) / (nx - 1); }
  double hy() const { return (hi - lo) / (ny - 1); }
  double x(int i) const { return lo + i * hx(); }
  double y(int j) const { return lo + j * hy(); }

  // Bilinear interpolation, clamped to the box.
  double at(double px, double py) const {
    const double fx = std::clamp((px - lo) / hx(), 0.0, nx - 1.0);
    const double fy = std::clamp((py - lo) / hy(), 0.0, ny - 1.0);
    const int i = std::min(static_cast<int>(fx), nx - 2);
    const int j = std::min(static_cast<int>(fy), ny - 2);
    const double a = fx - i, b = fy - j;
    return (1 - a) * (1 - b) * values(i, j) + a * (1 - b) * values(i + 1, j) +
           (1 - a) * b * values(i, j + 1) + a * b * values(i + 1, j + 1);
  }

  Vector at(const Matrix& points) const {
    if (points.cols() != 2) throw Error(ErrorKind::shape, "grid field needs 2D points");
    Vector u(points.rows());
    for (Eigen::Index k = 0; k < points.rows(); ++k) u[k] = at(points(k, 0), points(k, 1));
    return u;
  }

  void validate() const {
    if (values.rows() != nx || values.cols() != ny) {
      throw Error(ErrorKind::shape, "grid values do not match nx x ny");
    }
    if (!values.allFinite()) throw Error(ErrorKind::non_finite, "grid field has non-finite values");
  }
};

inline void write_grid_csv(std::ostream& os, const GridField2D& g) {
  os << "x,y,u\n";
  os.precision(17);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j) os << g.x(i) << ',' << g.y(j) << ',' << g.values(i, j) << '\n';
}

namespace detail {
inline constexpr char kGridMagic[8] = {'H', 'P', 'G', 'R', 'I', 'D', '0', '1'};
}

// Magic, int64 nx, int64 ny, double lo, double hi, then row-major doubles.
inline void write_grid_binary(std::ostream& os, const GridField2D& g) {
  g.validate();
  const std::int64_t dims[2] = {g.nx, g.ny};
  const double box[2] = {g.lo, g.hi};
  os.write(detail::kGridMagic, sizeof detail::kGridMagic);
  os.write(reinterpret_cast<const char*>(dims), sizeof dims);
  os.write(reinterpret_cast<const char*>(box), sizeof box);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j) {
      const double v = g.values(i, j);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  if (!os) throw Error(ErrorKind::io, "failed writing grid field");
}

inline GridField2D read_grid_binary(std::istream& is) {
  char magic[8];
  std::int64_t dims[2];
  double box[2];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + 8, detail::kGridMagic)) {
    throw Error(ErrorKind::io, "not a grid field file");
  }
  is.read(reinterpret_cast<char*>(dims), sizeof dims);
  is.read(reinterpret_cast<char*>(box), sizeof box);
  if (!is || dims[0] < 3 || dims[1] < 3 || dims[0] > 1 << 16 || dims[1] > 1 << 16) {
    throw Error(ErrorKind::io, "corrupt grid header");
  }
  GridField2D g(static_cast<int>(dims[0]), static_cast<int>(dims[1]), box[0], box[1]);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j) is.read(reinterpret_cast<char*>(&g.values(i, j)), sizeof(double));
  if (!is) throw Error(ErrorKind::io, "truncated grid field");
  g.validate();
  return g;
}

inline void save_grid(const std::string& path, const GridField2D& g) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "cannot open " + path);
  write_grid_binary(os, g);
}

inline GridField2D load_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::io, "cannot open " + path);
  return read_grid_binary(is);
}

/// eps^2 Lap_h u - u (u^2 - 1) at interior nodes (boundary entries zero).
inline Matrix ac2d_discrete_residual(const GridField2D& g, double eps) {
  Matrix r = Matrix::Zero(g.nx, g.ny);
  const double ax = 1.0 / (g.hx() * g.hx()), ay = 1.0 / (g.hy() * g.hy());
  const Matrix& u = g.values;
  for (int i = 1; i + 1 < g.nx; ++i)
    for (int j = 1; j + 1 < g.ny; ++j) {
      const double lap = ax * (u(i - 1, j) - 2 * u(i, j) + u(i + 1, j)) +
                         ay * (u(i, j - 1) - 2 * u(i, j) + u(i, j + 1));
      r(i, j) = eps * eps * lap - u(i, j) * (u(i, j) * u(i, j) - 1.0);
    }
  return r;
}

struct FdmOptions {
  double dt = 0.05;
  long max_steps = 20000;
  double tol = 1e-8;
  bool semi_implicit = true;
};

struct FdmResult {
  GridField2D field;
  long steps = 0;
  double increment = 0.0;  // ||u^{k+1} - u^k||_inf / dt at exit
};

/// Steady state of u_t = eps^2 Lap u - u (u^2 - 1) on [-1, 1]^2 with zero
/// Dirichlet data, marched from -sin(pi x) sin(pi y). Semi-implicit mode
/// solves (I - dt eps^2 Lap_h) u^{k+1} = u^k - dt f(u^k) with a factorization
/// reused across steps.
inline FdmResult fdm_ac2d_steady(double eps, int nx, int ny, const FdmOptions& opt = {}) {
  GridField2D g(nx, ny);
  if (!(opt.dt > 0.0) || opt.max_steps < 1 || !(opt.tol > 0.0)) {
    throw Error(ErrorKind::precondition, "fdm needs dt > 0, max_steps >= 1, tol > 0");
  }
  const double hx = g.hx(), hy = g.hy();
  const double h = std::min(hx, hy);
  if (!opt.semi_implicit && opt.dt > 0.5 * h * h / (4.0 * eps * eps)) {
    throw Error(ErrorKind::precondition, "explicit time step above the stability limit");
  }
  const int mx = nx - 2, my = ny - 2;
  const auto idx = [my](int i, int j) { return i * my + j; };
  const double cx = eps * eps / (hx * hx), cy = eps * eps / (hy * hy);

  Vector u(mx * my);
  for (int i = 0; i < mx; ++i)
    for (int j = 0; j < my; ++j) {
      u[idx(i, j)] = -std::sin(std::numbers::pi * g.x(i + 1)) * std::sin(std::numbers::pi * g.y(j + 1));
    }

  const auto apply_lap = [&](const Vector& w) {
    Vector out(w.size());
    for (int i = 0; i < mx; ++i)
      for (int j = 0; j < my; ++j) {
        const double c = w[idx(i, j)];
        const double l = i > 0 ? w[idx(i - 1, j)] : 0.0, r = i + 1 < mx ? w[idx(i + 1, j)] : 0.0;
        const double d = j > 0 ? w[idx(i, j - 1)] : 0.0, t = j + 1 < my ? w[idx(i, j + 1)] : 0.0;
        out[idx(i, j)] = cx * (l - 2 * c + r) + cy * (d - 2 * c + t);
      }
    return out;
  };

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  if (opt.semi_implicit) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(5 * mx * my));
    for (int i = 0; i < mx; ++i)
      for (int j = 0; j < my; ++j) {
        const int k = idx(i, j);
        trip.emplace_back(k, k, 1.0 + opt.dt * 2.0 * (cx + cy));
        if (i > 0) trip.emplace_back(k, idx(i - 1, j), -opt.dt * cx);
        if (i + 1 < mx) trip.emplace_back(k, idx(i + 1, j), -opt.dt * cx);
        if (j > 0) trip.emplace_back(k, idx(i, j - 1), -opt.dt * cy);
        if (j + 1 < my) trip.emplace_back(k, idx(i, j + 1), -opt.dt * cy);
      }
    Eigen::SparseMatrix<double> A(mx * my, mx * my);
    A.setFromTriplets(trip.begin(), trip.end());
    solver.compute(A);
    if (solver.info() != Eigen::Success) {
      throw Error(ErrorKind::no_convergence, "fdm: factorization failed");
    }
  }

  double inc = 0.0;
  for (long step = 1; step <= opt.max_steps; ++step) {
    const Vector f = u.array() * (u.array().square() - 1.0);
    Vector next = opt.semi_implicit ? Vector(solver.solve(u - opt.dt * f))
                                    : Vector(u + opt.dt * (apply_lap(u) - f));
    if (!next.allFinite()) throw NoConvergenceError(std::numeric_limits<double>::infinity(), "fdm: non-finite state");
    inc = (next - u).lpNorm<Eigen::Infinity>() / opt.dt;
    u = std::move(next);
    if (inc < opt.tol) {
      for (int i = 0; i < mx; ++i)
        for (int j = 0; j < my; ++j) g.values(i + 1, j + 1) = u[idx(i, j)];
      return {std::move(g), step, inc};
    }
  }
  throw NoConvergenceError(inc, "fdm: no steady state within " + std::to_string(opt.max_steps) +
                                    " steps (last increment " + std::to_string(inc) + ")");
}

}  // namespace homopinn
