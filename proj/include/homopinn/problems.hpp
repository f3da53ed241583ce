#pragma once

// Homotopy problem definitions H(u, eps) = 0 with their linearization
// (action of H_u on a direction), parameter derivative H_eps, Dirichlet data
// and closed-form solutions where known.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "homopinn/errors.hpp"
#include "homopinn/jet.hpp"
#include "homopinn/network.hpp"

namespace homopinn {

using Point = std::span<const double>;

class HomotopyProblem {
 public:
  virtual ~HomotopyProblem() = default;

  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  // Domain is the box [lo, hi]^dim.
  virtual double lo() const = 0;
  virtual double hi() const = 0;
  virtual bool uses_laplacian() const = 0;
  virtual bool has_boundary() const = 0;
  virtual bool has_exact() const { return false; }

  virtual double residual(double u, double lap, Point x, double eps) const = 0;
  virtual Jet residual(const Jet& u, const Jet& lap, Point x, double eps) const = 0;

  // H_u at state u applied to direction v (with Laplacian lap_v).
  virtual double hu_action(double u, double v, double lap_v, Point x, double eps) const = 0;
  virtual Jet hu_action(const Jet& u, const Jet& v, const Jet& lap_v, Point x,
                        double eps) const = 0;

  virtual double h_eps(double u, double lap, Point x, double eps) const = 0;
  virtual Jet h_eps(const Jet& u, const Jet& lap, Point x, double eps) const = 0;

  // Dirichlet data g(x; eps) and dg/deps.
  virtual double boundary_value(Point, double) const { return 0.0; }
  virtual double boundary_value_eps(Point, double) const { return 0.0; }

  virtual double exact(Point, double) const {
    throw Error(ErrorKind::unsupported, "problem '" + id() + "' has no closed-form solution");
  }
};

using ProblemPtr = std::shared_ptr<const HomotopyProblem>;

// Implements the double/Jet virtual pairs from templated members of Derived:
// residual_t, hu_action_t, h_eps_t.
template <class Derived>
class ProblemModel : public HomotopyProblem {
 public:
  double residual(double u, double lap, Point x, double eps) const override {
    return self().residual_t(u, lap, x, eps);
  }
  Jet residual(const Jet& u, const Jet& lap, Point x, double eps) const override {
    return self().residual_t(u, lap, x, eps);
  }
  double hu_action(double u, double v, double lap_v, Point x, double eps) const override {
    return self().hu_action_t(u, v, lap_v, x, eps);
  }
  Jet hu_action(const Jet& u, const Jet& v, const Jet& lap_v, Point x, double eps) const override {
    return self().hu_action_t(u, v, lap_v, x, eps);
  }
  double h_eps(double u, double lap, Point x, double eps) const override {
    return self().h_eps_t(u, lap, x, eps);
  }
  Jet h_eps(const Jet& u, const Jet& lap, Point x, double eps) const override {
    return self().h_eps_t(u, lap, x, eps);
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

/// Steady 1D Allen-Cahn on [0,1]: eps^2 u'' + u - u^3 = 0, u(0) = -1, u(1) = 1.
/// Exact solution tanh((x - 1/2) / (sqrt(2) eps)).
class AllenCahn1D final : public ProblemModel<AllenCahn1D> {
 public:
  std::string id() const override { return "ac1d"; }
  int dim() const override { return 1; }
  double lo() const override { return 0.0; }
  double hi() const override { return 1.0; }
  bool uses_laplacian() const override { return true; }
  bool has_boundary() const override { return true; }
  bool has_exact() const override { return true; }

  template <class T>
  T residual_t(const T& u, const T& lap, Point, double eps) const {
    return eps * eps * lap + u - u * u * u;
  }
  template <class T>
  T hu_action_t(const T& u, const T& v, const T& lap_v, Point, double eps) const {
    return eps * eps * lap_v + (1.0 - 3.0 * u * u) * v;
  }
  template <class T>
  T h_eps_t(const T&, const T& lap, Point, double eps) const {
    return 2.0 * eps * lap;
  }

  double boundary_value(Point x, double) const override { return x[0] < 0.5 ? -1.0 : 1.0; }

  double exact(Point x, double eps) const override {
    return std::tanh((x[0] - 0.5) / (std::numbers::sqrt2 * eps));
  }
};

/// Pseudo-time embedding of the 2D Allen-Cahn steady state on [-1,1]^2:
///   H(u, s) = (1 - s)(eps(s)^2 lap u - u(u^2 - 1)) + s (u - u0),
///   u0 = -sin(pi x) sin(pi y),  eps(s) = max(s, eps_floor),
/// with zero Dirichlet data. The path parameter s plays the role of eps in
/// the trainer; h_eps returns the total s-derivative including the
/// eps(s) chain-rule term.
class AllenCahn2DPseudoTime final : public ProblemModel<AllenCahn2DPseudoTime> {
 public:
  explicit AllenCahn2DPseudoTime(double eps_floor = 0.05) : eps_floor_(eps_floor) {}

  std::string id() const override { return "ac2d"; }
  int dim() const override { return 2; }
  double lo() const override { return -1.0; }
  double hi() const override { return 1.0; }
  bool uses_laplacian() const override { return true; }
  bool has_boundary() const override { return true; }

  double eps_floor() const { return eps_floor_; }
  double eps_of(double s) const { return std::max(s, eps_floor_); }
  double eps_slope(double s) const { return s > eps_floor_ ? 1.0 : 0.0; }

  static double initial_condition(Point x) {
    return -std::sin(std::numbers::pi * x[0]) * std::sin(std::numbers::pi * x[1]);
  }

  template <class T>
  T residual_t(const T& u, const T& lap, Point x, double s) const {
    const double e = eps_of(s);
    return (1.0 - s) * (e * e * lap - u * (u * u - 1.0)) + s * (u - initial_condition(x));
  }
  template <class T>
  T hu_action_t(const T& u, const T& v, const T& lap_v, Point, double s) const {
    const double e = eps_of(s);
    return (1.0 - s) * (e * e * lap_v - (3.0 * u * u - 1.0) * v) + s * v;
  }
  template <class T>
  T h_eps_t(const T& u, const T& lap, Point x, double s) const {
    const double e = eps_of(s);
    return -(e * e * lap - u * (u * u - 1.0)) + (u - initial_condition(x)) +
           (1.0 - s) * 2.0 * e * eps_slope(s) * lap;
  }

 private:
  double eps_floor_;
};

/// Helmholtz-type problem on [-1,1]^d: eps^2 lap u + u/d = 0 with exact
/// solution sin(sum_i x_i / (d eps)) used as Dirichlet data.
class Helmholtz final : public ProblemModel<Helmholtz> {
 public:
  explicit Helmholtz(int d) : d_(d) {
    if (d < 1) throw Error(ErrorKind::invalid_dimension, "helmholtz dimension must be >= 1");
  }

  std::string id() const override { return "helmholtz"; }
  int dim() const override { return d_; }
  double lo() const override { return -1.0; }
  double hi() const override { return 1.0; }
  bool uses_laplacian() const override { return true; }
  bool has_boundary() const override { return true; }
  bool has_exact() const override { return true; }

  template <class T>
  T residual_t(const T& u, const T& lap, Point, double eps) const {
    return eps * eps * lap + u / static_cast<double>(d_);
  }
  template <class T>
  T hu_action_t(const T&, const T& v, const T& lap_v, Point, double eps) const {
    return eps * eps * lap_v + v / static_cast<double>(d_);
  }
  template <class T>
  T h_eps_t(const T&, const T& lap, Point, double eps) const {
    return 2.0 * eps * lap;
  }

  double exact(Point x, double eps) const override { return std::sin(phase(x, eps)); }
  double boundary_value(Point x, double eps) const override { return exact(x, eps); }
  double boundary_value_eps(Point x, double eps) const override {
    return -std::cos(phase(x, eps)) * phase(x, eps) / eps;
  }

 private:
  double phase(Point x, double eps) const {
    double sum = 0.0;
    for (double xi : x) sum += xi;
    return sum / (d_ * eps);
  }

  int d_;
};

/// Pure regression homotopy H(u, eps) = u - target(x, eps); no boundary term.
class RegressionProblem final : public ProblemModel<RegressionProblem> {
 public:
  using Target = std::function<double(Point, double)>;

  RegressionProblem(std::string id, int dim, double lo, double hi, Target target,
                    Target target_eps)
      : id_(std::move(id)),
        dim_(dim),
        lo_(lo),
        hi_(hi),
        target_(std::move(target)),
        target_eps_(std::move(target_eps)) {}

  std::string id() const override { return id_; }
  int dim() const override { return dim_; }
  double lo() const override { return lo_; }
  double hi() const override { return hi_; }
  bool uses_laplacian() const override { return false; }
  bool has_boundary() const override { return false; }
  bool has_exact() const override { return true; }

  template <class T>
  T residual_t(const T& u, const T&, Point x, double eps) const {
    return u - target_(x, eps);
  }
  template <class T>
  T hu_action_t(const T&, const T& v, const T&, Point, double) const {
    return v;
  }
  template <class T>
  T h_eps_t(const T&, const T&, Point x, double eps) const {
    return T(-target_eps_(x, eps));
  }

  double exact(Point x, double eps) const override { return target_(x, eps); }

 private:
  std::string id_;
  int dim_;
  double lo_, hi_;
  Target target_;
  Target target_eps_;
};

inline ProblemPtr make_ac1d() { return std::make_shared<AllenCahn1D>(); }

inline ProblemPtr make_ac2d_pseudotime() { return std::make_shared<AllenCahn2DPseudoTime>(); }

inline ProblemPtr make_helmholtz(int d) { return std::make_shared<Helmholtz>(d); }

/// sin(pi x / eps) on [0,1].
inline ProblemPtr make_highfreq() {
  return std::make_shared<RegressionProblem>(
      "highfreq", 1, 0.0, 1.0,
      [](Point x, double eps) { return std::sin(std::numbers::pi * x[0] / eps); },
      [](Point x, double eps) {
        const double a = std::numbers::pi * x[0];
        return -a / (eps * eps) * std::cos(a / eps);
      });
}

inline ProblemPtr make_problem(const std::string& id, int dim = 0) {
  if (id == "ac1d") return make_ac1d();
  if (id == "ac2d") return make_ac2d_pseudotime();
  if (id == "highfreq") return make_highfreq();
  if (id == "helmholtz") return make_helmholtz(dim);
  throw Error(ErrorKind::unsupported, "unknown problem id '" + id + "'");
}

// ---------------------------------------------------------------------------

/// Strictly decreasing homotopy parameters eps_0 > eps_1 > ... > eps_n.
/// Entries are positive except that a pseudo-time path may end at exactly 0.
class EpsSchedule {
 public:
  EpsSchedule() = default;

  explicit EpsSchedule(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw Error(ErrorKind::schedule, "schedule is empty");
    for (std::size_t k = 0; k < values_.size(); ++k) {
      if (!std::isfinite(values_[k])) throw Error(ErrorKind::schedule, "schedule entry not finite");
      if (values_[k] < 0.0 || (values_[k] == 0.0 && k + 1 != values_.size())) {
        throw Error(ErrorKind::schedule, "schedule entries must be positive");
      }
      if (k > 0 && !(values_[k] < values_[k - 1])) {
        throw Error(ErrorKind::schedule, "schedule must strictly decrease");
      }
    }
  }

  // start, start - step, ..., down to end (inclusive when it lands on the
  // grid). Entries are computed as start - k*step to avoid drift.
  static EpsSchedule range(double start, double end, double step) {
    if (!(step > 0.0)) throw Error(ErrorKind::schedule, "schedule step must be positive");
    if (!(start >= end)) throw Error(ErrorKind::schedule, "schedule must strictly decrease");
    std::vector<double> v;
    const auto count = static_cast<long>(std::floor((start - end) / step + 1e-9));
    for (long k = 0; k <= count; ++k) v.push_back(round12(start - k * step));
    if (v.back() - end > 1e-12) v.push_back(end);
    return EpsSchedule(std::move(v));
  }

  // Joins schedules, dropping a duplicated junction point.
  EpsSchedule then(const EpsSchedule& next) const {
    std::vector<double> v = values_;
    for (double e : next.values_) {
      if (!v.empty() && std::abs(v.back() - e) < 1e-12) continue;
      v.push_back(e);
    }
    return EpsSchedule(std::move(v));
  }

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  double head() const { return values_.front(); }
  double tail() const { return values_.back(); }

  // Step size eps_{k-1} - eps_k > 0.
  double step(std::size_t k) const { return values_[k - 1] - values_[k]; }

 private:
  static double round12(double x) { return std::round(x * 1e12) / 1e12; }

  std::vector<double> values_;
};

// ---------------------------------------------------------------------------

struct CollocationSet {
  Matrix interior;  // n_res x d
  Matrix boundary;  // n_bc x d
  double lo = 0.0;
  double hi = 1.0;

  int dim() const { return static_cast<int>(interior.cols()); }
};

enum class SampleMode { grid, uniform_random };

namespace detail {

inline int exact_root(long n, int d) {
  const auto m = static_cast<long>(std::llround(std::pow(static_cast<double>(n), 1.0 / d)));
  for (long c = std::max(1L, m - 1); c <= m + 1; ++c) {
    long p = 1;
    for (int k = 0; k < d; ++k) p *= c;
    if (p == n) return static_cast<int>(c);
  }
  return -1;
}

}  // namespace detail

/// Interior points: cell-centred tensor grid (grid mode) or i.i.d. uniform in
/// the open box. Boundary points: spread over the 2d faces, remainder
/// round-robin; evenly spaced along faces in grid mode for d <= 2, uniform
/// otherwise.
inline CollocationSet sample_collocation(const HomotopyProblem& problem, long n_res, long n_bc,
                                         SampleMode mode, std::uint64_t seed) {
  if (n_res < 1) throw Error(ErrorKind::precondition, "n_res must be positive");
  if (n_bc < 0) throw Error(ErrorKind::precondition, "n_bc must be non-negative");
  const int d = problem.dim();
  const double lo = problem.lo(), hi = problem.hi(), len = hi - lo;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(lo, hi);
  auto draw_open = [&] {
    double v;
    do v = uni(rng);
    while (v <= lo || v >= hi);
    return v;
  };

  CollocationSet set;
  set.lo = lo;
  set.hi = hi;
  set.interior.resize(n_res, d);
  if (mode == SampleMode::grid) {
    const int m = detail::exact_root(n_res, d);
    if (m < 0) {
      throw Error(ErrorKind::precondition,
                  "n_res = " + std::to_string(n_res) + " is not a perfect power of d = " +
                      std::to_string(d));
    }
    for (long i = 0; i < n_res; ++i) {
      long rem = i;
      for (int j = d - 1; j >= 0; --j) {
        const long k = rem % m;
        rem /= m;
        set.interior(i, j) = lo + (static_cast<double>(k) + 0.5) / m * len;
      }
    }
  } else {
    for (long i = 0; i < n_res; ++i)
      for (int j = 0; j < d; ++j) set.interior(i, j) = draw_open();
  }

  set.boundary.resize(n_bc, d);
  const int faces = 2 * d;
  long row = 0;
  for (int f = 0; f < faces; ++f) {
    const long count = n_bc / faces + (f < n_bc % faces ? 1 : 0);
    const int axis = f / 2;
    const double side = f % 2 == 0 ? lo : hi;
    for (long q = 0; q < count; ++q, ++row) {
      for (int j = 0; j < d; ++j) {
        if (j == axis) {
          set.boundary(row, j) = side;
        } else if (mode == SampleMode::grid && d == 2) {
          set.boundary(row, j) = lo + (static_cast<double>(q) + 0.5) / count * len;
        } else {
          set.boundary(row, j) = uni(rng);
        }
      }
    }
  }
  return set;
}

inline std::vector<double> point_of(const Matrix& pts, Eigen::Index i) {
  std::vector<double> x(pts.cols());
  for (Eigen::Index j = 0; j < pts.cols(); ++j) x[j] = pts(i, j);
  return x;
}

}  // namespace homopinn
