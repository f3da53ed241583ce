#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "homopinn/derivs.hpp"
#include "homopinn/errors.hpp"
#include "homopinn/linalg.hpp"
#include "homopinn/network.hpp"
#include "homopinn/problems.hpp"

namespace homopinn {

// Second-difference matrix tridiag(1, -2, 1) / h^2 with Dirichlet ends.
inline Matrix laplacian_dirichlet(int n, double h) {
  if (n < 2) throw Error(ErrorKind::precondition, "stencil needs n >= 2");
  Matrix L = Matrix::Zero(n, n);
  const double s = 1.0 / (h * h);
  for (int i = 0; i < n; ++i) {
    L(i, i) = -2.0 * s;
    if (i > 0) L(i, i - 1) = s;
    if (i + 1 < n) L(i, i + 1) = s;
  }
  return L;
}

// Dirichlet on the left, reflecting (Neumann) on the right, h = 1/n. Its
// largest |eigenvalue| is 4 n^2 cos^2(pi / (2n + 1)).
inline Matrix laplacian_mixed(int n) {
  Matrix L = laplacian_dirichlet(n, 1.0 / n);
  L(n - 1, n - 1) = -1.0 * n * n;
  return L;
}

// Eigenvalues of -laplacian_dirichlet: (4/h^2) sin^2(j pi / (2(n+1))), j = 1..n.
inline Vector dirichlet_spectrum(int n, double h) {
  Vector lam(n);
  for (int j = 1; j <= n; ++j) {
    const double s = std::sin(j * std::numbers::pi / (2.0 * (n + 1)));
    lam[j - 1] = 4.0 / (h * h) * s * s;
  }
  return lam;
}

inline double dirichlet_lambda_max(int n, double h) {
  const double c = std::cos(std::numbers::pi / (2.0 * (n + 1)));
  return 4.0 / (h * h) * c * c;
}

inline double mixed_lambda_max(int n) {
  const double c = std::cos(std::numbers::pi / (2.0 * n + 1.0));
  return 4.0 * n * n * c * c;
}

// Interior stencil nodes lo + i (hi - lo) / (n + 1), i = 1..n.
inline Matrix stencil_nodes(double lo, double hi, int n) {
  Matrix x(n, 1);
  for (int i = 1; i <= n; ++i) x(i - 1, 0) = lo + i * (hi - lo) / (n + 1);
  return x;
}

/// -eps^2 Lap_h + diag(3u^2 - 1) on [0, 1], h = 1/(n+1).
inline Matrix assemble_D_ac1d(const Vector& u, double eps) {
  const int n = static_cast<int>(u.size());
  Matrix D = -eps * eps * laplacian_dirichlet(n, 1.0 / (n + 1));
  for (int i = 0; i < n; ++i) D(i, i) += 3.0 * u[i] * u[i] - 1.0;
  return D;
}

/// -eps^2 Lap_h + I/d on a line through [-1, 1], h = 2/(n+1).
inline Matrix assemble_D_helmholtz(double eps, int d, int n) {
  if (d < 1) throw Error(ErrorKind::invalid_dimension, "dimension must be >= 1");
  Matrix D = -eps * eps * laplacian_dirichlet(n, 2.0 / (n + 1));
  D.diagonal().array() += 1.0 / d;
  return D;
}

inline Matrix assemble_D_highfreq(int n) {
  if (n < 2) throw Error(ErrorKind::precondition, "stencil needs n >= 2");
  return Matrix::Identity(n, n);
}

inline Matrix assemble_D(const HomotopyProblem& problem, const Vector& u, double eps) {
  const std::string id = problem.id();
  const int n = static_cast<int>(u.size());
  if (id == "ac1d") return assemble_D_ac1d(u, eps);
  if (id == "helmholtz" && problem.dim() == 1) return assemble_D_helmholtz(eps, 1, n);
  if (id == "highfreq") return assemble_D_highfreq(n);
  throw Error(ErrorKind::unsupported, "no stencil operator for problem '" + id + "' in " +
                                          std::to_string(problem.dim()) + "D");
}

struct KernelReport {
  double eps = 0.0;
  int n = 0;
  long p = 0;
  double lam_min_SS = 0.0;
  double lam_max_SS = 0.0;
  double lam_min_DD = 0.0;
  double lam_max_DD = 0.0;
  double lam_min_K = 0.0;
  double lam_max_D = 0.0;
  bool sandwich_ok = false;
};

namespace detail {

// A B^T accumulated in quad precision (double products are exact there).
inline DenseSquare<Quad> gram_quad(const Matrix& A, const Matrix& B) {
  const int n = static_cast<int>(A.rows());
  DenseSquare<Quad> G(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      Quad acc = 0;
      for (Eigen::Index k = 0; k < A.cols(); ++k) acc += Quad(A(i, k)) * Quad(B(j, k));
      G(i, j) = acc;
      G(j, i) = acc;
    }
  }
  return G;
}

inline DenseSquare<Quad> sandwich_quad(const Matrix& D, const DenseSquare<Quad>& G) {
  const int n = G.size();
  DenseSquare<Quad> DG(n), K(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Quad acc = 0;
      for (int k = 0; k < n; ++k) acc += Quad(D(i, k)) * G(k, j);
      DG(i, j) = acc;
    }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      Quad acc = 0;
      for (int k = 0; k < n; ++k) acc += DG(i, k) * Quad(D(j, k));
      K(i, j) = acc;
      K(j, i) = acc;
    }
  return K;
}

inline const Quad kQuadTol = Quad(1e-32);

}  // namespace detail

inline bool sandwich_holds(double lam_min_SS, double lam_min_DD, double lam_max_DD,
                           double lam_min_K, double slack = 1e-9) {
  const double lo = lam_min_SS * lam_min_DD, hi = lam_min_SS * lam_max_DD;
  return lam_min_K >= lo - slack * std::abs(lo) && lam_min_K <= hi + slack * std::abs(hi);
}

/// Spectra of S S^T, D D^T and K = D S S^T D^T at the n interior stencil
/// nodes, where S is the parameter Jacobian of u. Products and eigenvalues are
/// computed in quad precision since S S^T is numerically rank deficient in double.
inline KernelReport kernel_spectrum(const HomotopyProblem& problem, const NetworkParams& params,
                                    int n, double eps) {
  if (problem.dim() != 1) {
    throw Error(ErrorKind::unsupported, "kernel analysis needs a one-dimensional stencil");
  }
  const Matrix x = stencil_nodes(problem.lo(), problem.hi(), n);
  TaylorTape tape(params, x, 0);
  const Matrix S = tape.jacobian(Seeds{Vector::Ones(n), {}, {}});
  if (!S.allFinite()) throw NonFiniteError(0, "non-finite parameter Jacobian");
  const Matrix D = assemble_D(problem, tape.values(), eps);

  const auto G = detail::gram_quad(S, S);
  const auto DD = detail::gram_quad(D, D);
  const auto K = detail::sandwich_quad(D, G);
  const auto eg = jacobi_eigenvalues(G, detail::kQuadTol);
  const auto edd = jacobi_eigenvalues(DD, detail::kQuadTol);
  const auto ek = jacobi_eigenvalues(K, detail::kQuadTol);
  const auto ed = jacobi_eigenvalues(DenseSquare<Quad>::from(D), detail::kQuadTol);

  KernelReport r;
  r.eps = eps;
  r.n = n;
  r.p = static_cast<long>(params.param_count());
  r.lam_min_SS = static_cast<double>(eg.front());
  r.lam_max_SS = static_cast<double>(eg.back());
  r.lam_min_DD = static_cast<double>(edd.front());
  r.lam_max_DD = static_cast<double>(edd.back());
  r.lam_min_K = static_cast<double>(ek.front());
  r.lam_max_D = static_cast<double>(ed.back());
  r.sandwich_ok = sandwich_holds(r.lam_min_SS, r.lam_min_DD, r.lam_max_DD, r.lam_min_K);
  return r;
}

inline void write_kernel_csv(std::ostream& os, const std::vector<KernelReport>& rows) {
  os << "eps,lam_min_SS,lam_min_DD,lam_max_DD,lam_min_K,lam_max_D,sandwich_ok\n";
  os.precision(17);
  for (const auto& r : rows) {
    os << r.eps << ',' << r.lam_min_SS << ',' << r.lam_min_DD << ',' << r.lam_max_DD << ','
       << r.lam_min_K << ',' << r.lam_max_D << ',' << (r.sandwich_ok ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------

struct PositivityReport {
  std::vector<double> lam_min;  // per trial
  std::vector<double> lam_max;
  double min_lam_min = 0.0;
  double max_lam_max = 0.0;
  long parallel_pairs = 0;  // pairs violating the non-parallel hypothesis
  bool positive = false;    // every trial has lam_min > margin * lam_max
};

/// lambda_min(S S^T) over `trials` Xavier draws for fixed points.
inline PositivityReport check_ss_positivity(const std::vector<int>& dims, const Matrix& points,
                                            int trials, std::uint64_t seed,
                                            double margin = 1e-12) {
  if (trials < 1) throw Error(ErrorKind::precondition, "need at least one trial");
  const Eigen::Index n = points.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (points.row(i) == points.row(j)) {
        throw Error(ErrorKind::precondition, "duplicate sample points " + std::to_string(j) +
                                                 " and " + std::to_string(i));
      }
    }
  }
  PositivityReport rep;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      const double ni = points.row(i).norm(), nj = points.row(j).norm();
      const double c = ni > 0 && nj > 0 ? points.row(i).dot(points.row(j)) / (ni * nj) : 1.0;
      if (std::abs(c) > 1.0 - 1e-12) ++rep.parallel_pairs;
    }
  }
  rep.positive = true;
  for (int t = 0; t < trials; ++t) {
    const NetworkParams params = init_xavier(dims, seed + static_cast<std::uint64_t>(t));
    TaylorTape tape(params, points, 0);
    const Matrix S = tape.jacobian(Seeds{Vector::Ones(n), {}, {}});
    const auto eig = jacobi_eigenvalues(detail::gram_quad(S, S), detail::kQuadTol);
    const double lo = static_cast<double>(eig.front()), hi = static_cast<double>(eig.back());
    rep.lam_min.push_back(lo);
    rep.lam_max.push_back(hi);
    rep.positive = rep.positive && lo > margin * hi;
  }
  rep.min_lam_min = *std::min_element(rep.lam_min.begin(), rep.lam_min.end());
  rep.max_lam_max = *std::max_element(rep.lam_max.begin(), rep.lam_max.end());
  return rep;
}

/// Same with n points drawn uniformly from [-1, 1]^d.
inline PositivityReport check_ss_positivity(const std::vector<int>& dims, int n_points, int trials,
                                            std::uint64_t seed, double margin = 1e-12) {
  if (dims.empty()) throw Error(ErrorKind::invalid_architecture, "empty layer list");
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Matrix pts(n_points, dims.front());
  for (int i = 0; i < n_points; ++i)
    for (int j = 0; j < dims.front(); ++j) pts(i, j) = uni(rng);
  return check_ss_positivity(dims, pts, trials, seed, margin);
}

}  // namespace homopinn
