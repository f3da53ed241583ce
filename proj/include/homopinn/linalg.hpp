#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <boost/multiprecision/float128.hpp>

#include "homopinn/errors.hpp"
#include "homopinn/network.hpp"

namespace homopinn {

using Quad = boost::multiprecision::float128;

// Dense row-major square matrix over an arbitrary real type.
template <class Real>
class DenseSquare {
 public:
  DenseSquare() = default;
  explicit DenseSquare(int n) : n_(n), a_(static_cast<std::size_t>(n) * n, Real(0)) {}

  template <class Derived>
  static DenseSquare from(const Eigen::MatrixBase<Derived>& m) {
    DenseSquare out(static_cast<int>(m.rows()));
    for (int i = 0; i < out.n_; ++i)
      for (int j = 0; j < out.n_; ++j) out(i, j) = Real(m(i, j));
    return out;
  }

  int size() const { return n_; }
  Real& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * n_ + j]; }
  const Real& operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * n_ + j]; }

 private:
  int n_ = 0;
  std::vector<Real> a_;
};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Sweeps until the off-diagonal Frobenius norm drops below
/// rel_tol * ||A||_F.
template <class Real>
std::vector<Real> jacobi_eigenvalues(DenseSquare<Real> A, Real rel_tol, int max_sweeps = 100) {
  using std::abs;
  using std::sqrt;
  const int n = A.size();
  Real total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) total += A(i, j) * A(i, j);
  const Real threshold = rel_tol * rel_tol * total;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    Real off = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += 2 * A(i, j) * A(i, j);
    if (off <= threshold) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const Real apq = A(p, q);
        if (apq == 0) continue;
        const Real theta = (A(q, q) - A(p, p)) / (2 * apq);
        const Real t = (theta >= 0 ? Real(1) : Real(-1)) / (abs(theta) + sqrt(theta * theta + 1));
        const Real c = 1 / sqrt(t * t + 1);
        const Real s = t * c;
        for (int k = 0; k < n; ++k) {
          const Real akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const Real apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        A(p, q) = 0;
        A(q, p) = 0;
      }
    }
  }
  std::vector<Real> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = A(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

inline Vector symmetric_eigenvalues(const Matrix& A, double rel_tol = 1e-15) {
  const auto eig = jacobi_eigenvalues(DenseSquare<double>::from(A), rel_tol);
  return Eigen::Map<const Vector>(eig.data(), static_cast<Eigen::Index>(eig.size()));
}

struct PinvSolution {
  Vector x;
  Vector singular_values;
  int rank = 0;
};

/// Minimum-norm least-squares solution x = M^+ r with singular values below
/// rtol * sigma_max treated as zero. Backed by Eigen's divide-and-conquer SVD.
inline PinvSolution pinv_solve(const Matrix& M, const Vector& r, double rtol) {
  if (M.rows() != r.size()) throw Error(ErrorKind::shape, "pinv_solve: row count mismatch");
  if (!M.allFinite() || !r.allFinite()) {
    throw Error(ErrorKind::non_finite, "pinv_solve: non-finite input");
  }
  Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  PinvSolution out;
  out.singular_values = svd.singularValues();
  const double smax = out.singular_values.size() > 0 ? out.singular_values[0] : 0.0;
  if (!(smax > 0.0)) {
    throw Error(ErrorKind::singular_path, "pseudo-inverse of a zero matrix");
  }
  const double cutoff = rtol * smax;
  Vector coeff = svd.matrixU().transpose() * r;
  for (Eigen::Index k = 0; k < coeff.size(); ++k) {
    if (out.singular_values[k] > cutoff) {
      coeff[k] /= out.singular_values[k];
      ++out.rank;
    } else {
      coeff[k] = 0.0;
    }
  }
  out.x = svd.matrixV() * coeff;
  return out;
}

}  // namespace homopinn
