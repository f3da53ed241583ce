#pragma once

// Shared oracles for the unit tests: a scalar-loop network evaluator that
// shares no code with the batched engine, and finite-difference helpers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "homopinn/network.hpp"

namespace homopinn::oracle {

// Random weights and biases (biases nonzero, unlike Xavier).
inline NetworkParams random_net(const std::vector<int>& dims, std::uint64_t seed,
                                double scale = 0.8) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    DenseLayer layer{Matrix(dims[k + 1], dims[k]), Vector(dims[k + 1])};
    const double s = scale / std::sqrt(static_cast<double>(dims[k]));
    for (int r = 0; r < dims[k + 1]; ++r) {
      for (int c = 0; c < dims[k]; ++c) layer.weight(r, c) = s * normal(rng) * 1.5;
      layer.bias[r] = 0.3 * normal(rng);
    }
    layers.push_back(std::move(layer));
  }
  return NetworkParams(std::move(layers));
}

inline Matrix random_points(int n, int d, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(lo, hi);
  Matrix pts(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) pts(i, j) = uni(rng);
  return pts;
}

// Straight scalar loops over the layer list.
inline double naive_eval(const NetworkParams& params, const std::vector<double>& x) {
  std::vector<double> a = x;
  const auto& layers = params.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& W = layers[k].weight;
    std::vector<double> z(W.rows());
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      double acc = 0.0;
      for (Eigen::Index c = 0; c < W.cols(); ++c) acc += W(r, c) * a[c];
      z[r] = acc + layers[k].bias[r];
    }
    if (k + 1 < layers.size()) {
      for (double& v : z) v = std::tanh(v);
    }
    a = std::move(z);
  }
  return a[0];
}

inline std::vector<double> row(const Matrix& m, Eigen::Index i) {
  std::vector<double> out(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[j] = m(i, j);
  return out;
}

// max_j |a_j - b_j| / max(max_j |b_j|, floor)
inline double rel_err(const Vector& a, const Vector& b, double floor = 1e-12) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), floor);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max(std::abs(b), floor);
}

}  // namespace homopinn::oracle
