#pragma once

// Tanh multilayer perceptron parameters: construction, flattening and JSON
// checkpoints. Hidden layers use tanh, the output layer is affine.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "homopinn/errors.hpp"

namespace homopinn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out

  bool operator==(const DenseLayer& other) const {
    return weight == other.weight && bias == other.bias;
  }
};

class NetworkParams {
 public:
  NetworkParams() = default;

  explicit NetworkParams(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    validate();
  }

  // All-zero network with the given layer widths.
  static NetworkParams zeros(const std::vector<int>& dims) {
    check_dims(dims);
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      layers.push_back({Matrix::Zero(dims[k + 1], dims[k]), Vector::Zero(dims[k + 1])});
    }
    return NetworkParams(std::move(layers));
  }

  static void check_dims(const std::vector<int>& dims) {
    if (dims.size() < 2) {
      throw Error(ErrorKind::invalid_architecture, "layer_dims needs at least two entries");
    }
    for (int d : dims) {
      if (d <= 0) throw Error(ErrorKind::invalid_architecture, "layer_dims must be positive");
    }
  }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  std::size_t num_layers() const { return layers_.size(); }

  int input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }

  std::vector<int> dims() const {
    std::vector<int> out;
    if (layers_.empty()) return out;
    out.push_back(input_dim());
    for (const auto& layer : layers_) out.push_back(static_cast<int>(layer.weight.rows()));
    return out;
  }

  static std::size_t param_count(const std::vector<int>& dims) {
    std::size_t p = 0;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      p += static_cast<std::size_t>(dims[k + 1]) * dims[k] + dims[k + 1];
    }
    return p;
  }

  std::size_t param_count() const { return param_count(dims()); }

  // Layer by layer: weights row-major, then bias.
  Vector flatten() const {
    Vector theta(static_cast<Eigen::Index>(param_count()));
    Eigen::Index pos = 0;
    for (const auto& layer : layers_) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) theta[pos++] = layer.weight(r, c);
      }
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) theta[pos++] = layer.bias[r];
    }
    return theta;
  }

  static NetworkParams unflatten(const std::vector<int>& dims, const Vector& theta) {
    check_dims(dims);
    if (static_cast<std::size_t>(theta.size()) != param_count(dims)) {
      throw Error(ErrorKind::shape, "flat parameter vector has wrong length");
    }
    std::vector<DenseLayer> layers;
    Eigen::Index pos = 0;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      DenseLayer layer{Matrix(dims[k + 1], dims[k]), Vector(dims[k + 1])};
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = theta[pos++];
      }
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = theta[pos++];
      layers.push_back(std::move(layer));
    }
    return NetworkParams(std::move(layers));
  }

  void assign(const Vector& theta) { *this = unflatten(dims(), theta); }

  bool all_finite() const {
    for (const auto& layer : layers_) {
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    }
    return true;
  }

  bool operator==(const NetworkParams& other) const { return layers_ == other.layers_; }

 private:
  void validate() const {
    if (layers_.empty()) throw Error(ErrorKind::invalid_architecture, "network has no layers");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& layer = layers_[k];
      if (layer.weight.rows() != layer.bias.size()) {
        throw Error(ErrorKind::shape, "bias length does not match weight rows");
      }
      if (k > 0 && layer.weight.cols() != layers_[k - 1].weight.rows()) {
        throw Error(ErrorKind::shape, "layer dimensions do not chain");
      }
      if (layer.weight.size() == 0) throw Error(ErrorKind::invalid_architecture, "empty layer");
    }
  }

  std::vector<DenseLayer> layers_;
};

/// Xavier (Glorot) normal initialization: W ~ N(0, 2 / (fan_in + fan_out)),
/// biases zero. Deterministic for a given seed.
inline NetworkParams init_xavier(const std::vector<int>& layer_dims, std::uint64_t seed) {
  NetworkParams::check_dims(layer_dims);
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < layer_dims.size(); ++k) {
    const int fan_in = layer_dims[k];
    const int fan_out = layer_dims[k + 1];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
    DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = normal(rng);
    }
    layers.push_back(std::move(layer));
  }
  return NetworkParams(std::move(layers));
}

// JSON checkpoint: {"dims":[...], "layers":[{"w":[[...]],"b":[...]}]}
inline nlohmann::json to_json(const NetworkParams& params) {
  nlohmann::json doc;
  doc["dims"] = params.dims();
  doc["layers"] = nlohmann::json::array();
  for (const auto& layer : params.layers()) {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      std::vector<double> row(layer.weight.cols());
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) row[c] = layer.weight(r, c);
      w.push_back(row);
    }
    std::vector<double> b(layer.bias.data(), layer.bias.data() + layer.bias.size());
    doc["layers"].push_back({{"w", w}, {"b", b}});
  }
  return doc;
}

inline NetworkParams network_from_json(const nlohmann::json& doc) {
  try {
    const auto dims = doc.at("dims").get<std::vector<int>>();
    NetworkParams::check_dims(dims);
    const auto& layers_doc = doc.at("layers");
    if (layers_doc.size() + 1 != dims.size()) {
      throw Error(ErrorKind::shape, "layer count does not match dims");
    }
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k < layers_doc.size(); ++k) {
      const auto w = layers_doc[k].at("w").get<std::vector<std::vector<double>>>();
      const auto b = layers_doc[k].at("b").get<std::vector<double>>();
      if (static_cast<int>(w.size()) != dims[k + 1] || static_cast<int>(b.size()) != dims[k + 1]) {
        throw Error(ErrorKind::shape, "layer " + std::to_string(k) + " has wrong output size");
      }
      DenseLayer layer{Matrix(dims[k + 1], dims[k]), Vector(dims[k + 1])};
      for (int r = 0; r < dims[k + 1]; ++r) {
        if (static_cast<int>(w[r].size()) != dims[k]) {
          throw Error(ErrorKind::shape, "layer " + std::to_string(k) + " has wrong input size");
        }
        for (int c = 0; c < dims[k]; ++c) layer.weight(r, c) = w[r][c];
        layer.bias[r] = b[r];
      }
      layers.push_back(std::move(layer));
    }
    return NetworkParams(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("bad network document: ") + e.what());
  }
}

inline void save_network(const NetworkParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  // max_digits10 round-trips doubles exactly
  out << to_json(params).dump() << '\n';
}

inline NetworkParams load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, path + ": " + e.what());
  }
  return network_from_json(doc);
}

}  // namespace homopinn
