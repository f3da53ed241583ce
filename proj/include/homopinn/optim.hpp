#pragma once

#include <cmath>
#include <string>

#include "homopinn/errors.hpp"
#include "homopinn/network.hpp"

namespace homopinn {

enum class OptimizerKind { adam, gd };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "gd") return OptimizerKind::gd;
  throw Error(ErrorKind::parse, "unknown optimizer '" + s + "' (expected adam|gd)");
}

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "gd"; }

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction; gd is plain theta -= lr * g.
class Optimizer {
 public:
  Optimizer(OptimizerSettings s, Eigen::Index n) : s_(s), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {
    if (!(s_.lr > 0.0)) throw Error(ErrorKind::precondition, "learning rate must be positive");
  }

  const OptimizerSettings& settings() const { return s_; }
  long steps() const { return t_; }

  void step(Vector& theta, const Vector& g) {
    if (g.size() != theta.size()) throw Error(ErrorKind::shape, "gradient size mismatch");
    ++t_;
    if (s_.kind == OptimizerKind::gd) {
      theta.noalias() -= s_.lr * g;
      return;
    }
    m_ = s_.beta1 * m_ + (1.0 - s_.beta1) * g;
    v_ = s_.beta2 * v_ + (1.0 - s_.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    const double step = s_.lr / c1;
    theta.array() -= step * m_.array() / ((v_.array() / c2).sqrt() + s_.eps);
  }

 private:
  OptimizerSettings s_;
  Vector m_, v_;
  long t_ = 0;
};

}  // namespace homopinn
