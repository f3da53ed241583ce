#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace homopinn {

enum class ErrorKind {
  invalid_architecture,
  shape,
  too_large,
  unsupported,
  invalid_dimension,
  non_finite,
  divergence,
  schedule,
  singular_path,
  undefined_metric,
  no_convergence,
  precondition,
  parse,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_architecture: return "invalid-architecture";
    case ErrorKind::shape: return "shape";
    case ErrorKind::too_large: return "too-large";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::invalid_dimension: return "invalid-dimension";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::schedule: return "schedule";
    case ErrorKind::singular_path: return "singular-path";
    case ErrorKind::undefined_metric: return "undefined-metric";
    case ErrorKind::no_convergence: return "no-convergence";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::parse: return "parse";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Residual evaluated to NaN/inf; index of the first offending point.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::size_t index, const std::string& what)
      : Error(ErrorKind::non_finite, what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(long epoch, double loss)
      : Error(ErrorKind::divergence,
              "training diverged at epoch " + std::to_string(epoch) +
                  " (loss " + std::to_string(loss) + ")"),
        epoch_(epoch),
        loss_(loss) {}

  long epoch() const noexcept { return epoch_; }
  double loss() const noexcept { return loss_; }

 private:
  long epoch_;
  double loss_;
};

class NoConvergenceError : public Error {
 public:
  NoConvergenceError(double last_residual, const std::string& what)
      : Error(ErrorKind::no_convergence, what), last_residual_(last_residual) {}

  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

}  // namespace homopinn
