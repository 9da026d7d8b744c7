#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace gradflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// The requested operation needs metadata or structure the object lacks
/// (e.g. a Hessian, or a known infimum).
class Unsupported : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class PreconditionerError : public Error {
 public:
  using Error::Error;
};

class SearchFailure : public Error {
 public:
  using Error::Error;
};

class GridMismatch : public Error {
 public:
  using Error::Error;
};

/// An iterative solve stopped at its iteration cap. Carries the best iterate
/// seen so far.
class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& what, Eigen::VectorXd best, double residual)
      : Error(what), best_(std::move(best)), residual_(residual) {}

  const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
  double residual() const noexcept { return residual_; }

 private:
  Eigen::VectorXd best_;
  double residual_;
};

/// A stepper failed inside run_flow; records which step.
class StepFailure : public Error {
 public:
  StepFailure(std::int64_t step, const std::string& cause)
      : Error("step " + std::to_string(step) + ": " + cause), step_(step) {}

  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

/// A particle state became NaN or infinite.
class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t step, std::int64_t particle)
      : Error("divergence at step " + std::to_string(step) + ", particle " +
              std::to_string(particle) + ": non-finite state"),
        step_(step),
        particle_(particle) {}

  std::int64_t step() const noexcept { return step_; }
  std::int64_t particle() const noexcept { return particle_; }

 private:
  std::int64_t step_;
  std::int64_t particle_;
};

/// Explicit time step exceeds the scheme's stability bound.
class StabilityError : public Error {
 public:
  StabilityError(double dt, double max_dt)
      : Error("time step " + std::to_string(dt) + " exceeds stability bound; maximal admissible dt = " +
              std::to_string(max_dt)),
        max_dt_(max_dt) {}

  double max_dt() const noexcept { return max_dt_; }

 private:
  double max_dt_;
};

}  // namespace gradflow
