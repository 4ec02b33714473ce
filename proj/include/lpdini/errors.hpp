#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lpdini {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ConstraintError : public Error {
 public:
  using Error::Error;
};

class MonotonicityError : public Error {
 public:
  using Error::Error;
};

/// Quadrature or fixpoint iteration ran out of its refinement budget.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(const std::string& what, double partial)
      : Error(what), partial_(partial) {}
  double partial() const noexcept { return partial_; }

 private:
  double partial_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& item, const std::string& what)
      : Error(what), item_(item) {}
  const std::string& item() const noexcept { return item_; }

 private:
  std::string item_;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class ResolutionError : public Error {
 public:
  using Error::Error;
};

class CoverageError : public Error {
 public:
  using Error::Error;
};

class DisjointnessError : public Error {
 public:
  using Error::Error;
};

class ContainmentError : public Error {
 public:
  using Error::Error;
};

class ConstructionError : public Error {
 public:
  ConstructionError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class PositivityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lpdini
