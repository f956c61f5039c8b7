#pragma once

#include <stdexcept>
#include <string>

namespace effbound {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structural problems with user input: sizes, missing laws, probabilities
/// that do not sum to one, malformed partitions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A propensity model evaluated outside the open unit interval.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// One of the regularity assumptions of the model fails on the given input.
/// `assumption` is 1 (identification), 2 (overlap), 3 (nonsingular score
/// information) or 4 (full-rank Jacobian).
class AssumptionError : public Error {
 public:
  AssumptionError(int assumption, const std::string& what)
      : Error("Assumption " + std::to_string(assumption) + " violated: " + what),
        assumption_(assumption) {}

  int assumption() const noexcept { return assumption_; }

 private:
  int assumption_;
};

/// The second-moment matrix of the influence function is singular while not
/// identically zero, so no finite bound exists.
class DegenerateBoundError : public Error {
 public:
  using Error::Error;
};

/// A property that holds mathematically failed numerically beyond tolerance.
/// Signals a bug rather than a property of the input.
class NumericAssertionError : public Error {
 public:
  using Error::Error;
};

/// A stratum/treatment cell of a sample contains no observations.
class EmptyCellError : public Error {
 public:
  EmptyCellError(int stratum, int treatment)
      : Error("empty cell: stratum " + std::to_string(stratum) + ", treatment " +
              std::to_string(treatment)),
        stratum_(stratum),
        treatment_(treatment) {}

  int stratum() const noexcept { return stratum_; }
  int treatment() const noexcept { return treatment_; }

 private:
  int stratum_;
  int treatment_;
};

}  // namespace effbound
