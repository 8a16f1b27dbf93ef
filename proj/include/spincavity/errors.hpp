#pragma once

#include <stdexcept>
#include <string>

namespace spincavity {

// Bad inputs or configuration. CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Algorithm failed to reach its advertised accuracy. CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Adiabatic level identification lost between field grid points.
struct TrackingError : NumericalError {
  explicit TrackingError(const std::string& msg) : NumericalError(msg) {}
};

// Gap minimum not bracketed inside the scan window.
struct BracketingError : NumericalError {
  explicit BracketingError(const std::string& msg) : NumericalError(msg) {}
};

// Two-level block decoupling failed (third level intrudes on the pair).
struct ReductionError : NumericalError {
  explicit ReductionError(const std::string& msg) : NumericalError(msg) {}
};

// Overlap between the selected eigenvectors and the pair span is singular,
// so the inverse square root in the block transform does not exist.
struct ProjectionMismatchError : ReductionError {
  explicit ProjectionMismatchError(const std::string& msg) : ReductionError(msg) {}
};

// Step size underflow in the ODE integrator.
struct StiffnessError : NumericalError {
  explicit StiffnessError(const std::string& msg) : NumericalError(msg) {}
};

// Requested ODE tolerance could not be met.
struct AccuracyError : NumericalError {
  explicit AccuracyError(const std::string& msg) : NumericalError(msg) {}
};

} // namespace spincavity
