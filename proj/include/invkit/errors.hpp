#pragma once

#include <stdexcept>
#include <string>

namespace invkit {

/// Variable-count or vector-length mismatch between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Affine substitution with zero linear coefficient.
struct DegenerateScalingError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Newton iteration failed to locate a steady state.
struct NoEquilibriumError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Physical model evaluated outside its domain of definition.
struct SingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Point outside the configured scaling window; names the variable.
struct ScalingRangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Invalid bound request (e.g. omega_M >= 1).
struct InvalidBoundError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent configuration of a certificate problem.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Degree bookkeeping cannot cover the requested identity.
struct AssemblyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Presolve found contradictory (inconsistent dependent) rows.
struct PresolveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Certificate extraction from a failed solve.
struct ExtractionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// ODE step size underflow.
struct StiffnessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace invkit
