#pragma once

#include <stdexcept>
#include <string>

namespace ricci_lab {

// Bad input: violated precondition, malformed config, out-of-range parameter.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Curvature requested on (or too close to) a singular stratum.
class SingularPointError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A numerical solver could not produce a result (non-convergence, blow-up,
// step underflow, CFL violation, ...).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computed object fails a property it is required to have.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ricci_lab
