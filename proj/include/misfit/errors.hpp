#pragma once

#include <stdexcept>
#include <string>

namespace misfit {

// Signals that an algorithm failed numerically (quadrature did not converge
// within the node cap, line search stalled at a non-stationary point, singular
// information matrix). Caller errors (domain violations, dimension mismatches)
// raise std::invalid_argument instead.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace misfit
