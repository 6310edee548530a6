#pragma once

#include <functional>

#include "bnnr/tape.hpp"

namespace bnnr {

// Builds a scalar expression of its argument on the supplied tape.
using TapeFunction = std::function<Var(Tape&, Var)>;

struct GradCheckResult {
  Tensor analytic;
  Tensor numeric;
  double max_relative_error = 0.0;
};

// Compares reverse-mode gradients with central differences of step h.
// Relative error per coordinate: |analytic - numeric| / (|numeric| + 1e-12).
GradCheckResult gradient_check(const TapeFunction& f, const Tensor& x, double h = 1e-5);

double finite_difference_check(const TapeFunction& f, const Tensor& x, double h = 1e-5);

}  // namespace bnnr
