#include "bnnr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace bnnr {
namespace {

double evaluate(const TapeFunction& f, const Tensor& x) {
  Tape tape;
  const Var out = f(tape, tape.constant(x));
  if (out.value().size() != 1) {
    throw TapeError("finite-difference check needs a scalar function, got shape " + shape_string(out.shape()));
  }
  return out.value()[0];
}

}  // namespace

GradCheckResult gradient_check(const TapeFunction& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");

  GradCheckResult result;
  {
    Tape tape;
    const Var input = tape.leaf(x, true);
    const Var out = f(tape, input);
    if (out.value().size() != 1) {
      throw TapeError("finite-difference check needs a scalar function, got shape " + shape_string(out.shape()));
    }
    if (tape.requires_grad(out)) {
      tape.backward(out);
      result.analytic = tape.has_grad(input) ? tape.grad(input) : Tensor(x.shape());
    } else {
      result.analytic = Tensor(x.shape());
    }
  }

  result.numeric = Tensor(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + h;
    const double up = evaluate(f, probe);
    probe[i] = original - h;
    const double down = evaluate(f, probe);
    probe[i] = original;
    result.numeric[i] = (up - down) / (2.0 * h);
    const double err = std::abs(result.analytic[i] - result.numeric[i]) / (std::abs(result.numeric[i]) + 1e-12);
    result.max_relative_error = std::max(result.max_relative_error, err);
  }
  return result;
}

double finite_difference_check(const TapeFunction& f, const Tensor& x, double h) {
  return gradient_check(f, x, h).max_relative_error;
}

}  // namespace bnnr
