#include "bnnr/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bnnr/inference.hpp"
#include "bnnr/ops.hpp"

namespace bnnr {
namespace {

constexpr double kMinProbability = 1e-300;

void check_labels(const Tensor& scores, std::span<const int> labels) {
  if (scores.rank() != 2 || scores.dim(0) != labels.size()) {
    throw ShapeError("expected scores [" + std::to_string(labels.size()) + ", K], got " + shape_string(scores.shape()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= scores.dim(1)) {
      throw std::out_of_range("invalid class index " + std::to_string(y));
    }
  }
}

}  // namespace

std::vector<int> ScoreOracle::predict(const Tensor& x) const { return argmax_rows(probabilities(x)); }

Tensor GradientOracle::probabilities(const Tensor& x) const { return softmax(logits(x)); }

GradientOracle::LossGradient GradientOracle::cross_entropy_gradient(const Tensor& x, std::span<const int> labels) const {
  LossGradient out;
  std::vector<int> y(labels.begin(), labels.end());
  ObjectiveGradient g = gradient(x, [&](const Tensor& logits) {
    check_labels(logits, y);
    Tensor cot = softmax(logits);
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < y.size(); ++i) cot[i * k + static_cast<std::size_t>(y[i])] -= 1.0;
    return cot;
  });
  out.loss = cross_entropy_from_probabilities(softmax(g.logits), y);
  out.gradient = std::move(g.gradient);
  out.logits = std::move(g.logits);
  return out;
}

Tensor ModelOracle::logits(const Tensor& x) const { return model_.logits(x, Sampling::mean, nullptr); }

ObjectiveGradient ModelOracle::gradient(const Tensor& x, const LogitCotangent& cotangent) const {
  Tape tape;
  const auto bound = model_.bind(tape, false);
  const Var input = tape.leaf(x, true);
  const Var logits = model_.forward(tape, bound, input, Sampling::mean, nullptr);
  Tensor cot = cotangent(logits.value());
  if (cot.shape() != logits.shape()) {
    throw ShapeError("logit cotangent " + shape_string(cot.shape()) + " does not match logits " +
                     shape_string(logits.shape()));
  }
  const Var objective = sum(mul(logits, tape.constant(std::move(cot))));
  tape.backward(objective);
  ObjectiveGradient out;
  out.logits = logits.value();
  out.gradient = tape.has_grad(input) ? tape.grad(input) : Tensor(x.shape());
  return out;
}

std::vector<double> cross_entropy_from_probabilities(const Tensor& probs, std::span<const int> labels) {
  check_labels(probs, labels);
  const std::size_t k = probs.dim(1);
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = -std::log(std::max(probs[i * k + static_cast<std::size_t>(labels[i])], kMinProbability));
  }
  return out;
}

std::vector<double> log_probability_margin(const Tensor& probs, std::span<const int> labels) {
  check_labels(probs, labels);
  const std::size_t k = probs.dim(1);
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      if (j != y) other = std::max(other, std::log(std::max(probs[i * k + j], kMinProbability)));
    }
    out[i] = std::log(std::max(probs[i * k + y], kMinProbability)) - other;
  }
  return out;
}

}  // namespace bnnr
