#pragma once

#include <functional>
#include <span>
#include <vector>

#include "bnnr/model.hpp"
#include "bnnr/tensor.hpp"

namespace bnnr {

// Adversary knowledge levels. Each level exposes strictly more than the one
// it derives from; attacks take the weakest level they need.

// Decision-based access: hard labels only.
class LabelOracle {
 public:
  virtual ~LabelOracle() = default;
  virtual std::vector<int> predict(const Tensor& x) const = 0;
};

// Score-based access: output probabilities [N, K].
class ScoreOracle : public LabelOracle {
 public:
  virtual Tensor probabilities(const Tensor& x) const = 0;
  std::vector<int> predict(const Tensor& x) const override;
};

// Maps logits [N, K] to the cotangent d(objective)/d(logits).
using LogitCotangent = std::function<Tensor(const Tensor& logits)>;

struct ObjectiveGradient {
  Tensor logits;    // [N, K] at x
  Tensor gradient;  // shape of x
};

// White-box access: logits and input gradients.
class GradientOracle : public ScoreOracle {
 public:
  virtual Tensor logits(const Tensor& x) const = 0;
  // Gradient w.r.t. x of sum(cotangent(logits(x)) * logits(x)), cotangent held constant.
  virtual ObjectiveGradient gradient(const Tensor& x, const LogitCotangent& cotangent) const = 0;

  Tensor probabilities(const Tensor& x) const override;

  struct LossGradient {
    std::vector<double> loss;  // per-sample cross-entropy
    Tensor gradient;           // d(sum of losses)/dx
    Tensor logits;
  };
  LossGradient cross_entropy_gradient(const Tensor& x, std::span<const int> labels) const;
};

// White-box view of a trained model. Stochastic layers are evaluated at their
// posterior mean so that gradients are deterministic.
class ModelOracle final : public GradientOracle {
 public:
  explicit ModelOracle(const Model& model) : model_(model) {}

  Tensor logits(const Tensor& x) const override;
  ObjectiveGradient gradient(const Tensor& x, const LogitCotangent& cotangent) const override;

  const Model& model() const { return model_; }

 private:
  const Model& model_;
};

// Per-sample cross-entropy computed from probabilities (score-level access).
std::vector<double> cross_entropy_from_probabilities(const Tensor& probs, std::span<const int> labels);
// log p_y - max_{j != y} log p_j; negative once the sample is misclassified.
std::vector<double> log_probability_margin(const Tensor& probs, std::span<const int> labels);

}  // namespace bnnr
