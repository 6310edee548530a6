#pragma once

#include <span>
#include <vector>

#include "bnnr/dataset.hpp"
#include "bnnr/model.hpp"

namespace bnnr {

struct Prediction {
  Tensor mean_probs;  // [N, K]
  Tensor std_probs;   // [N, K], sample std over MC draws (0 when fewer than two)
  std::size_t samples = 1;

  std::vector<int> labels() const;
};

// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);
std::vector<int> argmax_rows(const Tensor& matrix);

// Entropy in nats.
double entropy(std::span<const double> probs);

// Average of n softmax outputs. Deterministic models ignore n.
Prediction predict_mc(const Model& model, const Tensor& x, std::size_t n, Rng& rng, std::size_t chunk = 128);

struct PredictiveStats {
  std::vector<double> entropy;
  std::vector<double> max_prob;
  Tensor per_class_std;
};

// Requires n >= 2 for the per-class spread.
PredictiveStats predictive_stats(const Model& model, const Tensor& x, std::size_t n, Rng& rng);

double accuracy(std::span<const int> predicted, std::span<const int> truth);
double evaluate_accuracy(const Model& model, const Dataset& data, std::size_t n, Rng& rng);

}  // namespace bnnr
