#include "bnnr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bnnr/ops.hpp"

namespace bnnr {
namespace {

// Softmax outputs of one forward pass per draw, chunked over the batch.
// The deterministic prefix of the network is evaluated once per chunk.
std::vector<Tensor> sample_probabilities(const Model& model, const Tensor& x, std::size_t draws, Rng& rng,
                                         std::size_t chunk) {
  model.check_input(x.shape());
  const std::size_t n = x.dim(0);
  const std::size_t k = model.config().classes;
  std::vector<Tensor> out(draws, Tensor({n, k}));
  const std::size_t split = model.first_stochastic_layer();
  const std::size_t total_layers = model.layers().size();

  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    const Tensor part = x.slice(begin, end);
    Tensor features;
    {
      Tape tape;
      const auto bound = model.bind(tape, false);
      features = model.forward_range(tape, bound, tape.constant(part), 0, split, Sampling::mean, nullptr).value();
    }
    for (std::size_t d = 0; d < draws; ++d) {
      Tensor logits;
      if (split == total_layers) {
        logits = features;
      } else {
        Tape tape;
        const auto bound = model.bind(tape, false);
        logits = model.forward_range(tape, bound, tape.constant(features), split, total_layers, Sampling::stochastic, &rng)
                     .value();
      }
      const Tensor probs = softmax(logits);
      std::copy(probs.values().begin(), probs.values().end(), out[d].data().begin() + static_cast<std::ptrdiff_t>(begin * k));
    }
  }
  return out;
}

}  // namespace

std::vector<int> Prediction::labels() const { return argmax_rows(mean_probs); }

int argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

std::vector<int> argmax_rows(const Tensor& matrix) {
  if (matrix.rank() != 2) throw ShapeError("argmax_rows needs a matrix, got " + shape_string(matrix.shape()));
  const std::size_t n = matrix.dim(0), k = matrix.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = argmax(matrix.data().subspan(i * k, k));
  return out;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

Prediction predict_mc(const Model& model, const Tensor& x, std::size_t n, Rng& rng, std::size_t chunk) {
  if (n < 1) throw std::invalid_argument("predict_mc needs at least one sample");
  if (chunk < 1) throw std::invalid_argument("chunk size must be positive");
  const std::size_t draws = model.is_stochastic() ? n : 1;
  const std::vector<Tensor> samples = sample_probabilities(model, x, draws, rng, chunk);

  Prediction pred;
  pred.samples = draws;
  pred.mean_probs = Tensor(samples.front().shape());
  pred.std_probs = Tensor(samples.front().shape());
  for (const Tensor& s : samples) {
    for (std::size_t i = 0; i < s.size(); ++i) pred.mean_probs[i] += s[i];
  }
  for (double& v : pred.mean_probs.data()) v /= static_cast<double>(draws);
  if (draws >= 2) {
    for (const Tensor& s : samples) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = s[i] - pred.mean_probs[i];
        pred.std_probs[i] += d * d;
      }
    }
    for (double& v : pred.std_probs.data()) v = std::sqrt(v / static_cast<double>(draws - 1));
  }
  return pred;
}

PredictiveStats predictive_stats(const Model& model, const Tensor& x, std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("predictive spread needs at least two samples");
  const Prediction pred = predict_mc(model, x, n, rng);
  const std::size_t rows = pred.mean_probs.dim(0), k = pred.mean_probs.dim(1);
  PredictiveStats stats;
  stats.per_class_std = pred.std_probs;
  for (std::size_t i = 0; i < rows; ++i) {
    const auto row = pred.mean_probs.data().subspan(i * k, k);
    stats.entropy.push_back(entropy(row));
    stats.max_prob.push_back(*std::max_element(row.begin(), row.end()));
  }
  return stats;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw std::invalid_argument("accuracy needs equally sized, nonempty label lists");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double evaluate_accuracy(const Model& model, const Dataset& data, std::size_t n, Rng& rng) {
  const Prediction pred = predict_mc(model, data.images, n, rng);
  return accuracy(pred.labels(), data.labels);
}

}  // namespace bnnr
