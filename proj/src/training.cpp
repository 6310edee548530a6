#include "bnnr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "bnnr/inference.hpp"

namespace bnnr {

double BetaSchedule::beta(std::size_t batches_per_epoch) const {
  switch (kind) {
    case Kind::inverse_batches: return 1.0 / static_cast<double>(std::max<std::size_t>(1, batches_per_epoch));
    case Kind::constant:
      if (value < 0.0) throw std::invalid_argument("KL weight beta must be non-negative");
      return value;
  }
  return 0.0;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (mc_train_samples < 1) throw std::invalid_argument("mc_train_samples must be at least 1");
  if (mc_eval_samples < 1) throw std::invalid_argument("mc_eval_samples must be at least 1");
}

TrainResult train(Model& model, const Dataset& train_set, const TrainConfig& config, Rng& rng, const Dataset* test_set) {
  config.validate();
  train_set.validate();
  if (train_set.classes > model.config().classes) {
    throw std::invalid_argument("dataset has " + std::to_string(train_set.classes) + " classes, model has " +
                                std::to_string(model.config().classes));
  }
  model.check_input(train_set.images.shape());

  const std::size_t n = train_set.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  const double beta = config.beta_schedule.beta(batches);
  const bool stochastic = model.is_stochastic();

  std::vector<Tensor*> params = model.parameters();
  std::vector<Tensor> velocity;
  for (const Tensor* p : params) velocity.emplace_back(p->shape());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  using clock = std::chrono::steady_clock;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto started = clock::now();
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(n, lo + config.batch_size);
      const Dataset batch = train_set.subset(std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                                                      order.begin() + static_cast<std::ptrdiff_t>(hi)));
      const double inv_batch = 1.0 / static_cast<double>(hi - lo);

      Tape tape;
      const Model::Bound bound = model.bind(tape, true);
      const Var x = tape.constant(batch.images);
      Var loss;
      if (stochastic) {
        Var nll = tape.constant(Tensor::scalar(0.0));
        for (std::size_t s = 0; s < config.mc_train_samples; ++s) {
          const Var logits = model.forward(tape, bound, x, Sampling::stochastic, &rng);
          nll = add(nll, softmax_cross_entropy(logits, batch.labels, Reduction::sum));
        }
        nll = scale(nll, 1.0 / static_cast<double>(config.mc_train_samples));
        loss = scale(elbo_loss(nll, model.kl(tape, bound), beta), inv_batch);
      } else {
        const Var logits = model.forward(tape, bound, x, Sampling::mean, nullptr);
        loss = softmax_cross_entropy(logits, batch.labels, Reduction::mean);
      }
      const double loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) {
        throw TrainingDiverged("training diverged: loss is " + std::to_string(loss_value) + " at epoch " +
                               std::to_string(epoch) + ", batch " + std::to_string(b) +
                               "; lower the learning rate");
      }
      epoch_loss += loss_value;
      tape.backward(loss);

      for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& g = tape.grad(bound.params[i]);
        auto v = velocity[i].data();
        auto p = params[i]->data();
        for (std::size_t j = 0; j < p.size(); ++j) {
          v[j] = config.momentum * v[j] + g[j];
          p[j] -= config.learning_rate * v[j];
        }
      }
    }
    const double seconds = std::chrono::duration<double>(clock::now() - started).count();
    result.epoch_seconds.push_back(seconds);
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    result.wall_clock_seconds += seconds;
  }
  // Keeps the field strictly positive for zero-epoch runs.
  result.wall_clock_seconds = std::max(result.wall_clock_seconds, 1e-9);

  result.train_accuracy = evaluate_accuracy(model, train_set, config.mc_eval_samples, rng);
  if (test_set != nullptr) result.test_accuracy = evaluate_accuracy(model, *test_set, config.mc_eval_samples, rng);
  return result;
}

}  // namespace bnnr
