#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bnnr/dataset.hpp"
#include "bnnr/model.hpp"

namespace bnnr {

// Weight of the KL term per minibatch.
struct BetaSchedule {
  enum class Kind { inverse_batches, constant };
  Kind kind = Kind::inverse_batches;
  double value = 0.0;  // used by Kind::constant

  double beta(std::size_t batches_per_epoch) const;
};

struct TrainConfig {
  std::size_t epochs = 12;
  std::size_t batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::size_t mc_train_samples = 1;
  std::size_t mc_eval_samples = 10;
  BetaSchedule beta_schedule{};

  void validate() const;
};

struct TrainResult {
  std::vector<double> epoch_seconds;
  std::vector<double> epoch_loss;
  double wall_clock_seconds = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// SGD with momentum on mean cross-entropy (deterministic models) or on the
// minibatch ELBO (nll summed over the batch + beta * KL, divided by the batch
// size). Wall-clock covers the optimization loop only.
TrainResult train(Model& model, const Dataset& train_set, const TrainConfig& config, Rng& rng,
                  const Dataset* test_set = nullptr);

}  // namespace bnnr
