#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bnnr/oracle.hpp"
#include "bnnr/rng.hpp"

namespace bnnr {

enum class Norm { linf };

// Pixel budget: every coordinate of x_adv stays within epsilon of x and
// within [pixel_min, pixel_max].
struct ThreatModel {
  Norm norm = Norm::linf;
  double epsilon = 0.0;
  double pixel_min = 0.0;
  double pixel_max = 1.0;

  void validate() const;
};

struct AttackResult {
  Tensor x_adv;
  double linf_distance = 0.0;
  bool success = false;  // label flipped on the attacked model
  std::size_t queries = 0;
  // Per accepted candidate objective values (square attack, when requested).
  std::vector<double> trace;
};

// x and x_adv are batches [N, ...]; the helpers work per sample.
Tensor project_linf(const Tensor& candidate, const Tensor& origin, const ThreatModel& tm);
double linf_distance(std::span<const double> a, std::span<const double> b);
// -1, 0 or +1; sign(0) = 0.
double sign(double v);

// Fills distances and success flags from a final batch of adversarials.
std::vector<AttackResult> package_results(const LabelOracle& oracle, const Tensor& x, const Tensor& x_adv,
                                          std::span<const int> labels, std::size_t queries_per_sample = 0);

// Stacks the per-sample adversarials back into a batch [N, ...].
Tensor stack_adversarials(std::span<const AttackResult> results);

// ---- maximization attacks under the L-infinity budget ----

std::vector<AttackResult> fgsm(const GradientOracle& oracle, const Tensor& x, std::span<const int> y,
                               const ThreatModel& tm);

// Iterated FGSM from x; projection after every step.
std::vector<AttackResult> bim(const GradientOracle& oracle, const Tensor& x, std::span<const int> y,
                              const ThreatModel& tm, std::size_t steps, double step_size);

// BIM from a uniform random start inside the budget.
std::vector<AttackResult> pgd(const GradientOracle& oracle, const Tensor& x, std::span<const int> y,
                              const ThreatModel& tm, std::size_t steps, double step_size, Rng& rng);

// Momentum iterative method; step size epsilon / steps. Run it on a substitute
// model and evaluate the result on targets it never queried.
std::vector<AttackResult> mim_transfer(const GradientOracle& substitute, const Tensor& x, std::span<const int> y,
                                       const ThreatModel& tm, std::size_t steps, double decay);

struct SpsaParams {
  std::size_t iterations = 40;
  std::size_t samples_per_iter = 64;
  double perturbation_size = 0.01;
  double learning_rate = 0.01;
};

// Simultaneous-perturbation gradient estimate at a single sample x (no batch
// axis) with Rademacher directions. `objective` maps a batch of probes
// [M, ...] to M values.
using BatchObjective = std::function<std::vector<double>(const Tensor& probes)>;
Tensor spsa_gradient(const BatchObjective& objective, const Tensor& x, std::size_t samples, double delta, Rng& rng);

// Score-based: projected sign ascent on SPSA estimates of the cross-entropy.
// Spends exactly iterations * samples_per_iter * 2 queries per sample.
std::vector<AttackResult> spsa(const ScoreOracle& oracle, const Tensor& x, std::span<const int> y,
                               const ThreatModel& tm, const SpsaParams& params, Rng& rng);

struct SquareParams {
  std::size_t query_budget = 1000;
  double initial_patch_fraction = 0.8;
  // Consecutive rejected candidates before the patch fraction halves.
  std::size_t stagnation_window = 10;
  bool stop_on_success = true;
  bool record_trace = false;
};

// Score-based random search over square patches at the budget's vertices.
// A candidate replaces the incumbent only if it strictly lowers the
// log-probability margin. Never spends more than query_budget queries.
std::vector<AttackResult> square_attack(const ScoreOracle& oracle, const Tensor& x, std::span<const int> y,
                                        const ThreatModel& tm, const SquareParams& params, Rng& rng);

// ---- minimum-perturbation attacks (no epsilon budget) ----

struct CarliniWagnerParams {
  std::size_t binary_search_steps = 6;
  std::size_t inner_steps = 100;
  double initial_const = 0.1;
  double learning_rate = 0.01;
  double confidence = 0.0;
};

// L2 Carlini-Wagner in tanh space with a binary search on the trade-off
// constant. success is false when no misclassified iterate was found.
std::vector<AttackResult> cw_min_perturbation(const GradientOracle& oracle, const Tensor& x, std::span<const int> y,
                                              const CarliniWagnerParams& params = {});

struct DeepFoolParams {
  std::size_t max_steps = 50;
  double overshoot = 0.02;
};

// Moves each sample across the nearest linearized class boundary. Without
// labels the model's own prediction at x is the class to leave.
std::vector<AttackResult> deepfool(const GradientOracle& oracle, const Tensor& x, const DeepFoolParams& params = {},
                                   std::span<const int> labels = {});

double mean_linf_distance(std::span<const AttackResult> results);

// ---- persistence: <path> holds the tensor archive, <path>.manifest.json the manifest ----

struct AdversarialBatch {
  std::string attack;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  Tensor x_adv;
  std::vector<int> labels;
  std::vector<double> linf;
  std::vector<bool> success;
};

AdversarialBatch make_adversarial_batch(std::string attack, double epsilon, std::uint64_t seed,
                                        std::span<const AttackResult> results, std::span<const int> labels);
void save_adversarial_batch(const std::filesystem::path& path, const AdversarialBatch& batch);
AdversarialBatch load_adversarial_batch(const std::filesystem::path& path);

}  // namespace bnnr
