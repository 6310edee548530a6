#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bnnr/attacks.hpp"
#include "bnnr/dataset.hpp"
#include "bnnr/model.hpp"
#include "bnnr/perturbations.hpp"
#include "bnnr/report.hpp"
#include "bnnr/toy_data.hpp"
#include "bnnr/training.hpp"

namespace bnnr {

// Environment variable that replaces every plan / CLI base seed.
inline constexpr const char* kSeedEnvVar = "BNNR_SEED";
std::optional<std::uint64_t> seed_override_from_env();
std::uint64_t resolve_seed(std::uint64_t configured);

enum class AttackKind { fgsm, bim, pgd, mim, cw, deepfool, spsa, square };

std::string to_string(AttackKind kind);    // lower-case id, e.g. "deepfool"
std::string display_name(AttackKind kind);  // table header, e.g. "DeepF"
AttackKind parse_attack_kind(const std::string& text);
// C&W and DeepFool search for the smallest flip and ignore epsilon.
bool is_min_perturbation(AttackKind kind);

struct AttackSettings {
  std::size_t steps = 10;        // BIM / PGD
  double step_fraction = 0.25;   // BIM / PGD step size as a fraction of epsilon
  std::size_t mim_steps = 10;
  double mim_decay = 1.0;
  CarliniWagnerParams cw;
  DeepFoolParams deepfool;
  SpsaParams spsa;
  SquareParams square;
};

// The only model adversarials may be generated against. Construction rejects
// stochastic models, so transfer evaluation cannot silently attack the model
// under test.
class BaselineModel {
 public:
  explicit BaselineModel(const Model& model);
  const Model& model() const { return model_; }

 private:
  const Model& model_;
};

// Score-level view of a model: exposes probabilities and nothing else.
class ScoreView final : public ScoreOracle {
 public:
  explicit ScoreView(const GradientOracle& inner) : inner_(inner) {}
  Tensor probabilities(const Tensor& x) const override { return inner_.probabilities(x); }

 private:
  const GradientOracle& inner_;
};

std::vector<AttackResult> generate_adversarials(const BaselineModel& target, AttackKind kind, double epsilon,
                                                const Tensor& x, std::span<const int> y,
                                                const AttackSettings& settings, Rng& rng);

struct DatasetSource {
  enum class Kind { synthetic_toy, image_folder };
  Kind kind = Kind::synthetic_toy;
  ToyDataParams toy;
  std::filesystem::path directory;
  std::filesystem::path labels = "labels.csv";  // relative paths resolve against directory
  std::optional<std::size_t> classes;
  double test_fraction = 0.1;
  std::uint64_t split_seed = 0;

  void validate() const;
  Dataset load() const;
  DatasetSplit load_split() const;
};

struct ModelEntry {
  StochasticMode mode = StochasticMode::deterministic;
  InferenceMethod method = InferenceMethod::bbb;

  std::string family() const;
  std::string method_label() const;  // "Baseline" for the CNN
  std::string id() const;            // "CNN", "BNN-Flipout", "F-BNN-BBB", ...
};
// "cnn", "bnn-flipout", "fbnn-bbb", "f-bnn-lrt" (case-insensitive).
ModelEntry parse_model_entry(const std::string& text);

struct ExperimentPlan {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::size_t repeats = 5;
  bool vary_seed_per_repeat = true;
  bool regenerate_adversarials = true;
  DatasetSource dataset;
  std::vector<LayerSpec> layers;  // empty: vgg_style_layers(classes)
  TrainConfig training;
  PriorSpec prior;
  double initial_sigma = 0.05;
  std::vector<ModelEntry> models;
  std::vector<double> epsilons;
  std::vector<AttackKind> attacks;
  AttackSettings attack_settings;
  std::vector<PerturbationSpec> perturbations;
  bool include_clean = true;
  std::optional<std::size_t> max_attack_samples;

  void validate() const;
  // Index of the baseline CNN (the first deterministic model), if any.
  std::optional<std::size_t> baseline_index() const;
};

// JSON plan text; unknown keys are rejected. See README for the key list.
ExperimentPlan parse_plan(const std::string& text);
ExperimentPlan load_plan(const std::filesystem::path& path);

struct RunOptions {
  std::ostream* run_log = nullptr;  // receives one JSON line per record as it is produced
  std::function<void(const std::string&)> progress;
};

struct ExperimentResult {
  RunLog log;
  EvaluationReport report;
};

// Per repeat: train every model from fresh seeds, craft adversarials against
// the baseline CNN only, evaluate every model on clean, perturbed and
// adversarial test inputs. Accuracy cells aggregate over repeats.
ExperimentResult run_experiment(const ExperimentPlan& plan, const DatasetSource& source,
                                const RunOptions& options = {});

ModelConfig make_model_config(const ExperimentPlan& plan, const ModelEntry& entry, const Dataset& data,
                              std::uint64_t seed);

}  // namespace bnnr
