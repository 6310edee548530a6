#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bnnr/variational.hpp"

namespace bnnr {

enum class LayerKind { conv2d, maxpool2d, dense };

// conv2d: `units` output channels, square kernel, stride, zero padding.
// maxpool2d: square window `kernel` with `stride`.
// dense: `units` outputs.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t units = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;

  static LayerSpec conv(std::size_t channels, std::size_t kernel = 3);
  static LayerSpec pool(std::size_t window = 2);
  static LayerSpec dense(std::size_t units);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

std::string_view to_string(LayerKind kind);
// Accepts conv2d/conv, maxpool2d/pool, dense.
LayerKind parse_layer_kind(const std::string& text);

// deterministic           - plain CNN baseline
// classifier_stochastic   - "BNN": trailing dense layers are variational
// fully_stochastic        - "F-BNN": every parameterized layer is variational
enum class StochasticMode { deterministic, classifier_stochastic, fully_stochastic };

std::string_view to_string(StochasticMode mode);
StochasticMode parse_stochastic_mode(std::string_view text);
std::string_view family_name(StochasticMode mode);

struct ModelConfig {
  std::vector<LayerSpec> layers;
  StochasticMode mode = StochasticMode::deterministic;
  InferenceMethod method = InferenceMethod::bbb;
  std::size_t classes = 2;
  std::size_t channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  std::uint64_t seed = 0;
  PriorSpec prior{};
  double initial_sigma = 0.05;

  // Throws on an empty layer list, a classifier-stochastic model without dense layers,
  // or a final layer that is not dense with `classes` outputs.
  void validate() const;
};

// [conv3x3-16, conv3x3-16, pool, conv3x3-32, conv3x3-32, pool, dense-128, dense-classes]
std::vector<LayerSpec> vgg_style_layers(std::size_t classes);

enum class Sampling { mean, stochastic };

class Model {
 public:
  struct DeterministicLinear {
    LinearGeometry geometry;
    Tensor weight;
    Tensor bias;
  };
  struct Pool {
    Pool2dAttrs attrs;
  };
  using Layer = std::variant<DeterministicLinear, StochasticLayer, Pool>;

  // Parameters of every layer bound to one tape, in parameters() order.
  struct Bound {
    std::vector<Var> params;
    std::vector<std::size_t> offsets;  // first param index of each layer
  };

  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const std::vector<Layer>& layers() const { return layers_; }
  bool is_stochastic() const { return config_.mode != StochasticMode::deterministic; }

  std::size_t parameter_count() const;
  std::size_t stochastic_layer_count() const;
  std::size_t parameterized_layer_count() const;
  // Index of the first stochastic layer, or layers().size() for a deterministic model.
  std::size_t first_stochastic_layer() const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  Bound bind(Tape& tape, bool requires_grad) const;

  // Throws unless shape is [N, C, H, W] matching the configured input.
  void check_input(const Shape& shape) const;

  // Logits [N, classes] for x [N, C, H, W].
  Var forward(Tape& tape, const Bound& bound, Var x, Sampling sampling, Rng* rng) const;
  // Runs layers [begin, end); `x` must have the shape produced by layer begin - 1.
  Var forward_range(Tape& tape, const Bound& bound, Var x, std::size_t begin, std::size_t end, Sampling sampling,
                    Rng* rng) const;

  // Sum of closed-form KL terms of all stochastic layers (0 when deterministic).
  Var kl(Tape& tape, const Bound& bound) const;
  double kl() const;

  // Logits without a tape-visible gradient; convenience for evaluation.
  Tensor logits(const Tensor& x, Sampling sampling, Rng* rng) const;

 private:
  bool is_last_parameterized(std::size_t index) const;

  ModelConfig config_;
  std::vector<Layer> layers_;
};

Model build_model(const ModelConfig& config);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace bnnr
