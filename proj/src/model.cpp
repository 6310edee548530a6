#include "bnnr/model.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "bnnr/archive.hpp"

namespace bnnr {
namespace {

using json = nlohmann::json;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Tensor fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return rand_uniform(shape, -bound, bound, rng);
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& text) {
  if (text == "conv2d" || text == "conv") return LayerKind::conv2d;
  if (text == "maxpool2d" || text == "pool") return LayerKind::maxpool2d;
  if (text == "dense") return LayerKind::dense;
  throw std::invalid_argument("unknown layer kind '" + text + "'");
}

LayerSpec LayerSpec::conv(std::size_t channels, std::size_t kernel) {
  return {LayerKind::conv2d, channels, kernel, 1, kernel / 2};
}

LayerSpec LayerSpec::pool(std::size_t window) { return {LayerKind::maxpool2d, 0, window, window, 0}; }

LayerSpec LayerSpec::dense(std::size_t units) { return {LayerKind::dense, units, 0, 1, 0}; }

std::string_view to_string(StochasticMode mode) {
  switch (mode) {
    case StochasticMode::deterministic: return "deterministic";
    case StochasticMode::classifier_stochastic: return "classifier_stochastic";
    case StochasticMode::fully_stochastic: return "fully_stochastic";
  }
  return "?";
}

StochasticMode parse_stochastic_mode(std::string_view text) {
  if (text == "deterministic" || text == "cnn" || text == "CNN") return StochasticMode::deterministic;
  if (text == "classifier_stochastic" || text == "bnn" || text == "BNN") return StochasticMode::classifier_stochastic;
  if (text == "fully_stochastic" || text == "fbnn" || text == "F-BNN") return StochasticMode::fully_stochastic;
  throw std::invalid_argument("unknown stochastic mode '" + std::string(text) + "'");
}

std::string_view family_name(StochasticMode mode) {
  switch (mode) {
    case StochasticMode::deterministic: return "CNN";
    case StochasticMode::classifier_stochastic: return "BNN";
    case StochasticMode::fully_stochastic: return "F-BNN";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (layers.empty()) throw std::invalid_argument("model config has an empty layer list");
  if (classes < 2) throw std::invalid_argument("model needs at least two classes");
  if (channels == 0 || height == 0 || width == 0) throw std::invalid_argument("input shape must be positive");
  if (!(initial_sigma > 0.0)) throw std::invalid_argument("initial sigma must be positive");
  prior.validate();
  bool has_dense = false;
  for (const LayerSpec& l : layers) {
    if (l.kind == LayerKind::dense) has_dense = true;
    if (l.kind != LayerKind::maxpool2d && l.units == 0) throw std::invalid_argument("layer with zero units");
  }
  if (mode == StochasticMode::classifier_stochastic && !has_dense) {
    throw std::invalid_argument("classifier-stochastic model needs at least one dense layer");
  }
  if (layers.back().kind != LayerKind::dense || layers.back().units != classes) {
    throw std::invalid_argument("the final layer must be dense with " + std::to_string(classes) + " outputs");
  }
}

std::vector<LayerSpec> vgg_style_layers(std::size_t classes) {
  return {LayerSpec::conv(16), LayerSpec::conv(16), LayerSpec::pool(),     LayerSpec::conv(32),
          LayerSpec::conv(32), LayerSpec::pool(),   LayerSpec::dense(128), LayerSpec::dense(classes)};
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);

  // Trailing dense block: dense layers after the last conv/pool layer.
  std::size_t classifier_start = 0;
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    if (config_.layers[i].kind != LayerKind::dense) classifier_start = i + 1;
  }

  std::size_t c = config_.channels, h = config_.height, w = config_.width;
  bool flat = false;
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const LayerSpec& spec = config_.layers[i];
    const bool stochastic = config_.mode == StochasticMode::fully_stochastic ||
                            (config_.mode == StochasticMode::classifier_stochastic && i >= classifier_start);
    LinearGeometry geometry;
    Shape weight_shape;
    std::size_t fan_in = 0;
    switch (spec.kind) {
      case LayerKind::maxpool2d: {
        if (flat) throw std::invalid_argument("pooling layer after a dense layer");
        if (spec.kernel == 0 || spec.stride == 0 || h < spec.kernel || w < spec.kernel) {
          throw std::invalid_argument("pooling window does not fit the feature map");
        }
        layers_.emplace_back(Pool{{spec.kernel, spec.stride}});
        h = (h - spec.kernel) / spec.stride + 1;
        w = (w - spec.kernel) / spec.stride + 1;
        continue;
      }
      case LayerKind::conv2d: {
        if (flat) throw std::invalid_argument("convolution after a dense layer");
        if (spec.kernel == 0 || spec.stride == 0 || h + 2 * spec.padding < spec.kernel ||
            w + 2 * spec.padding < spec.kernel) {
          throw std::invalid_argument("convolution kernel does not fit the feature map");
        }
        geometry = {LinearKind::conv2d, {spec.stride, spec.padding}};
        weight_shape = {spec.units, c, spec.kernel, spec.kernel};
        fan_in = c * spec.kernel * spec.kernel;
        h = (h + 2 * spec.padding - spec.kernel) / spec.stride + 1;
        w = (w + 2 * spec.padding - spec.kernel) / spec.stride + 1;
        c = spec.units;
        break;
      }
      case LayerKind::dense: {
        const std::size_t in = flat ? c : c * h * w;
        geometry = {LinearKind::dense, {}};
        weight_shape = {in, spec.units};
        fan_in = in;
        flat = true;
        c = spec.units;
        h = w = 1;
        break;
      }
    }
    Tensor weight = fan_in_uniform(weight_shape, fan_in, rng);
    Tensor bias({spec.units}, 0.0);
    if (stochastic) {
      layers_.emplace_back(StochasticLayer(geometry,
                                           GaussianVariationalParams::with_sigma(std::move(weight), config_.initial_sigma),
                                           GaussianVariationalParams::with_sigma(std::move(bias), config_.initial_sigma),
                                           config_.prior, config_.method));
    } else {
      layers_.emplace_back(DeterministicLinear{geometry, std::move(weight), std::move(bias)});
    }
  }
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const Tensor* p : parameters()) total += p->size();
  return total;
}

std::size_t Model::stochastic_layer_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += std::holds_alternative<StochasticLayer>(l) ? 1 : 0;
  return n;
}

std::size_t Model::parameterized_layer_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += std::holds_alternative<Pool>(l) ? 0 : 1;
  return n;
}

std::size_t Model::first_stochastic_layer() const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (std::holds_alternative<StochasticLayer>(layers_[i])) return i;
  }
  return layers_.size();
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (Layer& l : layers_) {
    std::visit(overloaded{[&](DeterministicLinear& d) {
                            out.push_back(&d.weight);
                            out.push_back(&d.bias);
                          },
                          [&](StochasticLayer& s) {
                            out.push_back(&s.weight().mu());
                            out.push_back(&s.weight().rho());
                            out.push_back(&s.bias().mu());
                            out.push_back(&s.bias().rho());
                          },
                          [](Pool&) {}},
               l);
  }
  return out;
}

std::vector<const Tensor*> Model::parameters() const {
  auto mutable_params = const_cast<Model*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

Model::Bound Model::bind(Tape& tape, bool requires_grad) const {
  Bound bound;
  for (const Layer& l : layers_) {
    bound.offsets.push_back(bound.params.size());
    std::visit(overloaded{[&](const DeterministicLinear& d) {
                            bound.params.push_back(tape.leaf(d.weight, requires_grad));
                            bound.params.push_back(tape.leaf(d.bias, requires_grad));
                          },
                          [&](const StochasticLayer& s) {
                            bound.params.push_back(tape.leaf(s.weight().mu(), requires_grad));
                            bound.params.push_back(tape.leaf(s.weight().rho(), requires_grad));
                            bound.params.push_back(tape.leaf(s.bias().mu(), requires_grad));
                            bound.params.push_back(tape.leaf(s.bias().rho(), requires_grad));
                          },
                          [](const Pool&) {}},
               l);
  }
  return bound;
}

bool Model::is_last_parameterized(std::size_t index) const {
  for (std::size_t j = index + 1; j < layers_.size(); ++j) {
    if (!std::holds_alternative<Pool>(layers_[j])) return false;
  }
  return true;
}

void Model::check_input(const Shape& shape) const {
  const Shape expected{config_.channels, config_.height, config_.width};
  if (shape.size() != 4 || Shape(shape.begin() + 1, shape.end()) != expected) {
    throw ShapeError("model input must be [N, " + std::to_string(config_.channels) + ", " +
                     std::to_string(config_.height) + ", " + std::to_string(config_.width) + "], got " +
                     shape_string(shape));
  }
}

Var Model::forward(Tape& tape, const Bound& bound, Var x, Sampling sampling, Rng* rng) const {
  check_input(x.shape());
  return forward_range(tape, bound, x, 0, layers_.size(), sampling, rng);
}

Var Model::forward_range(Tape& tape, const Bound& bound, Var x, std::size_t begin, std::size_t end, Sampling sampling,
                         Rng* rng) const {
  if (begin > end || end > layers_.size()) throw std::out_of_range("forward_range: bad layer range");
  Var h = x;
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t off = bound.offsets.at(i);
    const bool last = is_last_parameterized(i);
    std::visit(overloaded{[&](const DeterministicLinear& d) {
                            if (d.geometry.kind == LinearKind::dense && h.shape().size() > 2) h = flatten(h);
                            h = linear_forward(d.geometry, h, bound.params[off], bound.params[off + 1]);
                            if (!last) h = relu(h);
                          },
                          [&](const StochasticLayer& s) {
                            if (s.kind() == LinearKind::dense && h.shape().size() > 2) h = flatten(h);
                            const StochasticLayer::Bound sb{{bound.params[off], bound.params[off + 1]},
                                                            {bound.params[off + 2], bound.params[off + 3]}};
                            if (sampling == Sampling::mean) {
                              h = s.forward_mean(tape, sb, h);
                            } else {
                              if (rng == nullptr) throw std::invalid_argument("stochastic forward needs an RNG");
                              h = s.forward(tape, sb, h, *rng);
                            }
                            if (!last) h = relu(h);
                          },
                          [&](const Pool& p) { h = maxpool2d(h, p.attrs); }},
               layers_[i]);
  }
  return h;
}

Var Model::kl(Tape& tape, const Bound& bound) const {
  Var total = tape.constant(Tensor::scalar(0.0));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (const auto* s = std::get_if<StochasticLayer>(&layers_[i])) {
      const std::size_t off = bound.offsets.at(i);
      const StochasticLayer::Bound sb{{bound.params[off], bound.params[off + 1]},
                                      {bound.params[off + 2], bound.params[off + 3]}};
      total = add(total, s->kl(tape, sb));
    }
  }
  return total;
}

double Model::kl() const {
  double total = 0.0;
  for (const Layer& l : layers_) {
    if (const auto* s = std::get_if<StochasticLayer>(&l)) total += s->kl();
  }
  return total;
}

Tensor Model::logits(const Tensor& x, Sampling sampling, Rng* rng) const {
  Tape tape;
  const Bound bound = bind(tape, false);
  return forward(tape, bound, tape.constant(x), sampling, rng).value();
}

Model build_model(const ModelConfig& config) { return Model(config); }

std::string model_config_to_json(const ModelConfig& config) {
  json layers = json::array();
  for (const LayerSpec& l : config.layers) {
    layers.push_back({{"kind", to_string(l.kind)},
                      {"units", l.units},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"padding", l.padding}});
  }
  const json j = {{"layers", layers},
                  {"mode", to_string(config.mode)},
                  {"method", to_string(config.method)},
                  {"classes", config.classes},
                  {"input", {config.channels, config.height, config.width}},
                  {"seed", config.seed},
                  {"prior", {{"mean", config.prior.mean}, {"std", config.prior.std}}},
                  {"initial_sigma", config.initial_sigma}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig config;
  for (const json& l : j.at("layers")) {
    config.layers.push_back({parse_layer_kind(l.at("kind").get<std::string>()), l.at("units").get<std::size_t>(),
                             l.at("kernel").get<std::size_t>(), l.at("stride").get<std::size_t>(),
                             l.at("padding").get<std::size_t>()});
  }
  config.mode = parse_stochastic_mode(j.at("mode").get<std::string>());
  config.method = parse_inference_method(j.at("method").get<std::string>());
  config.classes = j.at("classes").get<std::size_t>();
  const auto input = j.at("input").get<std::vector<std::size_t>>();
  if (input.size() != 3) throw std::invalid_argument("model input must list [C, H, W]");
  config.channels = input[0];
  config.height = input[1];
  config.width = input[2];
  config.seed = j.at("seed").get<std::uint64_t>();
  config.prior.mean = j.at("prior").at("mean").get<double>();
  config.prior.std = j.at("prior").at("std").get<double>();
  config.initial_sigma = j.at("initial_sigma").get<double>();
  return config;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  Archive archive;
  archive.kind = ArchiveKind::model_checkpoint;
  archive.metadata = model_config_to_json(model.config());
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    archive.entries.push_back({"param." + std::to_string(i), *params[i]});
  }
  write_archive(path, archive);
}

Model load_model(const std::filesystem::path& path) {
  const Archive archive = read_archive(path);
  if (archive.kind != ArchiveKind::model_checkpoint) throw ArchiveError("'" + path.string() + "' is not a model checkpoint");
  Model model(model_config_from_json(archive.metadata));
  auto params = model.parameters();
  if (params.size() != archive.entries.size()) {
    throw ArchiveError("checkpoint holds " + std::to_string(archive.entries.size()) + " tensors, model expects " +
                       std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& stored = archive.at("param." + std::to_string(i));
    if (stored.shape() != params[i]->shape()) {
      throw ArchiveError("checkpoint tensor " + std::to_string(i) + " has shape " + shape_string(stored.shape()) +
                         ", model expects " + shape_string(params[i]->shape()));
    }
    *params[i] = stored;
  }
  return model;
}

}  // namespace bnnr
