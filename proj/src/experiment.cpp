#include "bnnr/experiment.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <deque>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "bnnr/image_io.hpp"
#include "bnnr/inference.hpp"

namespace bnnr {
namespace {

using nlohmann::json;

// Stream tags for derive_seed; keep stable, changing one changes every result.
enum SeedTag : std::uint64_t { kInit = 1, kTrain = 2, kPerturb = 3, kAttack = 4, kEval = 5 };

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string perturbation_display_name(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::gaussian: return "Gaussian";
    case PerturbationKind::salt_pepper: return "S&P";
    case PerturbationKind::poisson: return "Poisson";
    case PerturbationKind::speckle: return "Speckle";
    case PerturbationKind::random_erase: return "RE";
    case PerturbationKind::random_erase_colorful: return "RE Colorful";
  }
  return "?";
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw std::invalid_argument("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

DatasetSource parse_dataset(const json& j) {
  DatasetSource s;
  const std::string kind = j.value("kind", std::string("toy"));
  if (kind == "toy" || kind == "synthetic_toy") {
    check_keys(j, "dataset", {"kind", "classes", "image_size", "samples", "channels", "background_low",
                              "background_high", "background_noise", "colour_by_class", "seed", "test_fraction",
                              "split_seed"});
    s.kind = DatasetSource::Kind::synthetic_toy;
    read_if(j, "classes", s.toy.classes);
    read_if(j, "image_size", s.toy.image_size);
    read_if(j, "samples", s.toy.samples);
    read_if(j, "channels", s.toy.channels);
    read_if(j, "background_low", s.toy.background_low);
    read_if(j, "background_high", s.toy.background_high);
    read_if(j, "background_noise", s.toy.background_noise);
    read_if(j, "colour_by_class", s.toy.colour_by_class);
    read_if(j, "seed", s.toy.seed);
  } else if (kind == "image_folder") {
    check_keys(j, "dataset", {"kind", "directory", "labels", "classes", "test_fraction", "split_seed"});
    s.kind = DatasetSource::Kind::image_folder;
    s.directory = j.at("directory").get<std::string>();
    if (j.contains("labels")) s.labels = j.at("labels").get<std::string>();
    if (j.contains("classes")) s.classes = j.at("classes").get<std::size_t>();
  } else {
    throw std::invalid_argument("unknown dataset kind '" + kind + "' (toy or image_folder)");
  }
  read_if(j, "test_fraction", s.test_fraction);
  read_if(j, "split_seed", s.split_seed);
  return s;
}

LayerSpec parse_layer(const json& j) {
  check_keys(j, "architecture entry", {"kind", "units", "kernel", "stride", "padding"});
  const LayerKind kind = parse_layer_kind(j.at("kind").get<std::string>());
  LayerSpec spec;
  switch (kind) {
    case LayerKind::conv2d: spec = LayerSpec::conv(j.at("units").get<std::size_t>(), j.value("kernel", std::size_t{3})); break;
    case LayerKind::maxpool2d: spec = LayerSpec::pool(j.value("kernel", std::size_t{2})); break;
    case LayerKind::dense: spec = LayerSpec::dense(j.at("units").get<std::size_t>()); break;
  }
  read_if(j, "stride", spec.stride);
  read_if(j, "padding", spec.padding);
  return spec;
}

TrainConfig parse_training(const json& j) {
  check_keys(j, "training", {"epochs", "batch_size", "learning_rate", "momentum", "mc_train_samples",
                             "mc_eval_samples", "beta"});
  TrainConfig t;
  read_if(j, "epochs", t.epochs);
  read_if(j, "batch_size", t.batch_size);
  read_if(j, "learning_rate", t.learning_rate);
  read_if(j, "momentum", t.momentum);
  read_if(j, "mc_train_samples", t.mc_train_samples);
  read_if(j, "mc_eval_samples", t.mc_eval_samples);
  if (j.contains("beta")) {
    const json& b = j.at("beta");
    if (b.is_string()) {
      if (b.get<std::string>() != "inverse_batches") {
        throw std::invalid_argument("training.beta must be \"inverse_batches\" or a number");
      }
      t.beta_schedule = {BetaSchedule::Kind::inverse_batches, 0.0};
    } else {
      t.beta_schedule = {BetaSchedule::Kind::constant, b.get<double>()};
    }
  }
  return t;
}

AttackSettings parse_attack_settings(const json& j) {
  check_keys(j, "attack_settings", {"steps", "step_fraction", "mim_steps", "mim_decay", "cw", "deepfool", "spsa",
                                    "square"});
  AttackSettings a;
  read_if(j, "steps", a.steps);
  read_if(j, "step_fraction", a.step_fraction);
  read_if(j, "mim_steps", a.mim_steps);
  read_if(j, "mim_decay", a.mim_decay);
  if (j.contains("cw")) {
    const json& c = j.at("cw");
    check_keys(c, "attack_settings.cw", {"binary_search_steps", "inner_steps", "initial_const", "learning_rate",
                                         "confidence"});
    read_if(c, "binary_search_steps", a.cw.binary_search_steps);
    read_if(c, "inner_steps", a.cw.inner_steps);
    read_if(c, "initial_const", a.cw.initial_const);
    read_if(c, "learning_rate", a.cw.learning_rate);
    read_if(c, "confidence", a.cw.confidence);
  }
  if (j.contains("deepfool")) {
    const json& d = j.at("deepfool");
    check_keys(d, "attack_settings.deepfool", {"max_steps", "overshoot"});
    read_if(d, "max_steps", a.deepfool.max_steps);
    read_if(d, "overshoot", a.deepfool.overshoot);
  }
  if (j.contains("spsa")) {
    const json& s = j.at("spsa");
    check_keys(s, "attack_settings.spsa", {"iterations", "samples_per_iter", "perturbation_size", "learning_rate"});
    read_if(s, "iterations", a.spsa.iterations);
    read_if(s, "samples_per_iter", a.spsa.samples_per_iter);
    read_if(s, "perturbation_size", a.spsa.perturbation_size);
    read_if(s, "learning_rate", a.spsa.learning_rate);
  }
  if (j.contains("square")) {
    const json& s = j.at("square");
    check_keys(s, "attack_settings.square", {"query_budget", "initial_patch_fraction", "stagnation_window"});
    read_if(s, "query_budget", a.square.query_budget);
    read_if(s, "initial_patch_fraction", a.square.initial_patch_fraction);
    read_if(s, "stagnation_window", a.square.stagnation_window);
  }
  return a;
}

PerturbationSpec parse_perturbation(const json& j) {
  if (j.is_string()) return PerturbationSpec::defaults(parse_perturbation_kind(j.get<std::string>()));
  check_keys(j, "perturbation", {"kind", "sigma", "density", "scale", "area_min", "area_max", "aspect_min",
                                 "aspect_max", "seed"});
  PerturbationSpec p = PerturbationSpec::defaults(parse_perturbation_kind(j.at("kind").get<std::string>()));
  read_if(j, "sigma", p.sigma);
  read_if(j, "density", p.density);
  read_if(j, "scale", p.scale);
  read_if(j, "area_min", p.area_min);
  read_if(j, "area_max", p.area_max);
  read_if(j, "aspect_min", p.aspect_min);
  read_if(j, "aspect_max", p.aspect_max);
  read_if(j, "seed", p.seed);
  return p;
}

struct Condition {
  std::string name;
  ConditionKind kind;
  std::optional<double> epsilon;
  const Tensor* x;
  const std::vector<int>* y;
  std::optional<double> mean_linf;
};

struct CraftedSet {
  Tensor x_adv;
  double mean_linf = 0.0;
};

}  // namespace

std::optional<std::uint64_t> seed_override_from_env() {
  const char* raw = std::getenv(kSeedEnvVar);
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const std::string text(raw);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument(std::string(kSeedEnvVar) + " must be a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::uint64_t resolve_seed(std::uint64_t configured) { return seed_override_from_env().value_or(configured); }

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::bim: return "bim";
    case AttackKind::pgd: return "pgd";
    case AttackKind::mim: return "mim";
    case AttackKind::cw: return "cw";
    case AttackKind::deepfool: return "deepfool";
    case AttackKind::spsa: return "spsa";
    case AttackKind::square: return "square";
  }
  throw std::invalid_argument("unknown attack kind");
}

std::string display_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::fgsm: return "FGSM";
    case AttackKind::bim: return "BIM";
    case AttackKind::pgd: return "PGD";
    case AttackKind::mim: return "MIM";
    case AttackKind::cw: return "C&W";
    case AttackKind::deepfool: return "DeepF";
    case AttackKind::spsa: return "SPSA";
    case AttackKind::square: return "Square";
  }
  throw std::invalid_argument("unknown attack kind");
}

AttackKind parse_attack_kind(const std::string& text) {
  const std::string t = lower(text);
  for (auto k : {AttackKind::fgsm, AttackKind::bim, AttackKind::pgd, AttackKind::mim, AttackKind::cw,
                 AttackKind::deepfool, AttackKind::spsa, AttackKind::square}) {
    if (t == to_string(k) || t == lower(display_name(k))) return k;
  }
  if (t == "c&w" || t == "carlini_wagner") return AttackKind::cw;
  throw std::invalid_argument("unknown attack '" + text + "'");
}

bool is_min_perturbation(AttackKind kind) { return kind == AttackKind::cw || kind == AttackKind::deepfool; }

BaselineModel::BaselineModel(const Model& model) : model_(model) {
  if (model.is_stochastic() || model.stochastic_layer_count() != 0) {
    throw std::invalid_argument("adversarials must be generated against the deterministic baseline CNN, not a " +
                                std::string(family_name(model.config().mode)));
  }
}

std::vector<AttackResult> generate_adversarials(const BaselineModel& target, AttackKind kind, double epsilon,
                                                const Tensor& x, std::span<const int> y,
                                                const AttackSettings& settings, Rng& rng) {
  const ModelOracle oracle(target.model());
  const ThreatModel tm{Norm::linf, epsilon};
  const double step = epsilon * settings.step_fraction;
  switch (kind) {
    case AttackKind::fgsm: return fgsm(oracle, x, y, tm);
    case AttackKind::bim: return epsilon == 0.0 ? fgsm(oracle, x, y, tm) : bim(oracle, x, y, tm, settings.steps, step);
    case AttackKind::pgd:
      return epsilon == 0.0 ? fgsm(oracle, x, y, tm) : pgd(oracle, x, y, tm, settings.steps, step, rng);
    case AttackKind::mim: return mim_transfer(oracle, x, y, tm, settings.mim_steps, settings.mim_decay);
    case AttackKind::cw: return cw_min_perturbation(oracle, x, y, settings.cw);
    case AttackKind::deepfool: return deepfool(oracle, x, settings.deepfool, y);
    case AttackKind::spsa: return spsa(ScoreView(oracle), x, y, tm, settings.spsa, rng);
    case AttackKind::square: return square_attack(ScoreView(oracle), x, y, tm, settings.square, rng);
  }
  throw std::invalid_argument("unknown attack kind");
}

void DatasetSource::validate() const {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test fraction must lie in (0, 1)");
  if (kind == Kind::synthetic_toy) toy.validate();
  if (kind == Kind::image_folder && directory.empty()) throw std::invalid_argument("image folder dataset needs a directory");
}

Dataset DatasetSource::load() const {
  validate();
  if (kind == Kind::synthetic_toy) return generate_toy_dataset(toy);
  return ingest_image_folder(directory, labels.is_absolute() ? labels : directory / labels, classes);
}

DatasetSplit DatasetSource::load_split() const { return split_dataset(load(), test_fraction, split_seed); }

std::string ModelEntry::family() const { return std::string(family_name(mode)); }

std::string ModelEntry::method_label() const {
  return mode == StochasticMode::deterministic ? "Baseline" : std::string(to_string(method));
}

std::string ModelEntry::id() const {
  return mode == StochasticMode::deterministic ? family() : family() + "-" + method_label();
}

ModelEntry parse_model_entry(const std::string& text) {
  const std::string t = lower(text);
  if (t == "cnn" || t == "baseline" || t == "deterministic") return {StochasticMode::deterministic, InferenceMethod::bbb};
  const auto dash = t.rfind('-');
  if (dash == std::string::npos) throw std::invalid_argument("model '" + text + "' must look like bnn-flipout or fbnn-bbb");
  std::string family = t.substr(0, dash);
  if (family == "f-bnn") family = "fbnn";
  ModelEntry e;
  e.mode = parse_stochastic_mode(family);
  if (e.mode == StochasticMode::deterministic) throw std::invalid_argument("the CNN baseline takes no inference method");
  e.method = parse_inference_method(t.substr(dash + 1));
  return e;
}

std::optional<std::size_t> ExperimentPlan::baseline_index() const {
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].mode == StochasticMode::deterministic) return i;
  }
  return std::nullopt;
}

void ExperimentPlan::validate() const {
  if (repeats == 0) throw std::invalid_argument("plan repeats must be >= 1");
  if (models.empty()) throw std::invalid_argument("plan lists no models");
  std::set<std::string> ids;
  for (const auto& m : models) {
    if (!ids.insert(m.id()).second) throw std::invalid_argument("plan lists model " + m.id() + " twice");
  }
  if (!attacks.empty() && !baseline_index()) {
    throw std::invalid_argument("plan has attacks but no CNN baseline to generate them against");
  }
  const bool constrained = std::any_of(attacks.begin(), attacks.end(), [](AttackKind k) { return !is_min_perturbation(k); });
  if (constrained && epsilons.empty()) throw std::invalid_argument("plan has epsilon-bounded attacks but no epsilons");
  for (double e : epsilons) ThreatModel{Norm::linf, e}.validate();
  std::set<AttackKind> seen_attacks;
  for (AttackKind a : attacks) {
    if (!seen_attacks.insert(a).second) throw std::invalid_argument("plan lists attack " + to_string(a) + " twice");
  }
  std::set<PerturbationKind> seen;
  for (const auto& p : perturbations) {
    p.validate();
    if (!seen.insert(p.kind).second) throw std::invalid_argument("plan lists perturbation " + to_string(p.kind) + " twice");
  }
  if (max_attack_samples && *max_attack_samples == 0) throw std::invalid_argument("max_attack_samples must be >= 1");
  if (!(attack_settings.step_fraction > 0.0)) throw std::invalid_argument("attack step_fraction must be > 0");
  training.validate();
  prior.validate();
  dataset.validate();
}

ExperimentPlan parse_plan(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("plan is not valid JSON: ") + e.what());
  }
  check_keys(j, "plan", {"name", "seed", "repeats", "vary_seed_per_repeat", "regenerate_adversarials", "dataset",
                         "architecture", "training", "prior", "initial_sigma", "models", "epsilons", "attacks",
                         "attack_settings", "perturbations", "include_clean", "max_attack_samples"});
  ExperimentPlan plan;
  try {
    read_if(j, "name", plan.name);
    read_if(j, "seed", plan.seed);
    read_if(j, "repeats", plan.repeats);
    read_if(j, "vary_seed_per_repeat", plan.vary_seed_per_repeat);
    read_if(j, "regenerate_adversarials", plan.regenerate_adversarials);
    read_if(j, "include_clean", plan.include_clean);
    read_if(j, "initial_sigma", plan.initial_sigma);
    if (j.contains("dataset")) plan.dataset = parse_dataset(j.at("dataset"));
    if (j.contains("architecture")) {
      for (const json& l : j.at("architecture")) plan.layers.push_back(parse_layer(l));
    }
    if (j.contains("training")) plan.training = parse_training(j.at("training"));
    if (j.contains("prior")) {
      check_keys(j.at("prior"), "prior", {"mean", "std"});
      read_if(j.at("prior"), "mean", plan.prior.mean);
      read_if(j.at("prior"), "std", plan.prior.std);
    }
    for (const json& m : j.at("models")) plan.models.push_back(parse_model_entry(m.get<std::string>()));
    read_if(j, "epsilons", plan.epsilons);
    if (j.contains("attacks")) {
      for (const json& a : j.at("attacks")) plan.attacks.push_back(parse_attack_kind(a.get<std::string>()));
    }
    if (j.contains("attack_settings")) plan.attack_settings = parse_attack_settings(j.at("attack_settings"));
    if (j.contains("perturbations")) {
      for (const json& p : j.at("perturbations")) plan.perturbations.push_back(parse_perturbation(p));
    }
    if (j.contains("max_attack_samples") && !j.at("max_attack_samples").is_null()) {
      plan.max_attack_samples = j.at("max_attack_samples").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open plan " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  ExperimentPlan plan = parse_plan(buf.str());
  // Relative image folders resolve against the plan's own directory.
  if (plan.dataset.kind == DatasetSource::Kind::image_folder && plan.dataset.directory.is_relative()) {
    plan.dataset.directory = path.parent_path() / plan.dataset.directory;
  }
  return plan;
}

ModelConfig make_model_config(const ExperimentPlan& plan, const ModelEntry& entry, const Dataset& data,
                              std::uint64_t seed) {
  const Shape s = data.image_shape();
  ModelConfig c;
  c.layers = plan.layers.empty() ? vgg_style_layers(data.classes) : plan.layers;
  c.mode = entry.mode;
  c.method = entry.method;
  c.classes = data.classes;
  c.channels = s.at(0);
  c.height = s.at(1);
  c.width = s.at(2);
  c.seed = seed;
  c.prior = plan.prior;
  c.initial_sigma = plan.initial_sigma;
  c.validate();
  return c;
}

ExperimentResult run_experiment(const ExperimentPlan& plan, const DatasetSource& source, const RunOptions& options) {
  plan.validate();
  auto progress = [&](const std::string& msg) {
    if (options.progress) options.progress(msg);
  };
  const DatasetSplit split = source.load_split();
  const Dataset& test = split.test;
  const Dataset attack_set =
      plan.max_attack_samples ? test.head(std::min(*plan.max_attack_samples, test.size())) : test;

  ExperimentResult result;
  auto emit = [&](const auto& record) {
    if (options.run_log) *options.run_log << to_json_line(record) << '\n' << std::flush;
  };

  // Adversarial sets crafted in the first repeat, reused when regeneration is off.
  std::map<std::pair<AttackKind, std::size_t>, CraftedSet> reused;
  const std::size_t no_eps = plan.epsilons.size();

  for (std::size_t r = 0; r < plan.repeats; ++r) {
    const std::uint64_t rs = derive_seed(plan.seed, {plan.vary_seed_per_repeat ? r : 0});
    const std::string run_id = plan.name + "/r" + std::to_string(r);

    std::vector<Model> models;
    models.reserve(plan.models.size());
    for (const ModelEntry& entry : plan.models) {
      const std::uint64_t key = fnv1a(entry.id());
      models.emplace_back(make_model_config(plan, entry, split.train, derive_seed(rs, {kInit, key})));
      Rng rng(derive_seed(rs, {kTrain, key}));
      progress(run_id + ": training " + entry.id());
      const TrainResult tr = train(models.back(), split.train, plan.training, rng);
      TrainingRecord rec{run_id, r, rs, entry.id(), entry.family(), entry.method_label(), tr.wall_clock_seconds,
                         tr.train_accuracy, plan.training.epochs};
      emit(rec);
      result.log.training.push_back(std::move(rec));
    }

    std::deque<Tensor> owned;  // stable addresses for the condition views
    std::vector<Condition> conditions;
    if (plan.include_clean) {
      conditions.push_back({"Clean", ConditionKind::clean, std::nullopt, &test.images, &test.labels, std::nullopt});
    }
    for (std::size_t p = 0; p < plan.perturbations.size(); ++p) {
      const PerturbationSpec& spec = plan.perturbations[p];
      Rng rng(derive_seed(rs, {kPerturb, static_cast<std::uint64_t>(spec.kind), spec.seed}));
      owned.push_back(apply_perturbation(spec, test.images, rng));
      conditions.push_back({perturbation_display_name(spec.kind), ConditionKind::perturbation, std::nullopt,
                            &owned.back(), &test.labels, std::nullopt});
    }
    if (!plan.attacks.empty()) {
      const BaselineModel baseline(models.at(*plan.baseline_index()));
      auto craft = [&](AttackKind kind, std::size_t eps_index) -> const CraftedSet& {
        const auto key = std::make_pair(kind, eps_index);
        if (!plan.regenerate_adversarials) {
          if (auto it = reused.find(key); it != reused.end()) return it->second;
        }
        const double eps = eps_index == no_eps ? 0.0 : plan.epsilons[eps_index];
        Rng rng(derive_seed(rs, {kAttack, static_cast<std::uint64_t>(kind), std::bit_cast<std::uint64_t>(eps)}));
        progress(run_id + ": crafting " + display_name(kind) + (eps_index == no_eps ? "" : " eps=" + std::to_string(eps)));
        const auto results = generate_adversarials(baseline, kind, eps, attack_set.images, attack_set.labels,
                                                   plan.attack_settings, rng);
        return reused[key] = CraftedSet{stack_adversarials(results), mean_linf_distance(results)};
      };
      for (std::size_t e = 0; e < plan.epsilons.size(); ++e) {
        for (AttackKind kind : plan.attacks) {
          if (is_min_perturbation(kind)) continue;
          const CraftedSet& set = craft(kind, e);
          owned.push_back(set.x_adv);
          conditions.push_back({display_name(kind), ConditionKind::attack, plan.epsilons[e], &owned.back(),
                                &attack_set.labels, set.mean_linf});
        }
      }
      for (AttackKind kind : plan.attacks) {
        if (!is_min_perturbation(kind)) continue;
        const CraftedSet& set = craft(kind, no_eps);
        owned.push_back(set.x_adv);
        conditions.push_back({display_name(kind), ConditionKind::min_perturbation_attack, std::nullopt, &owned.back(),
                              &attack_set.labels, set.mean_linf});
      }
    }

    for (std::size_t m = 0; m < models.size(); ++m) {
      const ModelEntry& entry = plan.models[m];
      progress(run_id + ": evaluating " + entry.id());
      for (std::size_t c = 0; c < conditions.size(); ++c) {
        const Condition& cond = conditions[c];
        Rng rng(derive_seed(rs, {kEval, fnv1a(entry.id()), fnv1a(cond.name),
                                 cond.epsilon ? std::bit_cast<std::uint64_t>(*cond.epsilon) : 0}));
        const Prediction pred = predict_mc(models[m], *cond.x, plan.training.mc_eval_samples, rng);
        EvaluationRecord rec{run_id, r, rs, entry.id(), entry.family(), entry.method_label(), cond.name, cond.kind,
                             cond.epsilon, accuracy(pred.labels(), *cond.y), cond.mean_linf, cond.y->size()};
        emit(rec);
        result.log.evaluations.push_back(std::move(rec));
      }
    }
  }
  result.report = aggregate(result.log);
  return result;
}

}  // namespace bnnr
