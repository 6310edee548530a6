// bnnr: train, attack, perturb and evaluate deterministic and variational classifiers.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "bnnr/attacks.hpp"
#include "bnnr/experiment.hpp"
#include "bnnr/image_io.hpp"
#include "bnnr/inference.hpp"
#include "bnnr/model.hpp"
#include "bnnr/perturbations.hpp"
#include "bnnr/report.hpp"
#include "bnnr/toy_data.hpp"
#include "bnnr/training.hpp"

namespace fs = std::filesystem;
using namespace bnnr;

namespace {

struct DataArgs {
  std::string directory;
  std::string labels = "labels.csv";
  std::optional<std::size_t> classes;
  double test_fraction = 0.1;
  std::uint64_t split_seed = 0;
  std::string split = "test";

  void add(CLI::App* cmd, bool with_split) {
    cmd->add_option("--data", directory, "Image folder holding the label CSV")->required();
    cmd->add_option("--labels", labels, "Label CSV, relative to --data")->capture_default_str();
    cmd->add_option("--classes", classes, "Number of classes (default: max label + 1)");
    cmd->add_option("--test-fraction", test_fraction, "Held-out fraction")->capture_default_str();
    cmd->add_option("--split-seed", split_seed, "Seed of the train/test shuffle")->capture_default_str();
    if (with_split) {
      cmd->add_option("--split", split, "Which part to use")
          ->check(CLI::IsMember({"train", "test", "all"}))
          ->capture_default_str();
    }
  }

  DatasetSource source() const {
    DatasetSource s;
    s.kind = DatasetSource::Kind::image_folder;
    s.directory = directory;
    s.labels = labels;
    s.classes = classes;
    s.test_fraction = test_fraction;
    s.split_seed = split_seed;
    return s;
  }

  Dataset selected() const {
    const DatasetSource s = source();
    if (split == "all") return s.load();
    DatasetSplit parts = s.load_split();
    return split == "train" ? std::move(parts.train) : std::move(parts.test);
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

int run_toygen(const ToyDataParams& params, const std::string& out, const std::string& format) {
  const Dataset data = generate_toy_dataset(params);
  write_image_folder(out, data, format);
  std::cout << "wrote " << data.size() << " images (" << data.classes << " classes) to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic vs. Bayesian CNN robustness toolkit"};
  app.require_subcommand(1);

  // toygen
  auto* toygen = app.add_subcommand("toygen", "Write the synthetic shape dataset as an image folder");
  ToyDataParams toy;
  std::string toy_out, toy_format = "png";
  toygen->add_option("--out", toy_out, "Output directory")->required();
  toygen->add_option("--classes", toy.classes)->capture_default_str();
  toygen->add_option("--samples", toy.samples)->capture_default_str();
  toygen->add_option("--image-size", toy.image_size)->capture_default_str();
  toygen->add_option("--noise", toy.background_noise, "Per-pixel Gaussian noise std")->capture_default_str();
  toygen->add_option("--seed", toy.seed)->capture_default_str();
  toygen->add_flag("!--random-colour", toy.colour_by_class, "Draw the colour per sample instead of per class");
  toygen->add_option("--format", toy_format)->check(CLI::IsMember({"png", "ppm"}))->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one model on an image folder and save a checkpoint");
  DataArgs train_data;
  train_data.add(train_cmd, false);
  std::string mode = "cnn", method = "flipout", train_out, train_log;
  std::uint64_t train_seed = 0;
  TrainConfig tc;
  train_cmd->add_option("--mode", mode, "cnn, bnn or fbnn")->capture_default_str();
  train_cmd->add_option("--method", method, "bbb, lrt, flipout or vi")->capture_default_str();
  train_cmd->add_option("--epochs", tc.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", tc.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", tc.learning_rate)->capture_default_str();
  train_cmd->add_option("--momentum", tc.momentum)->capture_default_str();
  train_cmd->add_option("--mc-eval", tc.mc_eval_samples, "MC samples for test accuracy")->capture_default_str();
  train_cmd->add_option("--seed", train_seed)->capture_default_str();
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_cmd->add_option("--log", train_log, "Append a JSON-lines training record");

  // attack
  auto* attack_cmd = app.add_subcommand("attack", "Craft adversarials against a CNN baseline checkpoint");
  DataArgs attack_data;
  attack_data.add(attack_cmd, true);
  std::string attack_model, attack_name = "pgd", attack_out;
  double attack_eps = 0.1;
  std::uint64_t attack_seed = 0;
  std::optional<std::size_t> attack_max;
  AttackSettings attack_settings;
  attack_cmd->add_option("--model", attack_model, "Baseline CNN checkpoint")->required();
  attack_cmd->add_option("--attack", attack_name, "fgsm, bim, pgd, mim, cw, deepfool, spsa or square")
      ->capture_default_str();
  attack_cmd->add_option("--eps", attack_eps, "L-infinity budget")->capture_default_str();
  attack_cmd->add_option("--steps", attack_settings.steps, "BIM/PGD steps")->capture_default_str();
  attack_cmd->add_option("--seed", attack_seed)->capture_default_str();
  attack_cmd->add_option("--max-samples", attack_max, "Attack only the first N samples");
  attack_cmd->add_option("--out", attack_out, "Adversarial archive path")->required();

  // perturb
  auto* perturb_cmd = app.add_subcommand("perturb", "Write a corrupted copy of an image folder");
  DataArgs perturb_data;
  perturb_data.split = "all";
  perturb_data.add(perturb_cmd, true);
  std::string perturb_kind = "gaussian", perturb_out, perturb_format = "png";
  std::optional<double> perturb_sigma, perturb_density;
  std::uint64_t perturb_seed = 0;
  perturb_cmd->add_option("--kind", perturb_kind,
                          "gaussian, salt_pepper, poisson, speckle, random_erase or random_erase_colorful")
      ->capture_default_str();
  perturb_cmd->add_option("--sigma", perturb_sigma, "Noise std (gaussian, speckle)");
  perturb_cmd->add_option("--density", perturb_density, "Salt-and-pepper density");
  perturb_cmd->add_option("--seed", perturb_seed)->capture_default_str();
  perturb_cmd->add_option("--out", perturb_out, "Output directory")->required();
  perturb_cmd->add_option("--format", perturb_format)->check(CLI::IsMember({"png", "ppm"}))->capture_default_str();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Run an experiment plan, or score one checkpoint");
  std::string plan_path, eval_model, eval_adv, eval_log, eval_report_dir;
  std::optional<std::size_t> eval_repeats, eval_epochs, eval_max_attack;
  std::optional<std::uint64_t> eval_seed;
  std::size_t eval_mc = 10;
  std::string eval_dir, eval_labels = "labels.csv", eval_split = "test";
  double eval_test_fraction = 0.1;
  std::uint64_t eval_split_seed = 0;
  bool quiet = false;
  auto* plan_opt = eval_cmd->add_option("--plan", plan_path, "JSON experiment plan");
  auto* model_opt = eval_cmd->add_option("--model", eval_model, "Checkpoint to score");
  plan_opt->excludes(model_opt);
  eval_cmd->add_option("--repeats", eval_repeats, "Override plan repeats");
  eval_cmd->add_option("--epochs", eval_epochs, "Override plan epochs");
  eval_cmd->add_option("--seed", eval_seed, "Override plan seed");
  eval_cmd->add_option("--max-attack-samples", eval_max_attack, "Override plan attack subset size");
  eval_cmd->add_option("--log", eval_log, "Run log (JSON lines)");
  eval_cmd->add_option("--report-dir", eval_report_dir, "Write report.csv, report.md and timing.csv here");
  eval_cmd->add_flag("--quiet", quiet, "No progress on stderr");
  eval_cmd->add_option("--data", eval_dir, "Image folder (with --model)");
  eval_cmd->add_option("--labels", eval_labels)->capture_default_str();
  eval_cmd->add_option("--split", eval_split)->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();
  eval_cmd->add_option("--test-fraction", eval_test_fraction)->capture_default_str();
  eval_cmd->add_option("--split-seed", eval_split_seed)->capture_default_str();
  eval_cmd->add_option("--adversarial", eval_adv, "Score on a saved adversarial batch instead (with --model)");
  eval_cmd->add_option("--mc-samples", eval_mc, "MC samples for stochastic models")->capture_default_str();

  // report
  auto* report_cmd = app.add_subcommand("report", "Aggregate a run log into accuracy tables");
  std::string report_log, report_format = "markdown", report_out;
  bool report_timing = false;
  report_cmd->add_option("--log", report_log, "Run log (JSON lines)")->required();
  report_cmd->add_option("--format", report_format)->check(CLI::IsMember({"csv", "markdown", "md"}))->capture_default_str();
  report_cmd->add_option("--out", report_out, "Output file (default stdout)");
  report_cmd->add_flag("--timing", report_timing, "Emit the training-time table instead");

  CLI11_PARSE(app, argc, argv);

  try {
    if (toygen->parsed()) {
      toy.seed = resolve_seed(toy.seed);
      return run_toygen(toy, toy_out, toy_format);
    }

    if (train_cmd->parsed()) {
      const DatasetSplit split = train_data.source().load_split();
      ModelConfig config;
      config.mode = parse_stochastic_mode(mode);
      config.method = parse_inference_method(method);
      config.classes = split.train.classes;
      const Shape s = split.train.image_shape();
      config.channels = s[0];
      config.height = s[1];
      config.width = s[2];
      config.layers = vgg_style_layers(config.classes);
      const std::uint64_t seed = resolve_seed(train_seed);
      config.seed = derive_seed(seed, {1});
      Model model(config);
      Rng rng(derive_seed(seed, {2}));
      const TrainResult r = train(model, split.train, tc, rng, &split.test);
      save_model(train_out, model);
      std::printf("%s: train accuracy %.4f, test accuracy %.4f, wall-clock %.3f s\n",
                  std::string(family_name(config.mode)).c_str(), r.train_accuracy, r.test_accuracy.value_or(0.0),
                  r.wall_clock_seconds);
      if (!train_log.empty()) {
        std::ofstream log(train_log, std::ios::app);
        ModelEntry entry{config.mode, config.method};
        log << to_json_line(TrainingRecord{train_out, 0, seed, entry.id(), entry.family(), entry.method_label(),
                                           r.wall_clock_seconds, r.train_accuracy, tc.epochs})
            << '\n';
      }
      return 0;
    }

    if (attack_cmd->parsed()) {
      Dataset data = attack_data.selected();
      if (attack_max) data = data.head(std::min(*attack_max, data.size()));
      const Model model = load_model(attack_model);
      const BaselineModel baseline(model);
      const AttackKind kind = parse_attack_kind(attack_name);
      const std::uint64_t seed = resolve_seed(attack_seed);
      Rng rng(seed);
      const auto results = generate_adversarials(baseline, kind, attack_eps, data.images, data.labels,
                                                 attack_settings, rng);
      save_adversarial_batch(attack_out,
                             make_adversarial_batch(to_string(kind), attack_eps, seed, results, data.labels));
      std::size_t flipped = 0;
      for (const auto& r : results) flipped += r.success ? 1 : 0;
      std::printf("%s eps=%.3f: %zu samples, mean L-inf %.4f, success rate %.4f\n", display_name(kind).c_str(),
                  attack_eps, results.size(), mean_linf_distance(results),
                  static_cast<double>(flipped) / static_cast<double>(results.size()));
      return 0;
    }

    if (perturb_cmd->parsed()) {
      Dataset data = perturb_data.selected();
      PerturbationSpec spec = PerturbationSpec::defaults(parse_perturbation_kind(perturb_kind));
      if (perturb_sigma) spec.sigma = *perturb_sigma;
      if (perturb_density) spec.density = *perturb_density;
      spec.seed = resolve_seed(perturb_seed);
      data.images = apply_perturbation(spec, data.images);
      write_image_folder(perturb_out, data, perturb_format);
      std::cout << "wrote " << data.size() << " " << to_string(spec.kind) << " images to " << perturb_out << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      if (!plan_path.empty()) {
        ExperimentPlan plan = load_plan(plan_path);
        if (eval_repeats) plan.repeats = *eval_repeats;
        if (eval_epochs) plan.training.epochs = *eval_epochs;
        if (eval_seed) plan.seed = *eval_seed;
        if (eval_max_attack) plan.max_attack_samples = *eval_max_attack;
        plan.seed = resolve_seed(plan.seed);
        std::ofstream log_file;
        RunOptions options;
        if (!eval_log.empty()) {
          log_file.open(eval_log);
          if (!log_file) throw std::runtime_error("cannot write " + eval_log);
          options.run_log = &log_file;
        }
        if (!quiet) options.progress = [](const std::string& msg) { std::cerr << msg << '\n'; };
        const ExperimentResult result = run_experiment(plan, plan.dataset, options);
        if (!eval_report_dir.empty()) {
          fs::create_directories(eval_report_dir);
          write_text((fs::path(eval_report_dir) / "report.csv").string(), emit_report(result.report, ReportFormat::csv));
          write_text((fs::path(eval_report_dir) / "report.md").string(),
                     emit_report(result.report, ReportFormat::markdown));
          write_text((fs::path(eval_report_dir) / "timing.csv").string(), emit_timing(result.report, ReportFormat::csv));
        }
        std::cout << emit_report(result.report, ReportFormat::markdown);
        return 0;
      }
      if (eval_model.empty()) throw CLI::RequiredError("--plan or --model");
      const Model model = load_model(eval_model);
      Rng rng(resolve_seed(0));
      Tensor x;
      std::vector<int> y;
      if (!eval_adv.empty()) {
        AdversarialBatch batch = load_adversarial_batch(eval_adv);
        x = std::move(batch.x_adv);
        y = std::move(batch.labels);
      } else {
        if (eval_dir.empty()) throw CLI::RequiredError("--data (or --adversarial) with --model");
        DataArgs args;
        args.directory = eval_dir;
        args.labels = eval_labels;
        args.split = eval_split;
        args.test_fraction = eval_test_fraction;
        args.split_seed = eval_split_seed;
        Dataset data = args.selected();
        x = std::move(data.images);
        y = std::move(data.labels);
      }
      const Prediction pred = predict_mc(model, x, eval_mc, rng);
      std::printf("accuracy %.4f on %zu samples\n", accuracy(pred.labels(), y), y.size());
      return 0;
    }

    if (report_cmd->parsed()) {
      const EvaluationReport report = aggregate(read_run_log(report_log));
      const ReportFormat format = parse_report_format(report_format);
      write_text(report_out, report_timing ? emit_timing(report, format) : emit_report(report, format));
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
