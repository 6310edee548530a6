#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "bnnr/archive.hpp"
#include "bnnr/attacks.hpp"
#include "bnnr/inference.hpp"
#include "bnnr/model.hpp"
#include "bnnr/oracle.hpp"
#include "bnnr/toy_data.hpp"
#include "bnnr/training.hpp"

using namespace bnnr;
namespace fs = std::filesystem;

namespace {

ModelConfig config_for(const Dataset& d, StochasticMode mode, InferenceMethod method, std::vector<LayerSpec> layers,
                       std::uint64_t seed = 3) {
  ModelConfig c;
  c.mode = mode;
  c.method = method;
  c.classes = d.classes;
  const Shape s = d.image_shape();
  c.channels = s[0];
  c.height = s[1];
  c.width = s[2];
  c.layers = std::move(layers);
  c.seed = seed;
  return c;
}

std::vector<LayerSpec> small_layers(std::size_t classes) {
  return {LayerSpec::conv(8), LayerSpec::pool(), LayerSpec::dense(32), LayerSpec::dense(classes)};
}

// Two colour-coded classes: separable by mean channel intensity alone.
DatasetSplit separable_two_class(std::size_t samples = 240) {
  ToyDataParams p;
  p.classes = 2;
  p.samples = samples;
  p.image_size = 8;
  p.seed = 11;
  return split_dataset(generate_toy_dataset(p), 0.25, 1);
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("bnnr_models_" + name); }

}  // namespace

TEST(BuildModel, DeterministicHasNoVariationalParams) {
  ModelConfig c;
  c.classes = 3;
  c.layers = vgg_style_layers(3);
  const Model m(c);
  EXPECT_EQ(m.stochastic_layer_count(), 0u);
  EXPECT_FALSE(m.is_stochastic());
  for (const auto& l : m.layers()) EXPECT_FALSE(std::holds_alternative<StochasticLayer>(l));
}

TEST(BuildModel, ClassifierStochasticMarksTrailingDenseOnly) {
  ModelConfig c;
  c.classes = 3;
  c.mode = StochasticMode::classifier_stochastic;
  c.layers = {LayerSpec::conv(4), LayerSpec::conv(4), LayerSpec::dense(8), LayerSpec::dense(3)};
  const Model m(c);
  EXPECT_EQ(m.stochastic_layer_count(), 2u);
  EXPECT_TRUE(std::holds_alternative<Model::DeterministicLinear>(m.layers()[0]));
  EXPECT_TRUE(std::holds_alternative<StochasticLayer>(m.layers()[3]));
}

TEST(BuildModel, FullyStochasticCoversEveryParameterizedLayer) {
  ModelConfig c;
  c.classes = 4;
  c.mode = StochasticMode::fully_stochastic;
  c.layers = vgg_style_layers(4);
  const Model m(c);
  EXPECT_EQ(m.stochastic_layer_count(), m.parameterized_layer_count());
  EXPECT_EQ(m.parameterized_layer_count(), 6u);
}

TEST(BuildModel, VggStyleStack) {
  const auto layers = vgg_style_layers(5);
  const std::vector<LayerSpec> expected{LayerSpec::conv(16), LayerSpec::conv(16), LayerSpec::pool(),
                                        LayerSpec::conv(32), LayerSpec::conv(32), LayerSpec::pool(),
                                        LayerSpec::dense(128), LayerSpec::dense(5)};
  EXPECT_EQ(layers, expected);
}

TEST(BuildModel, InvalidConfigsAreRejected) {
  ModelConfig c;
  c.classes = 3;
  EXPECT_THROW(Model{c}, std::invalid_argument);  // empty layer list
  c.mode = StochasticMode::classifier_stochastic;
  c.layers = {LayerSpec::conv(3), LayerSpec::conv(3)};
  EXPECT_THROW(Model{c}, std::invalid_argument);  // no dense layer
  c.mode = StochasticMode::deterministic;
  c.layers = {LayerSpec::dense(4)};
  EXPECT_THROW(Model{c}, std::invalid_argument);  // final width != classes
}

TEST(BuildModel, DeterministicIgnoresMethod) {
  ModelConfig a;
  a.classes = 2;
  a.layers = {LayerSpec::dense(2)};
  ModelConfig b = a;
  b.method = InferenceMethod::flipout;
  Rng rng(1);
  const Tensor x = rand_uniform({3, 3, 8, 8}, 0, 1, rng);
  EXPECT_EQ(Model(a).logits(x, Sampling::mean, nullptr), Model(b).logits(x, Sampling::mean, nullptr));
}

TEST(Train, DeterministicCnnFitsSeparableSet) {
  const DatasetSplit s = separable_two_class();
  Model m(config_for(s.train, StochasticMode::deterministic, InferenceMethod::bbb, vgg_style_layers(2)));
  TrainConfig tc;
  tc.epochs = 30;
  Rng rng(5);
  const TrainResult r = train(m, s.train, tc, rng);
  EXPECT_GE(r.train_accuracy, 0.99);
  EXPECT_GT(r.wall_clock_seconds, 0.0);
  EXPECT_EQ(r.epoch_seconds.size(), 30u);
}

TEST(Train, BnnFlipoutGeneralizesOnSeparableSet) {
  const DatasetSplit s = separable_two_class();
  Model m(config_for(s.train, StochasticMode::classifier_stochastic, InferenceMethod::flipout, vgg_style_layers(2)));
  TrainConfig tc;
  tc.epochs = 30;
  Rng rng(6);
  const TrainResult r = train(m, s.train, tc, rng, &s.test);
  ASSERT_TRUE(r.test_accuracy.has_value());
  EXPECT_GE(*r.test_accuracy, 0.95);
}

TEST(Train, ZeroEpochsIsChanceLevel) {
  ToyDataParams p;
  p.classes = 4;
  p.samples = 400;
  const Dataset d = generate_toy_dataset(p);
  double total = 0.0;
  const int models = 8;
  for (int seed = 0; seed < models; ++seed) {
    Model m(config_for(d, StochasticMode::deterministic, InferenceMethod::bbb, small_layers(4), seed));
    TrainConfig tc;
    tc.epochs = 0;
    Rng rng(seed);
    total += train(m, d, tc, rng).train_accuracy;
  }
  EXPECT_NEAR(total / models, 0.25, 0.12);
}

TEST(Train, SameSeedSameWeights) {
  const DatasetSplit s = separable_two_class(80);
  auto run = [&] {
    Model m(config_for(s.train, StochasticMode::fully_stochastic, InferenceMethod::lrt, small_layers(2)));
    TrainConfig tc;
    tc.epochs = 2;
    Rng rng(9);
    train(m, s.train, tc, rng);
    std::vector<Tensor> out;
    for (const Tensor* t : m.parameters()) out.push_back(*t);
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, DivergenceIsReported) {
  const DatasetSplit s = separable_two_class(80);
  Model m(config_for(s.train, StochasticMode::deterministic, InferenceMethod::bbb, small_layers(2)));
  TrainConfig tc;
  tc.epochs = 20;
  tc.learning_rate = 1e150;
  Rng rng(1);
  EXPECT_THROW(train(m, s.train, tc, rng), TrainingDiverged);
}

TEST(Train, DatasetWithMoreClassesThanModelIsRejected) {
  ToyDataParams p;
  p.classes = 3;
  p.samples = 30;
  const Dataset d = generate_toy_dataset(p);
  ModelConfig c = config_for(d, StochasticMode::deterministic, InferenceMethod::bbb, small_layers(2));
  c.classes = 2;
  Model m(c);
  TrainConfig tc;
  Rng rng(1);
  EXPECT_THROW(train(m, d, tc, rng), std::invalid_argument);
}

TEST(BetaSchedule, InverseBatchesWeightsKlOncePerEpoch) {
  BetaSchedule b;
  EXPECT_DOUBLE_EQ(b.beta(4), 0.25);
  EXPECT_DOUBLE_EQ(4 * b.beta(4), 1.0);
  EXPECT_DOUBLE_EQ((BetaSchedule{BetaSchedule::Kind::constant, 0.3}.beta(10)), 0.3);
}

TEST(PredictMc, DeterministicIgnoresSampleCount) {
  const DatasetSplit s = separable_two_class(40);
  const Model m(config_for(s.train, StochasticMode::deterministic, InferenceMethod::bbb, small_layers(2)));
  Rng a(1), b(2);
  EXPECT_EQ(predict_mc(m, s.test.images, 1, a).mean_probs, predict_mc(m, s.test.images, 100, b).mean_probs);
}

TEST(PredictMc, TinySigmaEqualsMeanForward) {
  const DatasetSplit s = separable_two_class(40);
  ModelConfig c = config_for(s.train, StochasticMode::fully_stochastic, InferenceMethod::flipout, small_layers(2));
  c.initial_sigma = 1e-12;
  const Model m(c);
  Rng rng(3);
  const Tensor p = predict_mc(m, s.test.images, 5, rng).mean_probs;
  EXPECT_LT(max_abs_diff(p, softmax(m.logits(s.test.images, Sampling::mean, nullptr))), 1e-9);
}

TEST(PredictMc, ProbabilitiesAreDistributions) {
  const DatasetSplit s = separable_two_class(40);
  for (auto mode : {StochasticMode::deterministic, StochasticMode::classifier_stochastic,
                    StochasticMode::fully_stochastic})
    for (std::size_t n : {1u, 3u, 10u}) {
      ModelConfig c = config_for(s.train, mode, InferenceMethod::bbb, small_layers(2));
      c.initial_sigma = 0.3;
      const Model m(c);
      Rng rng(n);
      const Prediction p = predict_mc(m, s.test.images, n, rng);
      for (std::size_t i = 0; i < s.test.size(); ++i) {
        const double a = p.mean_probs[i * 2], b = p.mean_probs[i * 2 + 1];
        EXPECT_GE(a, 0.0);
        EXPECT_GE(b, 0.0);
        EXPECT_NEAR(a + b, 1.0, 1e-9);
      }
    }
}

TEST(PredictMc, StandardErrorShrinksAsRootN) {
  // Spread of the MC mean across repeated calls scales like 1/sqrt(n).
  const DatasetSplit s = separable_two_class(40);
  ModelConfig c = config_for(s.train, StochasticMode::fully_stochastic, InferenceMethod::bbb, small_layers(2));
  c.initial_sigma = 0.5;
  const Model m(c);
  const Tensor x = s.test.images.slice(0, 1);
  auto spread = [&](std::size_t n) {
    Rng rng(n * 7 + 1);
    const int reps = 200;
    double sum = 0.0, sumsq = 0.0;
    for (int r = 0; r < reps; ++r) {
      const double v = predict_mc(m, x, n, rng).mean_probs[0];
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / reps;
    return std::sqrt((sumsq - reps * mean * mean) / (reps - 1));
  };
  const double ratio = spread(4) / spread(64);
  EXPECT_NEAR(ratio, 4.0, 1.2);
}

TEST(PredictiveStats, EntropyEndpoints) {
  const std::vector<double> uniform(5, 0.2), onehot{0, 0, 1, 0};
  EXPECT_NEAR(entropy(uniform), std::log(5.0), 1e-12);
  EXPECT_EQ(entropy(onehot), 0.0);
}

TEST(PredictiveStats, NeedsTwoSamples) {
  const DatasetSplit s = separable_two_class(40);
  const Model m(config_for(s.train, StochasticMode::classifier_stochastic, InferenceMethod::bbb, small_layers(2)));
  Rng rng(1);
  EXPECT_THROW(predictive_stats(m, s.test.images, 1, rng), std::invalid_argument);
  const PredictiveStats st = predictive_stats(m, s.test.images, 4, rng);
  for (double e : st.entropy) EXPECT_TRUE(std::isfinite(e));
  EXPECT_TRUE(st.per_class_std.all_finite());
}

TEST(PredictiveStats, TransferAdversarialsRaiseBnnEntropy) {
  ToyDataParams p;
  p.samples = 600;
  const DatasetSplit s = split_dataset(generate_toy_dataset(p), 0.25, 2);
  TrainConfig tc;
  tc.epochs = 10;
  Model cnn(config_for(s.train, StochasticMode::deterministic, InferenceMethod::bbb, vgg_style_layers(4), 1));
  Model bnn(config_for(s.train, StochasticMode::classifier_stochastic, InferenceMethod::flipout, vgg_style_layers(4), 2));
  Rng r1(1), r2(2);
  train(cnn, s.train, tc, r1);
  train(bnn, s.train, tc, r2);
  const ModelOracle oracle(cnn);
  Rng ar(3);
  const auto adv = pgd(oracle, s.test.images, s.test.labels, ThreatModel{Norm::linf, 0.1}, 10, 0.025, ar);
  auto mean_entropy = [&](const Tensor& x) {
    Rng rng(4);
    const PredictiveStats st = predictive_stats(bnn, x, 10, rng);
    double t = 0.0;
    for (double v : st.entropy) t += v;
    return t / static_cast<double>(st.entropy.size());
  };
  EXPECT_GT(mean_entropy(stack_adversarials(adv)), mean_entropy(s.test.images));
}

TEST(Argmax, TiesGoToLowestIndex) {
  const std::vector<double> v{0.3, 0.7, 0.7};
  EXPECT_EQ(argmax(v), 1);
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5}), 0);
}

TEST(Checkpoint, RoundTripPreservesLogits) {
  const DatasetSplit s = separable_two_class(40);
  for (auto mode : {StochasticMode::deterministic, StochasticMode::fully_stochastic}) {
    const Model m(config_for(s.train, mode, InferenceMethod::flipout, small_layers(2), 21));
    const fs::path path = temp_path("ckpt.bin");
    save_model(path, m);
    const Model back = load_model(path);
    EXPECT_EQ(back.config().mode, mode);
    EXPECT_EQ(back.logits(s.test.images, Sampling::mean, nullptr), m.logits(s.test.images, Sampling::mean, nullptr));
    fs::remove(path);
  }
}

TEST(Checkpoint, VersionMismatchIsError) {
  const DatasetSplit s = separable_two_class(40);
  const Model m(config_for(s.train, StochasticMode::deterministic, InferenceMethod::bbb, small_layers(2)));
  const fs::path path = temp_path("ckpt_v.bin");
  save_model(path, m);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char v2[4] = {2, 0, 0, 0};
    f.write(v2, 4);
  }
  EXPECT_THROW(load_model(path), ArchiveError);
  fs::remove(path);
}

TEST(Archive, ByteLayoutMatchesHandEncoding) {
  Archive a;
  a.kind = ArchiveKind::tensor_batch;
  a.metadata = "{}";
  a.entries.push_back({"t", Tensor({2}, {1.5, -2.0})});
  std::vector<std::uint8_t> expected;
  auto put = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    expected.insert(expected.end(), b, b + n);
  };
  auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) expected.push_back((v >> (8 * i)) & 0xff); };
  auto u64 = [&](std::uint64_t v) { for (int i = 0; i < 8; ++i) expected.push_back((v >> (8 * i)) & 0xff); };
  put("BNNRARCH", 8);
  u32(1);
  u32(2);
  u64(2);
  put("{}", 2);
  u64(1);
  u32(1);
  put("t", 1);
  u32(1);
  u64(2);
  for (double d : {1.5, -2.0}) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    u64(bits);
  }
  EXPECT_EQ(encode_archive(a), expected);
  const Archive back = decode_archive(expected);
  EXPECT_EQ(back.at("t"), a.entries[0].tensor);
  expected.push_back(0);
  EXPECT_THROW(decode_archive(expected), ArchiveError);
}

TEST(ModelConfigJson, RoundTrip) {
  ModelConfig c;
  c.classes = 3;
  c.mode = StochasticMode::classifier_stochastic;
  c.method = InferenceMethod::lrt;
  c.layers = vgg_style_layers(3);
  c.seed = 77;
  c.prior = PriorSpec{0.1, 0.5};
  const ModelConfig back = model_config_from_json(model_config_to_json(c));
  EXPECT_EQ(back.layers, c.layers);
  EXPECT_EQ(back.mode, c.mode);
  EXPECT_EQ(back.method, c.method);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.prior.std, 0.5);
}
