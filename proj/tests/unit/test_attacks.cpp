#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "bnnr/attacks.hpp"
#include "bnnr/experiment.hpp"
#include "bnnr/inference.hpp"
#include "bnnr/toy_data.hpp"
#include "bnnr/training.hpp"
#include "linear_oracle.hpp"

using namespace bnnr;
using namespace bnnr::testing;
namespace fs = std::filesystem;

namespace {

const ThreatModel kEps10{Norm::linf, 0.1};

Tensor scalar_batch(double v) { return Tensor({1, 1}, {v}); }

const std::vector<int> kLabel0{0};

// A 2-pixel, 2-class linear softmax model and a handful of interior points.
LinearSoftmaxOracle two_pixel_model() { return LinearSoftmaxOracle({1.5, -0.7, -0.4, 1.1}, {0.1, -0.2}); }

Tensor two_pixel_points() {
  return Tensor({4, 2}, {0.3, 0.6, 0.5, 0.5, 0.8, 0.2, 0.05, 0.97});
}

double l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// A small CNN trained once on the toy set and shared by the slower tests.
struct ToyFixture {
  DatasetSplit split;
  Model model;

  static const ToyFixture& get() {
    static const ToyFixture f = [] {
      ToyDataParams p;
      p.samples = 400;
      p.seed = 5;
      DatasetSplit s = split_dataset(generate_toy_dataset(p), 0.2, 1);
      ModelConfig c;
      c.classes = 4;
      c.layers = {LayerSpec::conv(8), LayerSpec::pool(), LayerSpec::dense(32), LayerSpec::dense(4)};
      c.seed = 2;
      Model m(c);
      TrainConfig tc;
      tc.epochs = 8;
      Rng rng(3);
      train(m, s.train, tc, rng);
      return ToyFixture{std::move(s), std::move(m)};
    }();
    return f;
  }
};

void expect_within_budget(const std::vector<AttackResult>& results, const Tensor& x, double eps, const char* name) {
  const std::size_t per = x.size() / x.dim(0);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto adv = results[i].x_adv.data();
    const auto orig = x.data().subspan(i * per, per);
    for (std::size_t j = 0; j < per; ++j) {
      ASSERT_LE(std::abs(adv[j] - orig[j]), eps + 1e-9) << name << " sample " << i;
      ASSERT_GE(adv[j], 0.0) << name;
      ASSERT_LE(adv[j], 1.0) << name;
    }
    EXPECT_LE(results[i].linf_distance, eps + 1e-9) << name;
  }
}

}  // namespace

TEST(Projection, ClipsToBallThenPixelRange) {
  const Tensor origin({1, 3}, {0.5, 0.05, 0.97});
  const Tensor cand({1, 3}, {0.9, -0.2, 1.2});
  const Tensor p = project_linf(cand, origin, kEps10);
  EXPECT_NEAR(p[0], 0.6, 1e-15);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_EQ(p[2], 1.0);
}

TEST(Projection, SignOfZeroIsZero) {
  EXPECT_EQ(sign(0.0), 0.0);
  EXPECT_EQ(sign(-3.0), -1.0);
  EXPECT_EQ(sign(1e-300), 1.0);
}

TEST(ThreatModelTest, NegativeEpsilonRejected) {
  EXPECT_THROW((ThreatModel{Norm::linf, -0.1}.validate()), std::invalid_argument);
}

TEST(Fgsm, ZeroEpsilonReturnsInput) {
  const auto m = two_pixel_model();
  const Tensor x = two_pixel_points();
  const std::vector<int> y{0, 1, 0, 1};
  EXPECT_EQ(stack_adversarials(fgsm(m, x, y, ThreatModel{Norm::linf, 0.0})), x);
}

TEST(Fgsm, SignRule) {
  const ConstantGradientOracle down({-0.3});
  EXPECT_NEAR(fgsm(down, scalar_batch(0.5), kLabel0, kEps10)[0].x_adv[0], 0.4, 1e-15);
  const ConstantGradientOracle up({1.0});
  EXPECT_EQ(fgsm(up, scalar_batch(0.95), kLabel0, kEps10)[0].x_adv[0], 1.0);
}

TEST(Fgsm, OneGradientEvaluation) {
  const auto m = two_pixel_model();
  const std::vector<int> y{0, 1, 0, 1};
  const auto r = fgsm(m, two_pixel_points(), y, kEps10);
  EXPECT_EQ(m.gradient_calls, 1u);
  EXPECT_EQ(r[0].queries, 1u);
}

TEST(Bim, OneStepOfSizeEpsilonIsFgsm) {
  const auto m = two_pixel_model();
  const Tensor x = two_pixel_points();
  const std::vector<int> y{0, 1, 0, 1};
  EXPECT_EQ(stack_adversarials(bim(m, x, y, kEps10, 1, 0.1)), stack_adversarials(fgsm(m, x, y, kEps10)));
}

TEST(Bim, ProjectionPinsAfterTwoFreeSteps) {
  const ConstantGradientOracle up({1.0});
  EXPECT_NEAR(bim(up, scalar_batch(0.5), kLabel0, kEps10, 5, 0.04)[0].x_adv[0], 0.6, 1e-12);
}

TEST(Bim, StaysInBudgetOnRandomToyInputs) {
  ToyDataParams p;
  p.samples = 100;
  const Dataset d = generate_toy_dataset(p);
  const auto& f = ToyFixture::get();
  const ModelOracle oracle(f.model);
  expect_within_budget(bim(oracle, d.images, d.labels, kEps10, 10, 0.025), d.images, 0.1, "bim");
}

TEST(Pgd, ZeroEpsilonReturnsInput) {
  const auto m = two_pixel_model();
  const Tensor x = two_pixel_points();
  const std::vector<int> y{0, 1, 0, 1};
  Rng rng(1);
  EXPECT_EQ(stack_adversarials(pgd(m, x, y, ThreatModel{Norm::linf, 0.0}, 7, 0.01, rng)), x);
}

TEST(Pgd, RandomStartStaysInBudget) {
  // A zero gradient never moves, so the result is the random start itself.
  const ConstantGradientOracle flat({0.0, 0.0, 0.0});
  Rng data(2);
  const Tensor x = rand_uniform({200, 3}, 0.0, 1.0, data);
  const std::vector<int> y(200, 0);
  Rng rng(3);
  const auto r = pgd(flat, x, y, kEps10, 1, 0.025, rng);
  expect_within_budget(r, x, 0.1, "pgd init");
  EXPECT_NE(stack_adversarials(r), x);
}

TEST(Pgd, LinearModelReachesBestCorner) {
  const auto m = two_pixel_model();
  const Tensor x = two_pixel_points();
  for (int y : {0, 1}) {
    const std::vector<int> labels(4, y);
    Rng rng(4);
    const auto r = pgd(m, x, labels, kEps10, 20, 0.025, rng);
    for (std::size_t i = 0; i < 4; ++i) {
      const double best = best_corner_loss(m, x.slice(i).data(), y, 0.1);
      EXPECT_GE(m.loss(r[i].x_adv.data(), y), 0.99 * best) << "sample " << i << " label " << y;
    }
  }
}

TEST(Mim, ZeroDecayIsBimWithStepEpsOverSteps) {
  const auto m = two_pixel_model();
  const Tensor x = two_pixel_points();
  const std::vector<int> y{0, 1, 0, 1};
  EXPECT_EQ(stack_adversarials(mim_transfer(m, x, y, kEps10, 10, 0.0)),
            stack_adversarials(bim(m, x, y, kEps10, 10, 0.01)));
}

TEST(Mim, CancelledMomentumDoesNotMove) {
  // g1 = +1 moves by eps/2; g2 = -1 brings the momentum to exactly 0, so step 2 stays put.
  const AlternatingGradientOracle alt(1.0);
  EXPECT_NEAR(mim_transfer(alt, scalar_batch(0.5), kLabel0, kEps10, 2, 1.0)[0].x_adv[0], 0.55, 1e-15);
}

TEST(Mim, StaysInBudget) {
  const auto& f = ToyFixture::get();
  const ModelOracle oracle(f.model);
  expect_within_budget(mim_transfer(oracle, f.split.test.images, f.split.test.labels, kEps10, 10, 1.0),
                       f.split.test.images, 0.1, "mim");
}

TEST(Spsa, EstimateAlignsWithAnalyticGradient) {
  const Tensor x = Tensor::vector({0.3, -0.7, 0.5, 0.9});
  const BatchObjective sq = [](const Tensor& probes) {
    const std::size_t m = probes.dim(0), d = probes.size() / m;
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j) out[i] += probes[i * d + j] * probes[i * d + j];
    return out;
  };
  Rng rng(6);
  const Tensor g = spsa_gradient(sq, x, 10000, 0.01, rng);
  double dot = 0.0, ng = 0.0, nt = 0.0;
  for (std::size_t j = 0; j < 4; ++j) {
    const double t = 2.0 * x[j];
    dot += g[j] * t;
    ng += g[j] * g[j];
    nt += t * t;
  }
  EXPECT_GT(dot / std::sqrt(ng * nt), 0.95);
}

TEST(Spsa, ZeroEpsilonStillCountsQueries) {
  const auto m = two_pixel_model();
  const CountingScoreOracle scores(m);
  const Tensor x = two_pixel_points();
  const std::vector<int> y{0, 1, 0, 1};
  const SpsaParams params{3, 8, 0.01, 0.01};
  Rng rng(1);
  const auto r = spsa(scores, x, y, ThreatModel{Norm::linf, 0.0}, params, rng);
  EXPECT_EQ(stack_adversarials(r), x);
  for (const auto& a : r) EXPECT_EQ(a.queries, 3u * 8u * 2u);
}

TEST(Spsa, QueryAccountingIsExact) {
  const auto m = two_pixel_model();
  const CountingScoreOracle scores(m);
  const Tensor x = two_pixel_points();
  const std::vector<int> y{0, 1, 0, 1};
  const SpsaParams params{5, 6, 0.01, 0.01};
  Rng rng(2);
  const auto r = spsa(scores, x, y, kEps10, params, rng);
  for (const auto& a : r) EXPECT_EQ(a.queries, 5u * 6u * 2u);
  // Probe queries plus one final labelling pass over the batch.
  EXPECT_EQ(scores.queries, 4u * 5u * 6u * 2u + 4u);
  expect_within_budget(r, x, 0.1, "spsa");
}

TEST(AccessLevels, ScoreAttacksRunWithoutGradients) {
  static_assert(!std::is_base_of_v<GradientOracle, CountingScoreOracle>);
  static_assert(std::is_invocable_v<decltype(&spsa), const ScoreOracle&, const Tensor&, std::span<const int>,
                                    const ThreatModel&, const SpsaParams&, Rng&>);
  static_assert(std::is_invocable_v<decltype(&square_attack), const ScoreOracle&, const Tensor&,
                                    std::span<const int>, const ThreatModel&, const SquareParams&, Rng&>);
  static_assert(!std::is_invocable_v<decltype(&fgsm), const CountingScoreOracle&, const Tensor&,
                                     std::span<const int>, const ThreatModel&>);
  static_assert(!std::is_base_of_v<GradientOracle, ScoreView>);
  SUCCEED();
}

TEST(Square, ZeroEpsilonReturnsInput) {
  const auto m = two_pixel_model();
  const Tensor x = two_pixel_points().reshaped({4, 1, 1, 2});
  const std::vector<int> y{0, 1, 0, 1};
  Rng rng(1);
  EXPECT_EQ(stack_adversarials(square_attack(m, x, y, ThreatModel{Norm::linf, 0.0}, SquareParams{}, rng)), x);
}

TEST(Square, AcceptedMarginsNeverIncrease) {
  const auto& f = ToyFixture::get();
  const ModelOracle oracle(f.model);
  const ScoreView scores(oracle);
  SquareParams params;
  params.query_budget = 200;
  params.record_trace = true;
  params.stop_on_success = false;
  Rng rng(7);
  const Tensor x = f.split.test.images.slice(0, 10);
  const std::vector<int> y(f.split.test.labels.begin(), f.split.test.labels.begin() + 10);
  const auto r = square_attack(scores, x, y, ThreatModel{Norm::linf, 0.05}, params, rng);
  for (const auto& a : r) {
    ASSERT_FALSE(a.trace.empty());
    for (std::size_t t = 1; t < a.trace.size(); ++t) EXPECT_LT(a.trace[t], a.trace[t - 1]);
    EXPECT_LE(a.queries, params.query_budget);
  }
  expect_within_budget(r, x, 0.05, "square");
}

TEST(Square, LinearModelReachesBestCorner) {
  const auto m = two_pixel_model();
  const Tensor x = two_pixel_points().reshaped({4, 1, 1, 2});
  SquareParams params;
  params.query_budget = 1000;
  params.stop_on_success = false;
  for (int y : {0, 1}) {
    const std::vector<int> labels(4, y);
    Rng rng(8);
    const auto r = square_attack(m, x, labels, kEps10, params, rng);
    for (std::size_t i = 0; i < 4; ++i) {
      const double best = best_corner_loss(m, x.slice(i).data(), y, 0.1);
      EXPECT_GE(m.loss(r[i].x_adv.data(), y), 0.95 * best) << "sample " << i << " label " << y;
      EXPECT_LE(r[i].queries, 1000u);
    }
  }
}

TEST(CarliniWagner, AlreadyMisclassifiedKeepsInput) {
  const auto m = binary_linear({1.0, 1.0}, -1.0);
  const Tensor x({1, 2}, {0.2, 0.3});  // w.x + b < 0: predicted class 0
  const std::vector<int> wrong{1};
  const auto r = cw_min_perturbation(m, x, wrong);
  EXPECT_EQ(r[0].x_adv, x.slice(0));
  EXPECT_EQ(r[0].linf_distance, 0.0);
}

TEST(CarliniWagner, LinearClassifierMinimalPerturbation) {
  const std::vector<double> w{0.8, -0.6};
  const double b = -0.05;
  const auto m = binary_linear(w, b);
  const Tensor x({3, 2}, {0.6, 0.3, 0.3, 0.5, 0.7, 0.6});
  const std::vector<int> y = m.predict(x);
  CarliniWagnerParams params;
  params.binary_search_steps = 10;
  params.inner_steps = 500;
  const auto r = cw_min_perturbation(m, x, y, params);
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor xs = x.slice(i);
    const auto xi = xs.data();
    const double closed = std::abs(w[0] * xi[0] + w[1] * xi[1] + b) / std::hypot(w[0], w[1]);
    ASSERT_TRUE(r[i].success) << i;
    EXPECT_NEAR(l2(r[i].x_adv.data(), xi), closed, 0.1 * closed) << i;
  }
}

TEST(DeepFool, AffineClassifierOneStepToBoundary) {
  const std::vector<double> w{0.8, -0.6};
  const double b = -0.05;
  const auto m = binary_linear(w, b);
  const Tensor x({3, 2}, {0.6, 0.3, 0.3, 0.5, 0.7, 0.6});
  const auto r = deepfool(m, x);
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor xs = x.slice(i);
    const auto xi = xs.data();
    const double closed = std::abs(w[0] * xi[0] + w[1] * xi[1] + b) / std::hypot(w[0], w[1]);
    EXPECT_TRUE(r[i].success);
    EXPECT_EQ(r[i].queries, 1u);
    const double d = l2(r[i].x_adv.data(), xi);
    EXPECT_GE(d, closed);
    EXPECT_LE(d, 1.02 * closed + 1e-3);
  }
}

TEST(DeepFool, PointOnBoundaryBarelyMoves) {
  const auto m = binary_linear({1.0, -1.0}, 0.0);
  const Tensor x({1, 2}, {0.4, 0.4});
  const auto r = deepfool(m, x);
  EXPECT_LT(r[0].linf_distance, 1e-3);
  EXPECT_LE(r[0].queries, 1u);
}

TEST(MinPerturbation, SuccessIffArgmaxChanged) {
  const auto& f = ToyFixture::get();
  const ModelOracle oracle(f.model);
  const Tensor x = f.split.test.images.slice(0, 20);
  const std::vector<int> y(f.split.test.labels.begin(), f.split.test.labels.begin() + 20);
  CarliniWagnerParams cw;
  cw.binary_search_steps = 3;
  cw.inner_steps = 30;
  for (const auto& results : {cw_min_perturbation(oracle, x, y, cw), deepfool(oracle, x, {}, y)}) {
    const std::vector<int> pred = oracle.predict(stack_adversarials(results));
    for (std::size_t i = 0; i < results.size(); ++i) EXPECT_EQ(results[i].success, pred[i] != y[i]) << i;
  }
}

TEST(MinPerturbation, CwDistancesBelowConstrainedAttack) {
  const auto& f = ToyFixture::get();
  const ModelOracle oracle(f.model);
  const Tensor x = f.split.test.images.slice(0, 20);
  const std::vector<int> y(f.split.test.labels.begin(), f.split.test.labels.begin() + 20);
  CarliniWagnerParams cw;
  cw.binary_search_steps = 3;
  cw.inner_steps = 30;
  Rng rng(1);
  const double cw_dist = mean_linf_distance(cw_min_perturbation(oracle, x, y, cw));
  const double pgd_dist = mean_linf_distance(pgd(oracle, x, y, kEps10, 10, 0.025, rng));
  EXPECT_LT(cw_dist, pgd_dist);
  EXPECT_LE(pgd_dist, 0.1 + 1e-9);
}

TEST(ThreatModelInvariant, EveryConstrainedAttackOnToyTestSet) {
  const auto& f = ToyFixture::get();
  const BaselineModel baseline(f.model);
  const Tensor& x = f.split.test.images;
  const auto& y = f.split.test.labels;
  AttackSettings settings;
  settings.spsa.iterations = 3;
  settings.square.query_budget = 50;
  for (AttackKind kind : {AttackKind::fgsm, AttackKind::bim, AttackKind::pgd, AttackKind::mim, AttackKind::spsa,
                          AttackKind::square}) {
    for (double eps : {0.0, 0.05, 0.15}) {
      Rng rng(static_cast<std::uint64_t>(kind) * 31 + static_cast<std::uint64_t>(eps * 100));
      const auto r = generate_adversarials(baseline, kind, eps, x, y, settings, rng);
      ASSERT_EQ(r.size(), y.size());
      expect_within_budget(r, x, eps, to_string(kind).c_str());
      if (eps == 0.0) {
        EXPECT_EQ(stack_adversarials(r), x) << to_string(kind);
      }
    }
  }
}

TEST(MeanLinf, Arithmetic) {
  std::vector<AttackResult> r(2);
  r[0].linf_distance = 0.1;
  r[1].linf_distance = 0.3;
  EXPECT_NEAR(mean_linf_distance(r), 0.2, 1e-15);
  r[0].linf_distance = r[1].linf_distance = 0.0;
  EXPECT_EQ(mean_linf_distance(r), 0.0);
  EXPECT_THROW(mean_linf_distance(std::vector<AttackResult>{}), std::invalid_argument);
}

TEST(Persistence, AdversarialBatchRoundTrip) {
  const auto m = two_pixel_model();
  const Tensor x = two_pixel_points();
  const std::vector<int> y{0, 1, 0, 1};
  Rng rng(1);
  const auto r = pgd(m, x, y, kEps10, 5, 0.025, rng);
  const fs::path path = fs::temp_directory_path() / "bnnr_adv_batch.bin";
  save_adversarial_batch(path, make_adversarial_batch("pgd", 0.1, 77, r, y));
  const AdversarialBatch back = load_adversarial_batch(path);
  EXPECT_EQ(back.attack, "pgd");
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.x_adv, stack_adversarials(r));
  EXPECT_EQ(back.labels, y);
  ASSERT_EQ(back.linf.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(back.linf[i], r[i].linf_distance);

  std::ifstream mf(path.string() + ".manifest.json");
  const auto manifest = nlohmann::json::parse(mf);
  EXPECT_EQ(manifest.at("attack"), "pgd");
  EXPECT_EQ(manifest.at("epsilon"), 0.1);
  EXPECT_EQ(manifest.at("linf_distance").size(), 4u);
  fs::remove(path);
  fs::remove(path.string() + ".manifest.json");
}

TEST(Transfer, BaselineRejectsStochasticModels) {
  ModelConfig c;
  c.classes = 2;
  c.layers = {LayerSpec::dense(2)};
  c.mode = StochasticMode::classifier_stochastic;
  const Model bnn(c);
  EXPECT_THROW(BaselineModel{bnn}, std::invalid_argument);
}
