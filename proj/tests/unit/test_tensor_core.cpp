#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bnnr/gradcheck.hpp"
#include "bnnr/model.hpp"
#include "bnnr/ops.hpp"
#include "bnnr/rng.hpp"
#include "bnnr/tape.hpp"
#include "bnnr/toy_data.hpp"

using namespace bnnr;

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return rand_uniform(s, lo, hi, rng);
}

// Keeps relu/maxpool inputs away from kinks so central differences stay valid.
Tensor away_from_zero(Tensor t, double gap = 0.05) {
  for (double& v : t.data())
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  return t;
}

}  // namespace

TEST(Tensor, ShapeAndSizeAgree) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(shape_size(t.shape()), t.size());
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Tensor, SliceAndStack) {
  Tensor t({3, 2}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.slice(1).values(), (std::vector<double>{3, 4}));
  EXPECT_EQ(t.slice(1, 3).shape(), (Shape{2, 2}));
  std::vector<Tensor> rows{t.slice(0), t.slice(1), t.slice(2)};
  EXPECT_EQ(stack(rows), t);
}

TEST(Ops, MatmulIdentity) {
  Tape tape;
  Var a = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  Var i = tape.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  EXPECT_EQ(matmul(a, i).value(), Tensor::from_rows({{1, 2}, {3, 4}}));
}

TEST(Ops, MatmulShapeMismatchNamesOp) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 2}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
}

TEST(Ops, ReluDefinition) {
  Tape tape;
  EXPECT_EQ(relu(tape.constant(Tensor::vector({-1, 0, 2}))).value().values(), (std::vector<double>{0, 0, 2}));
}

TEST(Ops, Conv2dMatchesSlidingWindowSum) {
  Rng rng(3);
  const Tensor x = random_tensor({1, 1, 4, 4}, rng);
  Tape tape;
  Var y = conv2d(tape.constant(x), tape.constant(Tensor({1, 1, 3, 3}, 1.0)), {1, 0});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) s += x[(r + i) * 4 + (c + j)];
      EXPECT_NEAR(y.value()[r * 2 + c], s, 1e-12);
    }
}

TEST(Ops, Conv2dPaddedStridedAgainstDirectLoop) {
  Rng rng(5);
  const Tensor x = random_tensor({2, 3, 5, 5}, rng);
  const Tensor w = random_tensor({4, 3, 3, 3}, rng);
  Tape tape;
  const Tensor y = conv2d(tape.constant(x), tape.constant(w), {2, 1}).value();
  ASSERT_EQ(y.shape(), (Shape{2, 4, 3, 3}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 4; ++o)
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) {
          double s = 0.0;
          for (std::size_t ci = 0; ci < 3; ++ci)
            for (std::size_t i = 0; i < 3; ++i)
              for (std::size_t j = 0; j < 3; ++j) {
                const long rr = static_cast<long>(r * 2 + i) - 1, cc = static_cast<long>(c * 2 + j) - 1;
                if (rr < 0 || cc < 0 || rr >= 5 || cc >= 5) continue;
                s += x[((n * 3 + ci) * 5 + rr) * 5 + cc] * w[((o * 3 + ci) * 3 + i) * 3 + j];
              }
          EXPECT_NEAR(y[((n * 4 + o) * 3 + r) * 3 + c], s, 1e-12);
        }
}

TEST(Ops, SoftmaxCrossEntropyInvalidLabel) {
  Tape tape;
  Var z = tape.constant(Tensor({2, 3}));
  const std::vector<int> bad{0, 3};
  EXPECT_THROW(softmax_cross_entropy(z, bad), std::out_of_range);
}

TEST(Ops, SoftmaxCrossEntropyNonNegativeAndProbabilitiesNormalized) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = random_tensor({4, 5}, rng, -50.0, 50.0);
    const std::vector<int> y{0, 1, 2, 4};
    Tape tape;
    EXPECT_GE(softmax_cross_entropy(tape.constant(z), y).value().item(), 0.0);
    const Tensor p = softmax(z);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += p[i * 5 + k];
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Ops, SoftmaxCrossEntropyStableOnHugeLogits) {
  Tape tape;
  Var z = tape.constant(Tensor::from_rows({{1000.0, 0.0}}));
  const std::vector<int> y{1};
  EXPECT_NEAR(softmax_cross_entropy(z, y).value().item(), 1000.0, 1e-9);
}

TEST(Backward, BilinearForm) {
  Tape tape;
  const Tensor yv = Tensor::vector({3, -1, 2});
  Var x = tape.leaf(Tensor::vector({1, 2, 3}));
  Var y = tape.constant(yv);
  tape.backward(sum(mul(x, y)));
  EXPECT_EQ(tape.grad(x), yv);
}

TEST(Backward, ReluSubgradient) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({-1, 2}));
  tape.backward(sum(relu(x)));
  EXPECT_EQ(tape.grad(x).values(), (std::vector<double>{0, 1}));
}

TEST(Backward, ReluSubgradientAtZeroIsZero) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({0.0}));
  tape.backward(sum(relu(x)));
  EXPECT_EQ(tape.grad(x)[0], 0.0);
}

TEST(Backward, SecondBackwardIsError) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1.0}));
  Var l = sum(square(x));
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), TapeError);
}

TEST(Backward, NonScalarLossIsError) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(tape.backward(square(x)), TapeError);
}

TEST(Backward, DetachedLeafHasNoGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1.0}));
  Var unused = tape.leaf(Tensor::vector({2.0}));
  Var c = tape.constant(Tensor::vector({3.0}));
  tape.backward(sum(mul(x, c)));
  EXPECT_FALSE(tape.has_grad(unused));
  EXPECT_THROW(tape.grad(unused), TapeError);
  EXPECT_THROW(tape.grad(c), TapeError);
}

TEST(Backward, ConvReluSumMatchesFiniteDifferences) {
  Rng rng(21);
  const Tensor w = random_tensor({2, 1, 3, 3}, rng);
  auto f = [&](Tape& t, Var x) { return sum(relu(conv2d(x, t.constant(w)))); };
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_tensor({1, 1, 3, 3}, rng);
    EXPECT_LT(finite_difference_check(f, x), 1e-4);
  }
}

TEST(GradCheck, SquaredNorm) {
  auto f = [](Tape&, Var x) { return sum(square(x)); };
  const GradCheckResult r = gradient_check(f, Tensor::vector({1, 2}));
  EXPECT_NEAR(r.analytic[0], 2.0, 1e-12);
  EXPECT_NEAR(r.analytic[1], 4.0, 1e-12);
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(GradCheck, ConstantFunction) {
  auto f = [](Tape& t, Var x) { return add(sum(scale(x, 0.0)), t.constant(Tensor::scalar(5.0))); };
  const GradCheckResult r = gradient_check(f, Tensor::vector({1, 2, 3}));
  for (double v : r.analytic.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.max_relative_error, 0.0);
}

TEST(GradCheck, NonScalarFunctionIsError) {
  auto f = [](Tape&, Var x) { return square(x); };
  EXPECT_THROW(finite_difference_check(f, Tensor::vector({1, 2})), TapeError);
}

TEST(GradCheck, FullModelLossOnToyBatch) {
  ToyDataParams tp;
  tp.classes = 3;
  tp.samples = 6;
  tp.image_size = 8;
  const Dataset data = generate_toy_dataset(tp);
  ModelConfig cfg;
  cfg.classes = 3;
  cfg.layers = {LayerSpec::conv(2), LayerSpec::pool(), LayerSpec::dense(5), LayerSpec::dense(3)};
  cfg.seed = 4;
  const Model model(cfg);
  auto f = [&](Tape& t, Var x) {
    const Model::Bound b = model.bind(t, false);
    return softmax_cross_entropy(model.forward(t, b, x, Sampling::mean, nullptr), data.labels);
  };
  EXPECT_LT(finite_difference_check(f, data.images), 1e-4);
}

// Every differentiable op at random points.
struct OpCase {
  const char* name;
  Shape shape;
  std::function<Var(Tape&, Var, Rng&)> build;
};

TEST(GradCheck, EveryOpAtRandomPoints) {
  Rng rng(99);
  const Tensor w_dense = random_tensor({4, 3}, rng);
  const Tensor w_conv = random_tensor({2, 2, 3, 3}, rng);
  const Tensor other = random_tensor({2, 4}, rng);
  const Tensor bias = random_tensor({2}, rng);
  const std::vector<int> labels{1, 2};
  const std::vector<OpCase> cases{
      {"matmul", {2, 4}, [&](Tape& t, Var x, Rng&) { return sum(matmul(x, t.constant(w_dense))); }},
      {"conv2d", {1, 2, 4, 4}, [&](Tape& t, Var x, Rng&) { return sum(conv2d(x, t.constant(w_conv), {1, 1})); }},
      {"maxpool2d", {1, 1, 4, 4}, [&](Tape&, Var x, Rng&) { return sum(square(maxpool2d(x))); }},
      {"relu", {2, 4}, [&](Tape&, Var x, Rng&) { return sum(square(relu(x))); }},
      {"add", {2, 4}, [&](Tape& t, Var x, Rng&) { return sum(square(add(x, t.constant(other)))); }},
      {"sub", {2, 4}, [&](Tape& t, Var x, Rng&) { return sum(square(sub(t.constant(other), x))); }},
      {"mul", {2, 4}, [&](Tape& t, Var x, Rng&) { return sum(mul(x, mul(x, t.constant(other)))); }},
      {"add_bias", {3, 2}, [&](Tape& t, Var x, Rng&) { return sum(square(add_bias(x, t.constant(bias)))); }},
      {"scale", {2, 4}, [&](Tape&, Var x, Rng&) { return sum(square(scale(x, -1.7))); }},
      {"flatten", {2, 2, 2}, [&](Tape& t, Var x, Rng&) { return sum(matmul(flatten(x), t.constant(w_dense))); }},
      {"sqrt", {2, 4}, [&](Tape&, Var x, Rng&) { return sum(sqrt(square(x))); }},
      {"softplus", {2, 4}, [&](Tape&, Var x, Rng&) { return sum(softplus(x)); }},
      {"softmax_cross_entropy", {2, 3},
       [&](Tape&, Var x, Rng&) { return softmax_cross_entropy(x, labels); }},
  };
  for (const OpCase& c : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      Tensor x = away_from_zero(random_tensor(c.shape, rng));
      auto f = [&](Tape& t, Var v) { return c.build(t, v, rng); };
      worst = std::max(worst, finite_difference_check(f, x));
    }
    EXPECT_LT(worst, 1e-4) << c.name;
  }
}

TEST(Determinism, ForwardIsBitIdentical) {
  ModelConfig cfg;
  cfg.classes = 3;
  cfg.layers = vgg_style_layers(3);
  cfg.seed = 17;
  const Model model(cfg);
  Rng rng(1);
  const Tensor x = rand_uniform({4, 3, 8, 8}, 0.0, 1.0, rng);
  EXPECT_EQ(model.logits(x, Sampling::mean, nullptr), model.logits(x, Sampling::mean, nullptr));
}
