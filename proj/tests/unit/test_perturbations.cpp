#include <gtest/gtest.h>

#include <cmath>

#include "bnnr/perturbations.hpp"

using namespace bnnr;

namespace {

const std::vector<PerturbationKind> kAllKinds{PerturbationKind::gaussian,    PerturbationKind::salt_pepper,
                                               PerturbationKind::poisson,     PerturbationKind::speckle,
                                               PerturbationKind::random_erase, PerturbationKind::random_erase_colorful};

// Interior pixels only, so every modification is visible.
Tensor interior_image(const Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  return rand_uniform(s, 0.1, 0.9, rng);
}

struct Box {
  std::size_t r0 = SIZE_MAX, r1 = 0, c0 = SIZE_MAX, c1 = 0, changed = 0;
};

// Bounding box of spatial positions where any channel changed.
Box changed_box(const Tensor& before, const Tensor& after, std::size_t c, std::size_t h, std::size_t w) {
  Box b;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t col = 0; col < w; ++col) {
      bool diff = false;
      for (std::size_t ch = 0; ch < c; ++ch) diff |= before[(ch * h + r) * w + col] != after[(ch * h + r) * w + col];
      if (!diff) continue;
      ++b.changed;
      b.r0 = std::min(b.r0, r);
      b.r1 = std::max(b.r1, r);
      b.c0 = std::min(b.c0, col);
      b.c1 = std::max(b.c1, col);
    }
  return b;
}

}  // namespace

TEST(Perturbation, GaussianWithZeroSigmaIsIdentity) {
  PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::gaussian);
  spec.sigma = 0.0;
  const Tensor x = interior_image({3, 8, 8}, 1);
  Rng rng(1);
  EXPECT_EQ(apply_perturbation(spec, x, rng), x);
}

TEST(Perturbation, GaussianResidualHasConfiguredSpread) {
  const PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::gaussian);
  const Tensor x({3, 64, 64}, 0.5);
  Rng rng(2);
  const Tensor y = apply_perturbation(spec, x, rng);
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - 0.5;
    sum += d;
    sumsq += d * d;
  }
  const double n = static_cast<double>(y.size());
  EXPECT_NEAR(sum / n, 0.0, 4.0 * 0.05 / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(sumsq / n), 0.05, 0.05 * 0.05);
}

TEST(Perturbation, SaltPepperCountIsBinomial) {
  const PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::salt_pepper);
  const Tensor x = interior_image({3, 10, 10}, 3);  // 100 pixels
  Rng rng(4);
  const int trials = 10000;
  double total = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Tensor y = apply_perturbation(spec, x, rng);
    std::size_t changed = 0;
    for (std::size_t p = 0; p < 100; ++p) {
      const double a = y[p], b = y[100 + p], c = y[200 + p];
      if (a == x[p] && b == x[100 + p] && c == x[200 + p]) continue;
      ++changed;
      ASSERT_TRUE(a == 0.0 || a == 1.0);
      ASSERT_EQ(a, b);
      ASSERT_EQ(a, c);
    }
    total += static_cast<double>(changed);
  }
  const double se = std::sqrt(100 * 0.1 * 0.9 / trials);
  EXPECT_NEAR(total / trials, 10.0, 3.0 * se);
}

TEST(Perturbation, SaltAndPepperAreBalanced) {
  const PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::salt_pepper);
  const Tensor x = interior_image({1, 50, 50}, 3);
  Rng rng(5);
  std::size_t salt = 0, pepper = 0;
  for (int t = 0; t < 200; ++t) {
    const Tensor y = apply_perturbation(spec, x, rng);
    for (std::size_t i = 0; i < y.size(); ++i) {
      salt += y[i] == 1.0;
      pepper += y[i] == 0.0;
    }
  }
  EXPECT_NEAR(static_cast<double>(salt) / static_cast<double>(salt + pepper), 0.5, 0.02);
}

TEST(Perturbation, PoissonIsUnbiasedAndZeroStaysZero) {
  const PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::poisson);
  Tensor x({1, 64, 64}, 0.4);
  x[0] = 0.0;
  Rng rng(6);
  const Tensor y = apply_perturbation(spec, x, rng);
  EXPECT_EQ(y[0], 0.0);
  double sum = 0.0;
  for (std::size_t i = 1; i < y.size(); ++i) sum += y[i];
  const double n = static_cast<double>(y.size() - 1);
  // Var of Poisson(l)/s is l/s^2 = x/s.
  EXPECT_NEAR(sum / n, 0.4, 4.0 * std::sqrt(0.4 / 255.0 / n));
}

TEST(Perturbation, SpeckleIsMultiplicative) {
  const PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::speckle);
  EXPECT_EQ(spec.sigma, 0.5);
  Tensor x({1, 64, 64}, 0.2);
  x[0] = 0.0;
  Rng rng(7);
  const Tensor y = apply_perturbation(spec, x, rng);
  EXPECT_EQ(y[0], 0.0);
  double sumsq = 0.0;
  for (std::size_t i = 1; i < y.size(); ++i) sumsq += (y[i] - 0.2) * (y[i] - 0.2);
  // 0.2 * (1 + N(0, 0.25)) stays inside [0, 1] except for rare clipping below 0.
  EXPECT_NEAR(std::sqrt(sumsq / static_cast<double>(y.size() - 1)), 0.2 * 0.5, 0.01);
}

TEST(Perturbation, RandomEraseIsOneBlackRectangle) {
  const PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::random_erase);
  const std::size_t h = 32, w = 32;
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    const Tensor x = interior_image({3, h, w}, 100 + t);
    const Tensor y = apply_perturbation(spec, x, rng);
    const Box b = changed_box(x, y, 3, h, w);
    const std::size_t rh = b.r1 - b.r0 + 1, rw = b.c1 - b.c0 + 1;
    ASSERT_EQ(b.changed, rh * rw) << "changed pixels do not fill one rectangle";
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t r = b.r0; r <= b.r1; ++r)
        for (std::size_t c = b.c0; c <= b.c1; ++c) ASSERT_EQ(y[(ch * h + r) * w + c], 0.0);
    const double area = static_cast<double>(rh * rw) / static_cast<double>(h * w);
    EXPECT_GE(area, spec.area_min);
    EXPECT_LE(area, spec.area_max);
    const double aspect = static_cast<double>(rh) / static_cast<double>(rw);
    EXPECT_GE(aspect, spec.aspect_min);
    EXPECT_LE(aspect, spec.aspect_max);
  }
}

TEST(Perturbation, ColorfulEraseUsesOneColour) {
  const PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::random_erase_colorful);
  const std::size_t h = 16, w = 16;
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const Tensor x = interior_image({3, h, w}, 300 + t);
    const Tensor y = apply_perturbation(spec, x, rng);
    const Box b = changed_box(x, y, 3, h, w);
    ASSERT_GT(b.changed, 0u);
    ASSERT_EQ(b.changed, (b.r1 - b.r0 + 1) * (b.c1 - b.c0 + 1));
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double colour = y[(ch * h + b.r0) * w + b.c0];
      for (std::size_t r = b.r0; r <= b.r1; ++r)
        for (std::size_t c = b.c0; c <= b.c1; ++c) ASSERT_EQ(y[(ch * h + r) * w + c], colour);
    }
  }
}

TEST(Perturbation, RangeAndShapeInvariants) {
  for (PerturbationKind kind : kAllKinds) {
    PerturbationSpec spec = PerturbationSpec::defaults(kind);
    spec.sigma = std::max(spec.sigma, 0.3);  // force plenty of clipping
    Rng data(10);
    const Tensor x = rand_uniform({4, 3, 12, 12}, 0.0, 1.0, data);
    Rng rng(11);
    const Tensor y = apply_perturbation(spec, x, rng);
    ASSERT_EQ(y.shape(), x.shape()) << to_string(kind);
    for (double v : y.data()) {
      ASSERT_GE(v, 0.0) << to_string(kind);
      ASSERT_LE(v, 1.0) << to_string(kind);
    }
    const Tensor single = apply_perturbation(spec, x.slice(0), rng);
    EXPECT_EQ(single.shape(), (Shape{3, 12, 12}));
  }
}

TEST(Perturbation, SeedDeterminism) {
  for (PerturbationKind kind : kAllKinds) {
    PerturbationSpec spec = PerturbationSpec::defaults(kind);
    spec.seed = 1234;
    const Tensor x = interior_image({2, 3, 10, 10}, 12);
    EXPECT_EQ(apply_perturbation(spec, x), apply_perturbation(spec, x)) << to_string(kind);
    PerturbationSpec other = spec;
    other.seed = 1235;
    EXPECT_NE(apply_perturbation(spec, x), apply_perturbation(other, x)) << to_string(kind);
  }
}

TEST(Perturbation, InvalidSpecsRejected) {
  PerturbationSpec s = PerturbationSpec::defaults(PerturbationKind::salt_pepper);
  s.density = 1.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = PerturbationSpec::defaults(PerturbationKind::gaussian);
  s.sigma = -0.1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = PerturbationSpec::defaults(PerturbationKind::random_erase);
  s.area_min = 0.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.area_min = 0.5;
  s.area_max = 0.2;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Perturbation, InputOutsideUnitRangeRejected) {
  const PerturbationSpec spec = PerturbationSpec::defaults(PerturbationKind::gaussian);
  Tensor x({1, 4, 4}, 0.5);
  x[3] = 1.2;
  Rng rng(1);
  EXPECT_THROW(apply_perturbation(spec, x, rng), std::invalid_argument);
}

TEST(Perturbation, KindNamesRoundTrip) {
  for (PerturbationKind kind : kAllKinds) EXPECT_EQ(parse_perturbation_kind(to_string(kind)), kind);
  EXPECT_EQ(parse_perturbation_kind("Salt-Pepper"), PerturbationKind::salt_pepper);
  EXPECT_THROW(parse_perturbation_kind("blur"), std::invalid_argument);
}
