#include "bnnr/perturbations.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace bnnr {
namespace {

constexpr std::array<std::pair<PerturbationKind, std::string_view>, 6> kNames{{
    {PerturbationKind::gaussian, "gaussian"},
    {PerturbationKind::salt_pepper, "salt_pepper"},
    {PerturbationKind::poisson, "poisson"},
    {PerturbationKind::speckle, "speckle"},
    {PerturbationKind::random_erase, "random_erase"},
    {PerturbationKind::random_erase_colorful, "random_erase_colorful"},
}};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

struct Rect {
  std::size_t top, left, height, width;
};

// Integer rectangle with area fraction and aspect ratio inside the spec's
// ranges. Falls back to the smallest admissible rectangle when sampling keeps
// missing (tiny images quantize the ranges coarsely).
Rect sample_rectangle(const PerturbationSpec& spec, std::size_t h, std::size_t w, Rng& rng) {
  const double total = static_cast<double>(h * w);
  auto admissible = [&](std::size_t rh, std::size_t rw) {
    if (rh == 0 || rw == 0 || rh > h || rw > w) return false;
    const double area = static_cast<double>(rh * rw) / total;
    const double aspect = static_cast<double>(rh) / static_cast<double>(rw);
    return area >= spec.area_min && area <= spec.area_max && aspect >= spec.aspect_min && aspect <= spec.aspect_max;
  };
  std::uniform_real_distribution<double> area_dist(spec.area_min, spec.area_max);
  std::uniform_real_distribution<double> log_aspect(std::log(spec.aspect_min), std::log(spec.aspect_max));
  std::size_t rh = 0, rw = 0;
  bool found = false;
  for (int attempt = 0; attempt < 100 && !found; ++attempt) {
    const double area = area_dist(rng) * total;
    const double aspect = std::exp(log_aspect(rng));
    rh = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
    rw = static_cast<std::size_t>(std::lround(std::sqrt(area / aspect)));
    found = admissible(rh, rw);
  }
  if (!found) {
    std::size_t best_area = 0;
    for (std::size_t a = 1; a <= h; ++a) {
      for (std::size_t b = 1; b <= w; ++b) {
        if (admissible(a, b) && (best_area == 0 || a * b < best_area)) {
          best_area = a * b;
          rh = a;
          rw = b;
        }
      }
    }
    if (best_area == 0) {
      throw std::invalid_argument("no rectangle on a " + std::to_string(h) + "x" + std::to_string(w) +
                                  " image satisfies the erase area/aspect ranges");
    }
  }
  std::uniform_int_distribution<std::size_t> top(0, h - rh), left(0, w - rw);
  const std::size_t t = top(rng);
  return {t, left(rng), rh, rw};
}

void perturb_image(const PerturbationSpec& spec, std::span<double> img, std::size_t c, std::size_t h, std::size_t w,
                   Rng& rng) {
  const std::size_t plane = h * w;
  switch (spec.kind) {
    case PerturbationKind::gaussian: {
      if (spec.sigma == 0.0) return;
      std::normal_distribution<double> noise(0.0, spec.sigma);
      for (double& v : img) v = clamp01(v + noise(rng));
      return;
    }
    case PerturbationKind::speckle: {
      if (spec.sigma == 0.0) return;
      std::normal_distribution<double> noise(0.0, spec.sigma);
      for (double& v : img) v = clamp01(v * (1.0 + noise(rng)));
      return;
    }
    case PerturbationKind::poisson: {
      for (double& v : img) {
        const double lambda = v * spec.scale;
        if (lambda <= 0.0) {
          v = 0.0;
          continue;
        }
        std::poisson_distribution<long long> shot(lambda);
        v = clamp01(static_cast<double>(shot(rng)) / spec.scale);
      }
      return;
    }
    case PerturbationKind::salt_pepper: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t p = 0; p < plane; ++p) {
        const double r = u(rng);
        if (r >= spec.density) continue;
        const double value = r < spec.density / 2.0 ? 0.0 : 1.0;
        for (std::size_t ch = 0; ch < c; ++ch) img[ch * plane + p] = value;
      }
      return;
    }
    case PerturbationKind::random_erase:
    case PerturbationKind::random_erase_colorful: {
      const Rect r = sample_rectangle(spec, h, w, rng);
      std::vector<double> colour(c, 0.0);
      if (spec.kind == PerturbationKind::random_erase_colorful) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (double& v : colour) v = u(rng);
      }
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = r.top; y < r.top + r.height; ++y) {
          for (std::size_t x = r.left; x < r.left + r.width; ++x) img[ch * plane + y * w + x] = colour[ch];
        }
      }
      return;
    }
  }
}

}  // namespace

std::string to_string(PerturbationKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return std::string(name);
  }
  throw std::invalid_argument("unknown perturbation kind");
}

PerturbationKind parse_perturbation_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  std::replace(lower.begin(), lower.end(), '-', '_');
  for (const auto& [k, n] : kNames) {
    if (n == lower) return k;
  }
  throw std::invalid_argument("unknown perturbation '" + std::string(name) + "'");
}

PerturbationSpec PerturbationSpec::defaults(PerturbationKind kind) {
  PerturbationSpec spec;
  spec.kind = kind;
  spec.sigma = kind == PerturbationKind::speckle ? 0.5 : 0.05;
  return spec;
}

void PerturbationSpec::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("perturbation sigma must be >= 0");
  if (!(density >= 0.0 && density <= 1.0)) throw std::invalid_argument("salt-and-pepper density must be in [0, 1]");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("poisson scale must be > 0");
  if (!(area_min > 0.0 && area_min <= area_max && area_max < 1.0)) {
    throw std::invalid_argument("erase area fractions must satisfy 0 < min <= max < 1");
  }
  if (!(aspect_min > 0.0 && aspect_min <= aspect_max) || !std::isfinite(aspect_max)) {
    throw std::invalid_argument("erase aspect ratios must satisfy 0 < min <= max");
  }
}

Tensor apply_perturbation(const PerturbationSpec& spec, const Tensor& x, Rng& rng) {
  spec.validate();
  if (x.rank() != 3 && x.rank() != 4) {
    throw ShapeError("perturbations expect [C, H, W] or [N, C, H, W], got " + shape_string(x.shape()));
  }
  for (double v : x.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("perturbation input must lie in [0, 1]");
  }
  const std::size_t off = x.rank() == 4 ? 1 : 0;
  const std::size_t n = off ? x.dim(0) : 1;
  const std::size_t c = x.dim(off), h = x.dim(off + 1), w = x.dim(off + 2);
  Tensor out = x;
  auto data = out.data();
  for (std::size_t i = 0; i < n; ++i) perturb_image(spec, data.subspan(i * c * h * w, c * h * w), c, h, w, rng);
  return out;
}

Tensor apply_perturbation(const PerturbationSpec& spec, const Tensor& x) {
  Rng rng(spec.seed);
  return apply_perturbation(spec, x, rng);
}

}  // namespace bnnr
