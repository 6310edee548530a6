#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "bnnr/rng.hpp"
#include "bnnr/tensor.hpp"

namespace bnnr {

enum class PerturbationKind { gaussian, salt_pepper, poisson, speckle, random_erase, random_erase_colorful };

std::string to_string(PerturbationKind kind);
PerturbationKind parse_perturbation_kind(std::string_view name);

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::gaussian;
  double sigma = 0.05;        // gaussian: additive std; speckle: multiplicative std
  double density = 0.1;       // salt_pepper: fraction of pixels replaced
  double scale = 255.0;       // poisson: photon count at intensity 1
  double area_min = 0.02;     // random_erase*: fraction of the image area
  double area_max = 0.33;
  double aspect_min = 0.3;    // random_erase*: height / width
  double aspect_max = 3.3;
  std::uint64_t seed = 0;

  // Defaults for a kind; gaussian and speckle differ only in sigma.
  static PerturbationSpec defaults(PerturbationKind kind);
  void validate() const;
};

// Corrupts one image [C, H, W] or a batch [N, C, H, W]. Output stays in [0, 1].
// Salt-and-pepper and erasing act on whole pixels (all channels at once).
Tensor apply_perturbation(const PerturbationSpec& spec, const Tensor& x, Rng& rng);

// Seeds a generator from spec.seed and applies.
Tensor apply_perturbation(const PerturbationSpec& spec, const Tensor& x);

}  // namespace bnnr
