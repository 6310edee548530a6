#pragma once

#include <cstdint>

#include "bnnr/dataset.hpp"

namespace bnnr {

// Class-conditional geometric patterns: each class is a (shape, colour) pair
// drawn at a jittered position over a dim noisy background.
struct ToyDataParams {
  std::size_t classes = 4;
  std::size_t image_size = 8;
  std::size_t samples = 1000;
  std::size_t channels = 3;
  double background_low = 0.02;  // background intensity range
  double background_high = 0.2;
  double background_noise = 0.03;
  bool colour_by_class = true;  // false: colour drawn per sample, shape alone carries the label
  std::uint64_t seed = 7;

  void validate() const;
};

// Sample i has label i % classes, so class balance is exact whenever
// samples is a multiple of classes.
Dataset generate_toy_dataset(const ToyDataParams& params);

}  // namespace bnnr
