#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bnnr/tensor.hpp"

namespace bnnr {

// Images [N, C, H, W] with pixel values in [0, 1] and integer labels.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape image_shape() const;
  Tensor image(std::size_t i) const { return images.slice(i); }
  Dataset subset(const std::vector<std::size_t>& indices) const;
  Dataset head(std::size_t count) const;

  // Throws when shapes, labels, or the pixel domain are inconsistent.
  void validate() const;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

// Deterministic shuffle-then-split; the test part holds round(n * test_fraction) samples (at least one).
DatasetSplit split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed);

}  // namespace bnnr
