#include "bnnr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "bnnr/rng.hpp"

namespace bnnr {

Shape Dataset::image_shape() const {
  if (images.rank() != 4) throw ShapeError("dataset images must be [N,C,H,W], got " + shape_string(images.shape()));
  return {images.dim(1), images.dim(2), images.dim(3)};
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw std::invalid_argument("dataset subset must be nonempty");
  const std::size_t stride = images.size() / size();
  Shape shape = images.shape();
  shape[0] = indices.size();
  std::vector<double> data;
  data.reserve(indices.size() * stride);
  Dataset out;
  out.classes = classes;
  for (std::size_t idx : indices) {
    if (idx >= size()) throw std::out_of_range("dataset index " + std::to_string(idx) + " out of range");
    const auto begin = images.values().begin() + static_cast<std::ptrdiff_t>(idx * stride);
    data.insert(data.end(), begin, begin + static_cast<std::ptrdiff_t>(stride));
    out.labels.push_back(labels[idx]);
  }
  out.images = Tensor(std::move(shape), std::move(data));
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  std::vector<std::size_t> idx(std::min(count, size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(idx);
}

void Dataset::validate() const {
  if (labels.empty()) throw std::invalid_argument("dataset is empty");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw ShapeError("dataset images " + shape_string(images.shape()) + " do not match " +
                     std::to_string(labels.size()) + " labels");
  }
  if (classes < 2) throw std::invalid_argument("dataset needs at least two classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::out_of_range("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
  }
  for (double v : images.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("dataset pixel outside [0, 1]");
  }
}

DatasetSplit split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  if (n < 2) throw std::invalid_argument("need at least two samples to split");
  std::size_t test_count = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  test_count = std::clamp<std::size_t>(test_count, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(test_count));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(test_count), order.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  return {data.subset(train_idx), data.subset(test_idx)};
}

}  // namespace bnnr
