#include "bnnr/toy_data.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

#include "bnnr/rng.hpp"

namespace bnnr {
namespace {

constexpr std::size_t kShapes = 8;

constexpr std::array<std::array<double, 3>, 8> kPalette = {{
    {1.0, 0.2, 0.2},  // red
    {0.2, 1.0, 0.2},  // green
    {0.3, 0.3, 1.0},  // blue
    {1.0, 1.0, 0.2},  // yellow
    {0.2, 1.0, 1.0},  // cyan
    {1.0, 0.2, 1.0},  // magenta
    {1.0, 0.6, 0.1},  // orange
    {1.0, 1.0, 1.0},  // white
}};

bool in_shape(std::size_t shape, std::size_t i, std::size_t j, std::size_t s) {
  const std::size_t t = std::max<std::size_t>(1, s / 4);
  const std::size_t lo = (s - t) / 2;
  const bool mid_row = i >= lo && i < lo + t;
  const bool mid_col = j >= lo && j < lo + t;
  switch (shape) {
    case 0: return true;                                     // filled square
    case 1: return mid_row;                                  // horizontal bar
    case 2: return mid_col;                                  // vertical bar
    case 3: return mid_row || mid_col;                       // plus
    case 4: return i == j;                                   // diagonal
    case 5: return i == 0 || j == 0 || i + 1 == s || j + 1 == s;  // hollow square
    case 6: return i == j || i + j + 1 == s;                 // X
    default: return i + j + 1 == s;                          // anti-diagonal
  }
}

}  // namespace

void ToyDataParams::validate() const {
  if (classes < 2) throw std::invalid_argument("toy data needs at least two classes");
  if (image_size < 8) throw std::invalid_argument("toy images must be at least 8x8");
  if (samples < classes) throw std::invalid_argument("toy data needs at least one sample per class");
  if (channels != 1 && channels != 3) throw std::invalid_argument("toy images have 1 or 3 channels");
  if (!(background_low >= 0.0 && background_low <= background_high && background_high <= 1.0)) {
    throw std::invalid_argument("background range must satisfy 0 <= low <= high <= 1");
  }
  if (background_noise < 0.0) throw std::invalid_argument("background noise must be non-negative");
}

Dataset generate_toy_dataset(const ToyDataParams& params) {
  params.validate();
  const std::size_t size = params.image_size;
  const std::size_t box = std::max<std::size_t>(3, size / 2);
  Rng rng(params.seed);
  std::uniform_real_distribution<double> background(params.background_low, params.background_high);
  std::uniform_real_distribution<double> brightness(0.75, 0.95);
  std::uniform_int_distribution<std::size_t> offset(0, size - box);
  std::normal_distribution<double> noise(0.0, params.background_noise);
  std::uniform_int_distribution<std::size_t> palette_pick(0, kPalette.size() - 1);

  Dataset data;
  data.classes = params.classes;
  data.images = Tensor({params.samples, params.channels, size, size});
  const std::size_t plane = size * size;
  const std::size_t stride = params.channels * plane;
  for (std::size_t n = 0; n < params.samples; ++n) {
    const std::size_t label = n % params.classes;
    const std::size_t shape = label % kShapes;
    const std::size_t colour_index =
        params.colour_by_class ? (label * 5 + label / kShapes) % kPalette.size() : palette_pick(rng);
    const auto& colour = kPalette[colour_index];
    const double bg = background(rng);
    const double fg = brightness(rng);
    const std::size_t oy = offset(rng), ox = offset(rng);
    double* img = data.images.data().data() + n * stride;
    for (std::size_t c = 0; c < params.channels; ++c) {
      const double tint = params.channels == 3 ? colour[c] : 1.0;
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const bool inside = y >= oy && y < oy + box && x >= ox && x < ox + box && in_shape(shape, y - oy, x - ox, box);
          const double v = (inside ? fg * tint : bg) + noise(rng);
          img[c * plane + y * size + x] = std::clamp(v, 0.0, 1.0);
        }
      }
    }
    data.labels.push_back(static_cast<int>(label));
  }
  return data;
}

}  // namespace bnnr
