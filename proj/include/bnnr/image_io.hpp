#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "bnnr/dataset.hpp"

namespace bnnr {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit RGB images, chosen by extension: .png (libpng) or .ppm (binary P6,
// maxval 255). Pixels map to [0, 1] as value / 255.
Tensor read_image(const std::filesystem::path& path);
// Writes a [3, H, W] tensor; values are clamped to [0, 1] and rounded to 8 bits.
void write_image(const std::filesystem::path& path, const Tensor& image);

// Loads `label_csv` rows "filename,label" (an optional "filename,label"
// header is skipped); filenames resolve relative to `directory`. When
// `classes` is unset it is inferred as max label + 1.
Dataset ingest_image_folder(const std::filesystem::path& directory, const std::filesystem::path& label_csv,
                            std::optional<std::size_t> classes = std::nullopt);

// Writes every image as img_<index>.<extension> plus labels.csv.
void write_image_folder(const std::filesystem::path& directory, const Dataset& data,
                        const std::string& extension = "png");

}  // namespace bnnr
