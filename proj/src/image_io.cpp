#include "bnnr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace bnnr {
namespace {

namespace fs = std::filesystem;

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

Tensor from_interleaved(const std::vector<std::uint8_t>& rgb, std::size_t height, std::size_t width) {
  Tensor out({3, height, width});
  auto d = out.data();
  const std::size_t plane = height * width;
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) d[c * plane + p] = rgb[p * 3 + c] / 255.0;
  }
  return out;
}

std::vector<std::uint8_t> to_interleaved(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ImageError("expected an RGB image [3, H, W], got " + shape_string(image.shape()));
  }
  const std::size_t plane = image.dim(1) * image.dim(2);
  std::vector<std::uint8_t> rgb(plane * 3);
  auto d = image.data();
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      rgb[p * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(d[c * plane + p], 0.0, 1.0) * 255.0));
    }
  }
  return rgb;
}

// Next whitespace-separated header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string token;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(ch);
  }
  return token;
}

std::size_t parse_header_number(const std::string& token, const fs::path& path) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || v == 0) {
    throw ImageError(path.string() + ": malformed PPM header field '" + token + "'");
  }
  return v;
}

Tensor read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  if (ppm_token(in) != "P6") throw ImageError(path.string() + ": only binary PPM (P6) is supported");
  const std::size_t width = parse_header_number(ppm_token(in), path);
  const std::size_t height = parse_header_number(ppm_token(in), path);
  if (parse_header_number(ppm_token(in), path) != 255) throw ImageError(path.string() + ": PPM maxval must be 255");
  std::vector<std::uint8_t> rgb(width * height * 3);
  in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(rgb.size())) throw ImageError(path.string() + ": truncated PPM");
  return from_interleaved(rgb, height, width);
}

void write_ppm(const fs::path& path, const Tensor& image) {
  const auto rgb = to_interleaved(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write " + path.string());
  out << "P6\n" << image.dim(2) << ' ' << image.dim(1) << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw ImageError("failed writing " + path.string());
}

Tensor read_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw ImageError(path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError(path.string() + ": " + msg);
  }
  return from_interleaved(rgb, img.height, img.width);
}

void write_png(const fs::path& path, const Tensor& image) {
  const auto rgb = to_interleaved(image);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(2));
  img.height = static_cast<png_uint_32>(image.dim(1));
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, rgb.data(), 0, nullptr)) {
    throw ImageError(path.string() + ": " + img.message);
  }
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

Tensor read_image(const fs::path& path) {
  if (!fs::exists(path)) throw ImageError("image not found: " + path.string());
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm") return read_ppm(path);
  throw ImageError(path.string() + ": unsupported image extension (use .png or .ppm)");
}

void write_image(const fs::path& path, const Tensor& image) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return write_png(path, image);
  if (ext == ".ppm") return write_ppm(path, image);
  throw ImageError(path.string() + ": unsupported image extension (use .png or .ppm)");
}

Dataset ingest_image_folder(const fs::path& directory, const fs::path& label_csv, std::optional<std::size_t> classes) {
  std::ifstream in(label_csv);
  if (!in) throw ImageError("cannot open label file " + label_csv.string());

  std::vector<Tensor> images;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ImageError(label_csv.string() + ":" + std::to_string(line_no) + ": expected 'filename,label'");
    }
    const std::string name = trim(line.substr(0, comma));
    const std::string label_text = trim(line.substr(comma + 1));
    if (images.empty() && labels.empty() && name == "filename" && label_text == "label") continue;
    int label = 0;
    auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (name.empty() || ec != std::errc() || ptr != label_text.data() + label_text.size()) {
      throw ImageError(label_csv.string() + ":" + std::to_string(line_no) + ": cannot parse row '" + line + "'");
    }
    if (label < 0 || (classes && static_cast<std::size_t>(label) >= *classes)) {
      throw ImageError(label_csv.string() + ":" + std::to_string(line_no) + ": label " + std::to_string(label) +
                       " out of range");
    }
    Tensor img = read_image(directory / name);
    if (!images.empty() && img.shape() != images.front().shape()) {
      throw ImageError(label_csv.string() + ":" + std::to_string(line_no) + ": image " + name + " has shape " +
                       shape_string(img.shape()) + ", expected " + shape_string(images.front().shape()));
    }
    images.push_back(std::move(img));
    labels.push_back(label);
  }
  if (labels.empty()) throw ImageError(label_csv.string() + " lists no images");

  Dataset data;
  data.images = stack(images);
  data.labels = std::move(labels);
  data.classes = classes ? *classes : static_cast<std::size_t>(*std::max_element(data.labels.begin(), data.labels.end())) + 1;
  if (data.classes < 2) throw ImageError(label_csv.string() + ": need at least two classes");
  data.validate();
  return data;
}

void write_image_folder(const fs::path& directory, const Dataset& data, const std::string& extension) {
  fs::create_directories(directory);
  std::ofstream csv(directory / "labels.csv");
  if (!csv) throw ImageError("cannot write " + (directory / "labels.csv").string());
  csv << "filename,label\n";
  const int digits = static_cast<int>(std::to_string(std::max<std::size_t>(data.size(), 1) - 1).size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::ostringstream name;
    name << "img_" << std::setw(digits) << std::setfill('0') << i << '.' << extension;
    write_image(directory / name.str(), data.image(i));
    csv << name.str() << ',' << data.labels[i] << '\n';
  }
}

}  // namespace bnnr
