#include "srda/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "srda/error.hpp"

namespace srda {

namespace {

std::vector<std::uint8_t> read_png(const std::string& path, png_uint_32 format, std::int64_t& h,
                                   std::int64_t& w) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG '" + path + "': " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path + "': " + img.message);
  }
  h = img.height;
  w = img.width;
  return pixels;
}

void write_png(const std::string& path, png_uint_32 format, std::int64_t h, std::int64_t w,
               const std::vector<std::uint8_t>& pixels) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path + "': " + img.message);
  }
}

}  // namespace

Tensor read_rgb_png(const std::string& path) {
  std::int64_t h = 0, w = 0;
  const auto pixels = read_png(path, PNG_FORMAT_RGB, h, w);
  std::vector<float> values(static_cast<std::size_t>(3 * h * w));
  const std::int64_t plane = h * w;
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      values[static_cast<std::size_t>(c * plane + i)] = static_cast<float>(pixels[static_cast<std::size_t>(3 * i + c)]) / 255.0f;
    }
  }
  return Tensor::from_data(Shape{1, 3, h, w}, std::move(values));
}

void write_rgb_png(const std::string& path, const Tensor& image, std::int64_t index) {
  const Shape s = image.shape();
  if (s.c != 3) throw DimensionError("write_rgb_png: expected 3 channels on axis C, got " + std::to_string(s.c));
  if (index < 0 || index >= s.n) throw DimensionError("write_rgb_png: sample index out of range on axis N");
  const std::vector<double> v = image.to_vector();
  const std::int64_t plane = s.h * s.w;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(3 * plane));
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double x = v[static_cast<std::size_t>((index * 3 + c) * plane + i)];
      const double q = std::round(std::clamp(std::isfinite(x) ? x : 0.0, 0.0, 1.0) * 255.0);
      pixels[static_cast<std::size_t>(3 * i + c)] = static_cast<std::uint8_t>(q);
    }
  }
  write_png(path, PNG_FORMAT_RGB, s.h, s.w, pixels);
}

LabelMap read_label_png(const std::string& path) {
  LabelMap out;
  out.n = 1;
  out.values = read_png(path, PNG_FORMAT_GRAY, out.h, out.w);
  return out;
}

void write_label_png(const std::string& path, const LabelMap& labels, std::int64_t index) {
  if (index < 0 || index >= labels.n) throw DimensionError("write_label_png: sample index out of range on axis N");
  const auto plane = static_cast<std::size_t>(labels.h * labels.w);
  const auto begin = labels.values.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(index));
  write_png(path, PNG_FORMAT_GRAY, labels.h, labels.w, std::vector<std::uint8_t>(begin, begin + static_cast<std::ptrdiff_t>(plane)));
}

}  // namespace srda
