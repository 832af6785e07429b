#pragma once

#include <string>

#include "srda/tensor.hpp"

namespace srda {

// 8-bit RGB PNG to a (1, 3, H, W) float tensor in [0, 1].
Tensor read_rgb_png(const std::string& path);
// Writes sample `index` of an (N, 3, H, W) tensor; values are clamped to
// [0, 1] and rounded to 8 bits.
void write_rgb_png(const std::string& path, const Tensor& image, std::int64_t index = 0);

// Single-channel 8-bit PNG holding class indices.
LabelMap read_label_png(const std::string& path);
void write_label_png(const std::string& path, const LabelMap& labels, std::int64_t index = 0);

}  // namespace srda
