#pragma once

// Differentiable tensor operations. Every function records a graph node when
// grad mode is on and any input requires a gradient.

#include <cstdint>
#include <optional>
#include <vector>

#include "srda/tensor.hpp"

namespace srda {

// Elementwise arithmetic on identically shaped tensors.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);
// max(x, floor); the gradient is zero where the floor is active.
Tensor clamp_min(const Tensor& x, double floor);

Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor sigmoid(const Tensor& x);

// Normalises every (sample, channel) plane to zero mean and unit variance.
Tensor instance_norm(const Tensor& x, double eps = 1e-5);

// Channel-wise (log-)softmax at every pixel, max-subtracted.
Tensor log_softmax_channel(const Tensor& x);
Tensor softmax_channel(const Tensor& x);

// Reductions to a (1, 1, 1, 1) tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// mean((a - b)^2) and mean(|a - b|).
Tensor mse_loss(const Tensor& a, const Tensor& b);
Tensor l1_loss(const Tensor& a, const Tensor& b);

// Concatenate along the channel axis; all other extents must agree.
Tensor concat_channels(const std::vector<Tensor>& parts);
// Concatenate along the batch axis.
Tensor concat_batch(const std::vector<Tensor>& parts);
// Samples [begin, end) of the batch axis.
Tensor slice_batch(const Tensor& x, std::int64_t begin, std::int64_t end);

// Zero padding with independent amounts per side.
Tensor pad2d(const Tensor& x, std::int64_t top, std::int64_t bottom,
             std::int64_t left, std::int64_t right);

// Adds bias[c] to every pixel of channel c; bias has shape (1, C, 1, 1).
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

struct Conv2dOptions {
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t dilation = 1;
};

// weight: (Cout, Cin, kh, kw); bias: (1, Cout, 1, 1) when present.
Tensor conv2d(const Tensor& x, const Tensor& weight,
              const std::optional<Tensor>& bias, const Conv2dOptions& opts = {});

// weight: (Cin, Cout, kh, kw); output extent (H - 1) * stride - 2 * padding + kh.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight,
                        const std::optional<Tensor>& bias, std::int64_t stride,
                        std::int64_t padding);

enum class ResizeMode { kNearest, kBilinear, kBicubic };

// Half-pixel centres, corners not aligned, border samples clamped. Bicubic
// uses the a = -0.5 kernel.
Tensor resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w,
              ResizeMode mode);

// Nearest-neighbour resampling of a label map with the same convention.
LabelMap resize_labels(const LabelMap& labels, std::int64_t out_h,
                       std::int64_t out_w);

// Per-pixel argmax over channels.
LabelMap argmax_channel(const Tensor& x);

// Mean negative log-likelihood over pixels whose label is not ignore_index.
Tensor cross_entropy_2d(const Tensor& logits, const LabelMap& labels,
                        int ignore_index = kIgnoreLabel);

}  // namespace srda
