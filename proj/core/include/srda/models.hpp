#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srda/param_store.hpp"
#include "srda/tensor.hpp"

namespace srda {

// Resolution ratio between the domains as an exact fraction (target GSD
// divided by source GSD in the sense used by the crop protocol: a low
// resolution extent of h maps to round(h * num / den) high resolution pixels).
struct ScaleRatio {
  std::int64_t num = 2;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::int64_t up(std::int64_t low) const { return (2 * low * num + den) / (2 * den); }
  std::int64_t down(std::int64_t high) const { return (2 * high * den + num) / (2 * num); }
  std::string str() const;
  // Accepts "2", "10/3" or "3.5".
  static ScaleRatio parse(const std::string& text);

  friend bool operator==(const ScaleRatio&, const ScaleRatio&) = default;
};

struct ModelConfig {
  int num_classes = 2;
  ScaleRatio scale{2, 1};
  int base_channels = 32;
  std::vector<int> aspp_dilations{1, 2, 4, 8};
  int image_channels = 3;

  void validate() const;
  // ceil(log2 r) transposed-convolution stages in the SR decoder.
  int decoder_stages() const;
  // Channel width after each decoder stage, low to high resolution.
  std::vector<int> decoder_channels() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr double kLeakySlope = 0.2;
inline constexpr std::int64_t kPdcMinInput = 64;
inline constexpr std::int64_t kOdcMinInput = 32;

struct SrResult {
  Tensor image;                  // (N, 3, H, W), values in (0, 1)
  std::vector<Tensor> pyramid;   // decoder stage outputs, low to high resolution
};

// Every tensor one SRS pass over a source crop and a downsampled target crop
// produces.
struct SrsForward {
  Tensor features_source;
  Tensor features_target;
  SrResult sr_source;   // I_S^R and its pyramid
  SrResult sr_target;   // I_T^R = R(down I_T)
  Tensor logits_source;
  Tensor logits_target;
  Tensor prob_source;   // P_S
  Tensor prob_target;   // P_T
};

// Frozen feature embedding used by the perceptual loss.
class PerceptualNet {
 public:
  explicit PerceptualNet(std::uint64_t seed = kDefaultSeed);
  Tensor features(const Tensor& image) const;
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }
  PerceptualNet to(DType dtype) const;

  static constexpr std::uint64_t kDefaultSeed = 0x5eedf00dULL;

 private:
  struct Empty {};
  explicit PerceptualNet(Empty) {}
  ParamStore params_;
};

// Shared extractor E, super-resolution decoder R and segmentation head S.
class SrsModel {
 public:
  SrsModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // (N, 3, h, w) -> (N, 4 * base, h, w).
  Tensor extract(const Tensor& image) const;
  SrResult super_resolve(const Tensor& features, std::int64_t target_h,
                         std::int64_t target_w) const;
  // An empty pyramid stands for all-zero lateral inputs.
  Tensor segment(const Tensor& features, std::span<const Tensor> pyramid,
                 std::int64_t target_h, std::int64_t target_w) const;
  SrsForward forward(const Tensor& source, const Tensor& target_down) const;

  // Super-resolves and segments one batch of low resolution images.
  struct Prediction {
    Tensor sr_image;
    Tensor logits;
  };
  Prediction predict(const Tensor& low_res) const;

  Tensor perceptual_features(const Tensor& image) const { return perceptual_.features(image); }

  ParamStore& extractor() { return extractor_; }
  ParamStore& decoder() { return decoder_; }
  ParamStore& seg_head() { return seg_head_; }
  const ParamStore& extractor() const { return extractor_; }
  const ParamStore& decoder() const { return decoder_; }
  const ParamStore& seg_head() const { return seg_head_; }
  PerceptualNet& perceptual() { return perceptual_; }
  const PerceptualNet& perceptual() const { return perceptual_; }

  // Shallow unions of the sections (shared tensor handles).
  ParamStore generator_params() const;  // E, R, S
  ParamStore sr_params() const;         // E, R

  SrsModel to(DType dtype) const;

 private:
  ModelConfig config_;
  ParamStore extractor_;
  ParamStore decoder_;
  ParamStore seg_head_;
  PerceptualNet perceptual_;
};

// PatchGAN scoring super-resolved against real high resolution images.
class PdcModel {
 public:
  explicit PdcModel(std::uint64_t seed);
  // (N, 3, H, W) -> (N, 1, H / 16, W / 16) raw scores.
  Tensor forward(const Tensor& image) const;
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  PdcModel to(DType dtype) const;

 private:
  PdcModel() = default;
  ParamStore params_;
};

// Output-space classifier: five stride-2 4x4 convolutions.
class OdcModel {
 public:
  OdcModel(int num_classes, std::uint64_t seed);
  // (N, C, H, W) -> (N, 1, H / 32, W / 32) raw scores.
  Tensor forward(const Tensor& probabilities) const;
  int num_classes() const { return num_classes_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  OdcModel to(DType dtype) const;

 private:
  OdcModel() = default;
  int num_classes_ = 0;
  ParamStore params_;
};

}  // namespace srda
