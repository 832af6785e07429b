#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "srda/models.hpp"
#include "srda/tensor.hpp"

namespace srda {

enum class ObjectKind : std::uint8_t { kBackground = 0, kBuilding, kRoad, kVegetation, kCar };
inline constexpr int kNumObjectKinds = 5;

const char* object_kind_name(ObjectKind kind);
// Accepts the kind names above plus "non-building" and "clutter" for the
// background.
ObjectKind parse_object_kind(const std::string& name);

struct SceneSpec {
  std::int64_t canvas_px = 128;
  // Class index -> kind; index 0 must be the background. Kinds without a
  // class are labelled 0.
  std::vector<ObjectKind> classes{ObjectKind::kBackground, ObjectKind::kBuilding, ObjectKind::kRoad,
                                  ObjectKind::kCar};
  // Expected object counts per 128 x 128 pixels.
  double buildings = 7.0;
  double roads = 1.6;
  double cars = 10.0;
  // Fraction of the canvas covered by vegetation blobs before buildings and
  // roads are drawn over them.
  double vegetation = 0.2;
  std::uint64_t seed = 0;

  int num_classes() const { return static_cast<int>(classes.size()); }
  void validate() const;
};

// Per-pixel geometry of a scene, independent of any appearance.
struct SceneLayout {
  std::int64_t size = 0;
  std::vector<std::uint8_t> kind;  // ObjectKind per pixel
  std::vector<float> shade;        // per-object brightness offset, N(0, 1)
  std::vector<float> texture;      // smooth noise, roughly N(0, 1)

  std::uint8_t at(std::int64_t y, std::int64_t x) const {
    return kind[static_cast<std::size_t>(y * size + x)];
  }
};

struct DomainStyle {
  std::array<std::array<float, 3>, kNumObjectKinds> colors{};  // base RGB per kind
  float jitter = 0.05f;    // scale of the per-object shade
  float texture = 0.04f;   // scale of the smooth texture
  float noise = 0.01f;     // additive white noise sigma
  int blur = 0;            // box blur radius in pixels
  std::array<float, 3> tint{1.0f, 1.0f, 1.0f};

  // Fixed looks for the two sides of an experiment, perturbed by the seed.
  static DomainStyle target(std::uint64_t seed);
  static DomainStyle source(std::uint64_t seed);
};

struct SceneSample {
  Tensor image;    // (1, 3, H, W)
  LabelMap mask;   // (1, H, W)
};

SceneLayout generate_layout(const SceneSpec& spec);
LabelMap layout_mask(const SceneLayout& layout, const std::vector<ObjectKind>& classes);
// add_noise = false leaves out the white noise so it can be applied after
// resampling.
Tensor render_layout(const SceneLayout& layout, const DomainStyle& style, std::uint64_t noise_seed,
                     bool add_noise = true);

// High resolution scene rendered with the target style.
SceneSample generate_scene(const SceneSpec& spec, const DomainStyle& style);

// Low resolution counterpart of a scene: rendered with the source style,
// bicubic downsampled by r, then noised; the mask is downsampled with nearest
// neighbour.
SceneSample derive_source_sample(const SceneLayout& layout, const std::vector<ObjectKind>& classes,
                                 const ScaleRatio& r, const DomainStyle& source_style,
                                 std::uint64_t noise_seed);

}  // namespace srda
