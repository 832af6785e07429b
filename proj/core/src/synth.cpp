#include "srda/synth.hpp"

#include <algorithm>
#include <cmath>

#include "srda/error.hpp"
#include "srda/ops.hpp"
#include "srda/random.hpp"

namespace srda {

const char* object_kind_name(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::kBackground: return "background";
    case ObjectKind::kBuilding: return "building";
    case ObjectKind::kRoad: return "road";
    case ObjectKind::kVegetation: return "vegetation";
    case ObjectKind::kCar: return "car";
  }
  return "?";
}

ObjectKind parse_object_kind(const std::string& name) {
  if (name == "background" || name == "non-building" || name == "clutter") return ObjectKind::kBackground;
  for (int k = 1; k < kNumObjectKinds; ++k) {
    if (name == object_kind_name(static_cast<ObjectKind>(k))) return static_cast<ObjectKind>(k);
  }
  throw ValidationError("unknown class name '" + name +
                        "' (expected background, non-building, building, road, vegetation or car)");
}

void SceneSpec::validate() const {
  if (canvas_px < 128) throw ValidationError("data.canvas_px must be >= 128");
  if (classes.size() < 2) throw ValidationError("data.classes needs at least two entries");
  if (classes[0] != ObjectKind::kBackground) throw ValidationError("data.classes[0] must be the background class");
  for (std::size_t i = 1; i < classes.size(); ++i) {
    if (classes[i] == ObjectKind::kBackground) throw ValidationError("data.classes lists the background twice");
    for (std::size_t j = 1; j < i; ++j) {
      if (classes[i] == classes[j]) throw ValidationError(std::string("data.classes lists '") + object_kind_name(classes[i]) + "' twice");
    }
  }
  if (buildings < 0 || roads < 0 || cars < 0) throw ValidationError("scene object densities must be >= 0");
  if (vegetation < 0 || vegetation > 1) throw ValidationError("data.vegetation must lie in [0, 1]");
}

namespace {

enum Stream : std::uint64_t { kTextureStream = 1, kVegetationStream, kObjectStream, kNoiseStream, kStyleStream };

// Bilinearly interpolated grid of N(0, 1) values with the given cell size.
std::vector<float> value_noise(std::int64_t size, std::int64_t cell, Rng& rng) {
  const std::int64_t g = size / cell + 2;
  std::vector<double> grid(static_cast<std::size_t>(g * g));
  for (auto& v : grid) v = rng.normal();
  std::vector<float> out(static_cast<std::size_t>(size * size));
  for (std::int64_t y = 0; y < size; ++y) {
    const double fy = static_cast<double>(y) / static_cast<double>(cell);
    const auto y0 = static_cast<std::int64_t>(fy);
    const double ty = fy - static_cast<double>(y0);
    for (std::int64_t x = 0; x < size; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(cell);
      const auto x0 = static_cast<std::int64_t>(fx);
      const double tx = fx - static_cast<double>(x0);
      auto at = [&](std::int64_t yy, std::int64_t xx) { return grid[static_cast<std::size_t>(yy * g + xx)]; };
      const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
      const double bottom = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
      out[static_cast<std::size_t>(y * size + x)] = static_cast<float>(top * (1 - ty) + bottom * ty);
    }
  }
  return out;
}

std::int64_t draw_count(double mean, Rng& rng) {
  return static_cast<std::int64_t>(std::floor(mean * (0.6 + 0.8 * rng.uniform()) + rng.uniform()));
}

struct Road {
  bool horizontal;
  std::int64_t offset;  // centre row or column
  std::int64_t width;
};

}  // namespace

SceneLayout generate_layout(const SceneSpec& spec) {
  spec.validate();
  const std::int64_t size = spec.canvas_px;
  const double area = static_cast<double>(size * size) / (128.0 * 128.0);
  SceneLayout l;
  l.size = size;
  l.kind.assign(static_cast<std::size_t>(size * size), static_cast<std::uint8_t>(ObjectKind::kBackground));
  l.shade.assign(l.kind.size(), 0.0f);

  Rng tex_rng(derive_seed(spec.seed, kTextureStream));
  const auto fine = value_noise(size, 4, tex_rng);
  const auto mid = value_noise(size, 12, tex_rng);
  const auto coarse = value_noise(size, 40, tex_rng);
  l.texture.resize(l.kind.size());
  for (std::size_t i = 0; i < l.texture.size(); ++i) {
    l.texture[i] = 0.6f * fine[i] + 0.6f * mid[i] + 0.5f * coarse[i];
  }

  auto fill = [&](std::int64_t y0, std::int64_t x0, std::int64_t y1, std::int64_t x1, ObjectKind kind, float shade) {
    y0 = std::max<std::int64_t>(y0, 0);
    x0 = std::max<std::int64_t>(x0, 0);
    y1 = std::min(y1, size);
    x1 = std::min(x1, size);
    for (std::int64_t y = y0; y < y1; ++y) {
      for (std::int64_t x = x0; x < x1; ++x) {
        const auto i = static_cast<std::size_t>(y * size + x);
        l.kind[i] = static_cast<std::uint8_t>(kind);
        l.shade[i] = shade;
      }
    }
  };

  if (spec.vegetation > 0) {
    Rng veg_rng(derive_seed(spec.seed, kVegetationStream));
    const auto field = value_noise(size, 24, veg_rng);
    std::vector<float> sorted = field;
    const auto k = static_cast<std::size_t>(std::clamp((1.0 - spec.vegetation) * static_cast<double>(sorted.size()), 0.0,
                                                       static_cast<double>(sorted.size() - 1)));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
    const float threshold = sorted[k];
    const auto shade = static_cast<float>(veg_rng.normal());
    for (std::size_t i = 0; i < field.size(); ++i) {
      if (field[i] > threshold) {
        l.kind[i] = static_cast<std::uint8_t>(ObjectKind::kVegetation);
        l.shade[i] = shade;
      }
    }
  }

  Rng rng(derive_seed(spec.seed, kObjectStream));
  const std::int64_t n_buildings = draw_count(spec.buildings * area, rng);
  for (std::int64_t b = 0; b < n_buildings; ++b) {
    const std::int64_t h = rng.range(10, 28);
    const std::int64_t w = rng.range(10, 28);
    const std::int64_t y = rng.range(-4, size - h + 4);
    const std::int64_t x = rng.range(-4, size - w + 4);
    fill(y, x, y + h, x + w, ObjectKind::kBuilding, static_cast<float>(rng.normal()));
  }

  std::vector<Road> roads;
  const std::int64_t n_roads = std::max<std::int64_t>(draw_count(spec.roads * std::sqrt(area), rng), spec.roads > 0 ? 1 : 0);
  for (std::int64_t r = 0; r < n_roads; ++r) {
    Road road{rng.bernoulli(0.5), 0, rng.range(6, 10)};
    road.offset = rng.range(road.width, size - road.width);
    const auto shade = static_cast<float>(0.5 * rng.normal());
    const std::int64_t lo = road.offset - road.width / 2;
    if (road.horizontal) {
      fill(lo, 0, lo + road.width, size, ObjectKind::kRoad, shade);
    } else {
      fill(0, lo, size, lo + road.width, ObjectKind::kRoad, shade);
    }
    roads.push_back(road);
  }

  if (!roads.empty()) {
    const std::int64_t n_cars = draw_count(spec.cars * area, rng);
    for (std::int64_t c = 0; c < n_cars; ++c) {
      const Road& road = roads[static_cast<std::size_t>(rng.index(static_cast<std::int64_t>(roads.size())))];
      const std::int64_t length = rng.range(6, 8);
      const std::int64_t breadth = 4;
      const std::int64_t lo = road.offset - road.width / 2;
      // Keep to one lane of the carriageway.
      const std::int64_t across = rng.bernoulli(0.5) ? lo + 1 : lo + road.width - 1 - breadth;
      const std::int64_t along = rng.range(0, size - length);
      const auto shade = static_cast<float>(rng.normal());
      if (road.horizontal) {
        fill(across, along, across + breadth, along + length, ObjectKind::kCar, shade);
      } else {
        fill(along, across, along + length, across + breadth, ObjectKind::kCar, shade);
      }
    }
  }
  return l;
}

LabelMap layout_mask(const SceneLayout& layout, const std::vector<ObjectKind>& classes) {
  std::array<std::uint8_t, kNumObjectKinds> label{};
  for (std::size_t c = 0; c < classes.size(); ++c) label[static_cast<std::size_t>(classes[c])] = static_cast<std::uint8_t>(c);
  LabelMap mask(1, layout.size, layout.size);
  for (std::size_t i = 0; i < layout.kind.size(); ++i) mask.values[i] = label[layout.kind[i]];
  return mask;
}

namespace {

void box_blur(std::vector<float>& plane, std::int64_t size, int radius) {
  if (radius <= 0) return;
  std::vector<float> tmp(plane.size());
  const float norm = 1.0f / static_cast<float>(2 * radius + 1);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::int64_t y = 0; y < size; ++y) {
      for (std::int64_t x = 0; x < size; ++x) {
        float acc = 0;
        for (int d = -radius; d <= radius; ++d) {
          const std::int64_t p = std::clamp<std::int64_t>((pass == 0 ? x : y) + d, 0, size - 1);
          acc += pass == 0 ? plane[static_cast<std::size_t>(y * size + p)] : plane[static_cast<std::size_t>(p * size + x)];
        }
        tmp[static_cast<std::size_t>(y * size + x)] = acc * norm;
      }
    }
    plane.swap(tmp);
  }
}

void add_noise(std::vector<float>& values, float sigma, std::uint64_t seed) {
  if (sigma <= 0) return;
  Rng rng(derive_seed(seed, kNoiseStream));
  for (auto& v : values) v = std::clamp(v + sigma * static_cast<float>(rng.normal()), 0.0f, 1.0f);
}

}  // namespace

Tensor render_layout(const SceneLayout& layout, const DomainStyle& style, std::uint64_t noise_seed, bool noise) {
  const std::int64_t size = layout.size;
  const auto plane = static_cast<std::size_t>(size * size);
  std::vector<float> values(3 * plane);
  for (int c = 0; c < 3; ++c) {
    std::vector<float> channel(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      const auto kind = layout.kind[i];
      const float tex_scale = kind == static_cast<std::uint8_t>(ObjectKind::kVegetation) ? 2.0f : 1.0f;
      channel[i] = style.colors[kind][static_cast<std::size_t>(c)] + style.jitter * layout.shade[i] +
                   style.texture * tex_scale * layout.texture[i];
    }
    box_blur(channel, size, style.blur);
    for (std::size_t i = 0; i < plane; ++i) {
      values[static_cast<std::size_t>(c) * plane + i] = std::clamp(channel[i] * style.tint[static_cast<std::size_t>(c)], 0.0f, 1.0f);
    }
  }
  if (noise) add_noise(values, style.noise, noise_seed);
  return Tensor::from_data(Shape{1, 3, size, size}, std::move(values));
}

namespace {

DomainStyle perturbed(DomainStyle style, std::uint64_t seed, std::uint64_t side) {
  Rng rng(derive_seed(seed, kStyleStream, side));
  for (auto& color : style.colors) {
    for (auto& v : color) v = std::clamp(v + static_cast<float>(rng.uniform(-0.03, 0.03)), 0.0f, 1.0f);
  }
  return style;
}

}  // namespace

DomainStyle DomainStyle::target(std::uint64_t seed) {
  DomainStyle s;
  s.colors = {{{0.56f, 0.53f, 0.44f},    // background
               {0.74f, 0.36f, 0.30f},    // building
               {0.44f, 0.44f, 0.46f},    // road
               {0.27f, 0.48f, 0.22f},    // vegetation
               {0.16f, 0.22f, 0.58f}}};  // car
  s.jitter = 0.05f;
  s.texture = 0.03f;
  s.noise = 0.01f;
  s.blur = 0;
  return perturbed(s, seed, 0);
}

DomainStyle DomainStyle::source(std::uint64_t seed) {
  // False-colour look: vegetation renders red, roofs grey-blue.
  DomainStyle s;
  s.colors = {{{0.42f, 0.56f, 0.50f},
               {0.54f, 0.55f, 0.66f},
               {0.62f, 0.56f, 0.50f},
               {0.76f, 0.32f, 0.31f},
               {0.86f, 0.80f, 0.32f}}};
  s.jitter = 0.06f;
  s.texture = 0.04f;
  s.noise = 0.015f;
  s.blur = 1;
  s.tint = {1.0f, 0.96f, 1.04f};
  return perturbed(s, seed, 1);
}

SceneSample generate_scene(const SceneSpec& spec, const DomainStyle& style) {
  const SceneLayout layout = generate_layout(spec);
  return {render_layout(layout, style, spec.seed), layout_mask(layout, spec.classes)};
}

SceneSample derive_source_sample(const SceneLayout& layout, const std::vector<ObjectKind>& classes,
                                 const ScaleRatio& r, const DomainStyle& source_style, std::uint64_t noise_seed) {
  if (!(r.num > r.den)) throw ValidationError("derive_source_sample: scale ratio must be > 1");
  const std::int64_t low = r.down(layout.size);
  const Tensor clean = render_layout(layout, source_style, noise_seed, false);
  std::vector<float> values;
  {
    NoGradGuard guard;
    const Tensor down = resize(clean, low, low, ResizeMode::kBicubic);
    const auto d = down.data<float>();
    values.assign(d.begin(), d.end());
  }
  for (auto& v : values) v = std::clamp(v, 0.0f, 1.0f);
  add_noise(values, source_style.noise, noise_seed);
  return {Tensor::from_data(Shape{1, 3, low, low}, std::move(values)),
          resize_labels(layout_mask(layout, classes), low, low)};
}

}  // namespace srda
