#include "srda/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "srda/error.hpp"
#include "srda/image_io.hpp"
#include "srda/ops.hpp"

namespace fs = std::filesystem;

namespace srda {

void CropSpec::validate(const ScaleRatio& r) const {
  if (source_crop <= 0 || target_crop <= 0 || eval_tile <= 0 || eval_resize <= 0) {
    throw ValidationError("crop sizes must be positive");
  }
  if (std::abs(static_cast<double>(target_crop) - r.value() * static_cast<double>(source_crop)) > 1.0) {
    throw ValidationError("data.target_crop (" + std::to_string(target_crop) + ") must be r * data.source_crop (" +
                          std::to_string(source_crop) + " * " + r.str() + ") to within 1 px");
  }
  if (std::abs(static_cast<double>(eval_tile) - r.value() * static_cast<double>(eval_resize)) > r.value()) {
    throw ValidationError("data.eval_tile (" + std::to_string(eval_tile) + ") must be about r * data.eval_resize (" +
                          std::to_string(eval_resize) + " * " + r.str() + ")");
  }
}

Manifest Manifest::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.gsd_source = j.at("gsd_source").get<double>();
    m.gsd_target = j.at("gsd_target").get<double>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& item : j.at("items")) {
      m.items.push_back({item.at("file").get<std::string>(), item.at("split").get<std::string>(),
                         item.at("domain").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed manifest '" + path + "': " + e.what());
  }
  return m;
}

void Manifest::write(const std::string& path) const {
  nlohmann::json j;
  j["gsd_source"] = gsd_source;
  j["gsd_target"] = gsd_target;
  j["classes"] = classes;
  j["items"] = nlohmann::json::array();
  for (const auto& item : items) {
    j["items"].push_back({{"file", item.file}, {"split", item.split}, {"domain", item.domain}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write manifest '" + path + "'");
}

std::vector<const DatasetItem*> DomainDataset::select(const std::string& domain, const std::string& split) const {
  std::vector<const DatasetItem*> out;
  for (const auto& item : items_) {
    if (item.entry.domain == domain && item.entry.split == split) out.push_back(&item);
  }
  return out;
}

DomainDataset load_dataset(const std::string& root, int num_classes, const ScaleRatio& r) {
  const std::string manifest_path = (fs::path(root) / "manifest.json").string();
  Manifest manifest = Manifest::read(manifest_path);
  if (static_cast<int>(manifest.classes.size()) != num_classes) {
    throw ValidationError(manifest_path + ": lists " + std::to_string(manifest.classes.size()) +
                          " classes but model.num_classes is " + std::to_string(num_classes));
  }
  if (!(manifest.gsd_target > 0) || !(manifest.gsd_source > 0)) {
    throw ValidationError(manifest_path + ": GSD values must be positive");
  }
  const double ratio = manifest.gsd_source / manifest.gsd_target;
  if (std::abs(ratio - r.value()) > 1e-6 * r.value()) {
    std::ostringstream os;
    os << manifest_path << ": GSD ratio " << ratio << " does not match model.scale_ratio " << r.str();
    throw ValidationError(os.str());
  }
  std::vector<std::string> problems;
  std::vector<DatasetItem> items;
  for (const auto& entry : manifest.items) {
    if (entry.domain != "source" && entry.domain != "target") {
      problems.push_back(entry.file + ": unknown domain '" + entry.domain + "'");
      continue;
    }
    if (entry.split != "train" && entry.split != "val") {
      problems.push_back(entry.file + ": unknown split '" + entry.split + "'");
      continue;
    }
    DatasetItem item;
    item.entry = entry;
    item.image_path = (fs::path(root) / entry.domain / "images" / entry.file).string();
    item.label_path = (fs::path(root) / entry.domain / "labels" / entry.file).string();
    // Target training images are unlabelled as far as training is concerned,
    // but their labels are still read when present.
    const bool label_required = entry.domain == "source" || entry.split == "val";
    if (!fs::exists(item.image_path)) {
      problems.push_back(item.image_path + ": missing image");
      continue;
    }
    try {
      item.image = read_rgb_png(item.image_path);
    } catch (const Error& e) {
      problems.push_back(e.what());
      continue;
    }
    if (fs::exists(item.label_path)) {
      try {
        item.label = read_label_png(item.label_path);
      } catch (const Error& e) {
        problems.push_back(e.what());
        continue;
      }
      const Shape s = item.image.shape();
      if (item.label.h != s.h || item.label.w != s.w) {
        problems.push_back(item.label_path + ": label is " + std::to_string(item.label.w) + "x" +
                           std::to_string(item.label.h) + " but the image is " + std::to_string(s.w) + "x" +
                           std::to_string(s.h));
        continue;
      }
      for (auto v : item.label.values) {
        if (v != kIgnoreLabel && v >= num_classes) {
          problems.push_back(item.label_path + ": class value " + std::to_string(v) + " exceeds " +
                             std::to_string(num_classes - 1));
          break;
        }
      }
    } else if (label_required) {
      problems.push_back(item.label_path + ": missing label");
      continue;
    }
    items.push_back(std::move(item));
  }
  if (!problems.empty()) {
    std::string msg = "dataset '" + root + "' failed validation:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return DomainDataset(root, std::move(manifest), std::move(items));
}

void SynthConfig::validate() const {
  scene.validate();
  if (source_scenes < 1 || target_scenes < 1) throw ValidationError("data.source_scenes and data.target_scenes must be >= 1");
  if (eval_scenes < 0) throw ValidationError("data.eval_scenes must be >= 0");
  if (!(scale.num > scale.den)) throw ValidationError("model.scale_ratio must be > 1");
  if (!(gsd_target > 0)) throw ValidationError("data.gsd_target must be > 0");
}

namespace {

enum DomainStream : std::uint64_t { kSourceScenes = 0x50, kTargetScenes = 0x54, kEvalScenes = 0x56 };

std::string scene_file(char prefix, std::int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c_%04lld.png", prefix, static_cast<long long>(i));
  return buf;
}

}  // namespace

Manifest synthesize_dataset(const std::string& root, const SynthConfig& config) {
  config.validate();
  for (const char* domain : {"source", "target"}) {
    for (const char* kind : {"images", "labels"}) {
      std::error_code ec;
      fs::create_directories(fs::path(root) / domain / kind, ec);
      if (ec) throw IoError("cannot create '" + (fs::path(root) / domain / kind).string() + "': " + ec.message());
    }
  }
  Manifest m;
  m.gsd_target = config.gsd_target;
  m.gsd_source = config.gsd_target * config.scale.value();
  for (auto kind : config.scene.classes) m.classes.emplace_back(object_kind_name(kind));

  const DomainStyle target_style = DomainStyle::target(config.seed);
  const DomainStyle source_style = DomainStyle::source(config.seed);
  auto write = [&](const std::string& domain, const std::string& file, const SceneSample& s) {
    write_rgb_png((fs::path(root) / domain / "images" / file).string(), s.image);
    write_label_png((fs::path(root) / domain / "labels" / file).string(), s.mask);
  };

  for (std::int64_t i = 0; i < config.source_scenes; ++i) {
    SceneSpec spec = config.scene;
    spec.seed = derive_seed(config.seed, kSourceScenes, static_cast<std::uint64_t>(i));
    const SceneLayout layout = generate_layout(spec);
    const std::string file = scene_file('s', i);
    write("source", file, derive_source_sample(layout, spec.classes, config.scale, source_style, spec.seed));
    m.items.push_back({file, "train", "source"});
  }
  for (std::int64_t i = 0; i < config.target_scenes; ++i) {
    SceneSpec spec = config.scene;
    spec.seed = derive_seed(config.seed, kTargetScenes, static_cast<std::uint64_t>(i));
    const std::string file = scene_file('t', i);
    write("target", file, generate_scene(spec, target_style));
    m.items.push_back({file, "train", "target"});
  }
  for (std::int64_t i = 0; i < config.eval_scenes; ++i) {
    SceneSpec spec = config.scene;
    spec.seed = derive_seed(config.seed, kEvalScenes, static_cast<std::uint64_t>(i));
    const std::string file = scene_file('v', i);
    write("target", file, generate_scene(spec, target_style));
    m.items.push_back({file, "val", "target"});
  }
  m.write((fs::path(root) / "manifest.json").string());
  return m;
}

Tensor crop_image(const Tensor& image, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w) {
  const Shape s = image.shape();
  if (y < 0 || x < 0 || y + h > s.h || x + w > s.w) {
    throw DimensionError("crop_image: window exceeds the image " + s.str());
  }
  const auto src = image.data<float>();
  std::vector<float> out(static_cast<std::size_t>(s.c * h * w));
  for (std::int64_t c = 0; c < s.c; ++c) {
    for (std::int64_t yy = 0; yy < h; ++yy) {
      const auto* row = src.data() + (c * s.h + y + yy) * s.w + x;
      std::copy(row, row + w, out.begin() + (c * h + yy) * w);
    }
  }
  return Tensor::from_data(Shape{1, s.c, h, w}, std::move(out));
}

LabelMap crop_labels(const LabelMap& labels, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w) {
  if (y < 0 || x < 0 || y + h > labels.h || x + w > labels.w) {
    throw DimensionError("crop_labels: window exceeds the label map");
  }
  LabelMap out(1, h, w);
  for (std::int64_t yy = 0; yy < h; ++yy) {
    for (std::int64_t xx = 0; xx < w; ++xx) out.at(0, yy, xx) = labels.at(0, y + yy, x + xx);
  }
  return out;
}

namespace {

const DatasetItem& pick(const std::vector<const DatasetItem*>& pool, std::int64_t crop, Rng& rng) {
  const DatasetItem& item = *pool[static_cast<std::size_t>(rng.index(static_cast<std::int64_t>(pool.size())))];
  const Shape s = item.image.shape();
  if (s.h < crop || s.w < crop) {
    throw ValidationError(item.image_path + ": image is " + std::to_string(s.w) + "x" + std::to_string(s.h) +
                          ", smaller than the " + std::to_string(crop) + " px crop");
  }
  return item;
}

}  // namespace

TrainingBatch sample_training_pair(const DomainDataset& dataset, const CropSpec& crop, Rng& rng) {
  const auto sources = dataset.select("source", "train");
  const auto targets = dataset.select("target", "train");
  if (sources.empty()) throw ValidationError("dataset '" + dataset.root() + "' has no source training images");
  if (targets.empty()) throw ValidationError("dataset '" + dataset.root() + "' has no target training images");

  TrainingBatch b;
  const DatasetItem& src = pick(sources, crop.source_crop, rng);
  const Shape ss = src.image.shape();
  const std::int64_t sy = rng.range(0, ss.h - crop.source_crop);
  const std::int64_t sx = rng.range(0, ss.w - crop.source_crop);
  b.source = crop_image(src.image, sy, sx, crop.source_crop, crop.source_crop);
  b.source_labels = crop_labels(src.label, sy, sx, crop.source_crop, crop.source_crop);

  const DatasetItem& tgt = pick(targets, crop.target_crop, rng);
  const Shape ts = tgt.image.shape();
  const std::int64_t ty = rng.range(0, ts.h - crop.target_crop);
  const std::int64_t tx = rng.range(0, ts.w - crop.target_crop);
  b.target = crop_image(tgt.image, ty, tx, crop.target_crop, crop.target_crop);
  NoGradGuard guard;
  b.target_down = resize(b.target, crop.source_crop, crop.source_crop, ResizeMode::kBicubic);
  return b;
}

TrainingBatch sample_training_batch(const DomainDataset& dataset, const CropSpec& crop, std::int64_t batch_size,
                                    Rng& rng) {
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  std::vector<Tensor> src, tgt, down;
  TrainingBatch out;
  out.source_labels = LabelMap(0, crop.source_crop, crop.source_crop);
  for (std::int64_t i = 0; i < batch_size; ++i) {
    TrainingBatch b = sample_training_pair(dataset, crop, rng);
    src.push_back(b.source);
    tgt.push_back(b.target);
    down.push_back(b.target_down);
    out.source_labels.n += 1;
    out.source_labels.values.insert(out.source_labels.values.end(), b.source_labels.values.begin(),
                                    b.source_labels.values.end());
  }
  NoGradGuard guard;
  out.source = concat_batch(src);
  out.target = concat_batch(tgt);
  out.target_down = concat_batch(down);
  return out;
}

}  // namespace srda
