#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srda/models.hpp"
#include "srda/random.hpp"
#include "srda/synth.hpp"
#include "srda/tensor.hpp"

namespace srda {

struct CropSpec {
  std::int64_t source_crop = 32;
  std::int64_t target_crop = 64;
  std::int64_t eval_tile = 128;
  std::int64_t eval_resize = 64;

  // target_crop and eval_tile must be r times source_crop and eval_resize to
  // within one pixel.
  void validate(const ScaleRatio& r) const;
  friend bool operator==(const CropSpec&, const CropSpec&) = default;
};

struct ManifestItem {
  std::string file;
  std::string split;   // "train" or "val"
  std::string domain;  // "source" or "target"
  friend bool operator==(const ManifestItem&, const ManifestItem&) = default;
};

struct Manifest {
  double gsd_source = 0.1;
  double gsd_target = 0.05;
  std::vector<std::string> classes;
  std::vector<ManifestItem> items;

  static Manifest read(const std::string& path);
  void write(const std::string& path) const;
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

struct DatasetItem {
  ManifestItem entry;
  std::string image_path;
  std::string label_path;
  Tensor image;    // (1, 3, H, W) in [0, 1]
  LabelMap label;  // empty (n == 0) when the item has no label file
};

class DomainDataset {
 public:
  DomainDataset() = default;
  DomainDataset(std::string root, Manifest manifest, std::vector<DatasetItem> items)
      : root_(std::move(root)), manifest_(std::move(manifest)), items_(std::move(items)) {}

  const std::string& root() const { return root_; }
  const Manifest& manifest() const { return manifest_; }
  int num_classes() const { return static_cast<int>(manifest_.classes.size()); }
  const std::vector<DatasetItem>& items() const { return items_; }
  std::vector<const DatasetItem*> select(const std::string& domain, const std::string& split) const;

 private:
  std::string root_;
  Manifest manifest_;
  std::vector<DatasetItem> items_;
};

// Reads <root>/manifest.json and every raster it lists. All problems found
// (missing files, size mismatches, out of range labels) are reported together.
DomainDataset load_dataset(const std::string& root, int num_classes, const ScaleRatio& r);

struct SynthConfig {
  SceneSpec scene;
  std::int64_t source_scenes = 200;
  std::int64_t target_scenes = 200;
  std::int64_t eval_scenes = 40;
  ScaleRatio scale{2, 1};
  double gsd_target = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

// Writes <root>/{source,target}/{images,labels} and the manifest. Each scene
// draws from its own stream so the output does not depend on order.
Manifest synthesize_dataset(const std::string& root, const SynthConfig& config);

struct TrainingBatch {
  Tensor source;         // I_S, (N, 3, s, s)
  LabelMap source_labels;
  Tensor target;         // I_T, (N, 3, t, t)
  Tensor target_down;    // bicubic down I_T, (N, 3, s, s)
};

// Random aligned crops from the training split of each domain.
TrainingBatch sample_training_pair(const DomainDataset& dataset, const CropSpec& crop, Rng& rng);
TrainingBatch sample_training_batch(const DomainDataset& dataset, const CropSpec& crop, std::int64_t batch_size,
                                    Rng& rng);

// Pixels [y, y + h) x [x, x + w) of sample 0.
Tensor crop_image(const Tensor& image, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w);
LabelMap crop_labels(const LabelMap& labels, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w);

}  // namespace srda
