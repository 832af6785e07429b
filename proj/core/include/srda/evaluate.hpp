#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "srda/dataset.hpp"
#include "srda/metrics.hpp"
#include "srda/models.hpp"

namespace srda {

// What evaluation needs from a model. super_resolve may be left empty when
// no PSNR is wanted.
struct Predictor {
  // Class scores for a batch of low resolution tiles, at any resolution.
  std::function<Tensor(const Tensor& low_res)> logits;
  // Image at the requested size reconstructed from a low resolution input.
  std::function<Tensor(const Tensor& low_res, std::int64_t h, std::int64_t w)> super_resolve;
};

Predictor make_predictor(const SrsModel& model);

// Splits a (1, 3, H, W) image into eval_tile squares without overlap
// (remainders reflection padded), resizes each to eval_resize with bicubic,
// predicts, resizes the class probabilities back with bilinear, takes the
// argmax and stitches.
LabelMap sliding_window_infer(const Predictor& predictor, const Tensor& image, const CropSpec& crop);

struct MetricsReport {
  std::vector<std::string> classes;
  std::vector<std::optional<double>> iou;
  double miou = 0;
  double pixel_accuracy = 0;
  std::optional<double> psnr_db;          // mean over images, each capped
  std::optional<double> psnr_bicubic_db;  // bicubic upsampling baseline
  std::int64_t images = 0;

  // class,iou rows, then miou and (when measured) psnr_db.
  std::string csv() const;
  std::string table() const;
};

// Accumulates one confusion matrix over every image of the split.
MetricsReport evaluate(const Predictor& predictor, const DomainDataset& dataset, const std::string& split,
                       const CropSpec& crop, const ScaleRatio& r, bool with_psnr);
MetricsReport evaluate(const SrsModel& model, const DomainDataset& dataset, const std::string& split,
                       const CropSpec& crop, bool with_psnr);

}  // namespace srda
