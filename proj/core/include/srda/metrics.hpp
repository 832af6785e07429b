#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "srda/tensor.hpp"

namespace srda {

// Rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return num_classes_; }
  // Pixels whose truth equals ignore_index are skipped. Throws on size
  // mismatch or class values outside [0, C).
  void add(const LabelMap& truth, const LabelMap& prediction, int ignore_index = kIgnoreLabel);
  void merge(const ConfusionMatrix& other);

  std::int64_t at(int truth, int prediction) const {
    return counts_[static_cast<std::size_t>(truth * num_classes_ + prediction)];
  }
  std::int64_t total() const;

 private:
  int num_classes_;
  std::vector<std::int64_t> counts_;
};

// TP / (TP + FP + FN); empty when the class appears in neither truth nor
// prediction.
std::optional<double> iou(const ConfusionMatrix& conf, int k);
// Mean over the classes that have an IoU.
double miou(const ConfusionMatrix& conf);
double pixel_accuracy(const ConfusionMatrix& conf);

// 10 log10(peak^2 / MSE); +infinity for identical inputs.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
inline constexpr double kPsnrCap = 99.0;

}  // namespace srda
