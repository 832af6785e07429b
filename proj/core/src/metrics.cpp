#include "srda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "srda/error.hpp"

namespace srda {

ConfusionMatrix::ConfusionMatrix(int num_classes) : num_classes_(num_classes) {
  if (num_classes < 1) throw ValidationError("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(num_classes * num_classes), 0);
}

void ConfusionMatrix::add(const LabelMap& truth, const LabelMap& prediction, int ignore_index) {
  if (truth.n != prediction.n || truth.h != prediction.h || truth.w != prediction.w) {
    throw DimensionError("confusion matrix: truth is " + std::to_string(truth.n) + "x" + std::to_string(truth.h) + "x" +
                         std::to_string(truth.w) + " but prediction is " + std::to_string(prediction.n) + "x" +
                         std::to_string(prediction.h) + "x" + std::to_string(prediction.w));
  }
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const int t = truth.values[i];
    if (t == ignore_index) continue;
    const int p = prediction.values[i];
    if (t >= num_classes_ || p >= num_classes_) {
      throw ValidationError("confusion matrix: class value " + std::to_string(std::max(t, p)) + " exceeds " +
                            std::to_string(num_classes_ - 1));
    }
    ++counts_[static_cast<std::size_t>(t * num_classes_ + p)];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) throw ValidationError("confusion matrix: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::optional<double> iou(const ConfusionMatrix& conf, int k) {
  std::int64_t row = 0, col = 0;
  for (int j = 0; j < conf.num_classes(); ++j) {
    row += conf.at(k, j);
    col += conf.at(j, k);
  }
  const std::int64_t tp = conf.at(k, k);
  const std::int64_t uni = row + col - tp;
  if (uni == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(uni);
}

double miou(const ConfusionMatrix& conf) {
  double sum = 0;
  int present = 0;
  for (int k = 0; k < conf.num_classes(); ++k) {
    if (const auto v = iou(conf, k)) {
      sum += *v;
      ++present;
    }
  }
  return present ? sum / present : 0.0;
}

double pixel_accuracy(const ConfusionMatrix& conf) {
  std::int64_t diag = 0;
  for (int k = 0; k < conf.num_classes(); ++k) diag += conf.at(k, k);
  const std::int64_t total = conf.total();
  return total ? static_cast<double>(diag) / static_cast<double>(total) : 0.0;
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (a.shape() != b.shape()) {
    throw DimensionError("psnr: shapes " + a.shape().str() + " and " + b.shape().str() + " differ");
  }
  const auto x = a.to_vector();
  const auto y = b.to_vector();
  double se = 0;
  for (std::size_t i = 0; i < x.size(); ++i) se += (x[i] - y[i]) * (x[i] - y[i]);
  const double mse = se / static_cast<double>(x.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace srda
