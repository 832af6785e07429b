#include "srda/evaluate.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "srda/error.hpp"
#include "srda/ops.hpp"

namespace srda {

Predictor make_predictor(const SrsModel& model) {
  Predictor p;
  p.logits = [&model](const Tensor& low) { return model.predict(low).logits; };
  p.super_resolve = [&model](const Tensor& low, std::int64_t h, std::int64_t w) {
    return model.super_resolve(model.extract(low), h, w).image;
  };
  return p;
}

namespace {

std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  std::int64_t m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

Tensor reflect_window(const Tensor& image, std::int64_t y0, std::int64_t x0, std::int64_t size) {
  const Shape s = image.shape();
  const auto v = image.to_vector();
  std::vector<float> out(static_cast<std::size_t>(s.c * size * size));
  for (std::int64_t c = 0; c < s.c; ++c) {
    for (std::int64_t y = 0; y < size; ++y) {
      const std::int64_t sy = reflect(y0 + y, s.h);
      for (std::int64_t x = 0; x < size; ++x) {
        const std::int64_t sx = reflect(x0 + x, s.w);
        out[static_cast<std::size_t>((c * size + y) * size + x)] = static_cast<float>(v[static_cast<std::size_t>((c * s.h + sy) * s.w + sx)]);
      }
    }
  }
  return Tensor::from_data(Shape{1, s.c, size, size}, std::move(out)).to(image.dtype());
}

std::string format(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

LabelMap sliding_window_infer(const Predictor& predictor, const Tensor& image, const CropSpec& crop) {
  const Shape s = image.shape();
  if (s.n != 1) throw DimensionError("sliding_window_infer: expected one image on axis N, got " + std::to_string(s.n));
  NoGradGuard no_grad;
  const std::int64_t tile = crop.eval_tile;
  LabelMap out(1, s.h, s.w);
  for (std::int64_t y0 = 0; y0 < s.h; y0 += tile) {
    for (std::int64_t x0 = 0; x0 < s.w; x0 += tile) {
      Tensor window = tile == s.h && tile == s.w ? image : reflect_window(image, y0, x0, tile);
      if (crop.eval_resize != tile) window = resize(window, crop.eval_resize, crop.eval_resize, ResizeMode::kBicubic);
      Tensor prob = softmax_channel(predictor.logits(window));
      if (prob.shape().h != tile || prob.shape().w != tile) prob = resize(prob, tile, tile, ResizeMode::kBilinear);
      const LabelMap labels = argmax_channel(prob);
      for (std::int64_t y = 0; y < tile && y0 + y < s.h; ++y) {
        for (std::int64_t x = 0; x < tile && x0 + x < s.w; ++x) out.at(0, y0 + y, x0 + x) = labels.at(0, y, x);
      }
    }
  }
  return out;
}

std::string MetricsReport::csv() const {
  std::string out = "class,iou\n";
  for (std::size_t k = 0; k < classes.size(); ++k) {
    out += classes[k] + "," + (iou[k] ? format(*iou[k]) : std::string("nan")) + "\n";
  }
  out += "miou," + format(miou) + "\n";
  if (psnr_db) out += "psnr_db," + format(*psnr_db) + "\n";
  return out;
}

std::string MetricsReport::table() const {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-16s %8s\n", "class", "IoU");
  os << line;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (iou[k]) {
      std::snprintf(line, sizeof line, "%-16s %7.2f%%\n", classes[k].c_str(), 100.0 * *iou[k]);
    } else {
      std::snprintf(line, sizeof line, "%-16s %8s\n", classes[k].c_str(), "absent");
    }
    os << line;
  }
  std::snprintf(line, sizeof line, "%-16s %7.2f%%\n%-16s %7.2f%%\n", "mIoU", 100.0 * miou, "pixel acc", 100.0 * pixel_accuracy);
  os << line;
  if (psnr_db) {
    std::snprintf(line, sizeof line, "%-16s %7.2f dB\n", "PSNR", *psnr_db);
    os << line;
  }
  if (psnr_bicubic_db) {
    std::snprintf(line, sizeof line, "%-16s %7.2f dB\n", "PSNR bicubic", *psnr_bicubic_db);
    os << line;
  }
  os << "images: " << images << '\n';
  return os.str();
}

MetricsReport evaluate(const Predictor& predictor, const DomainDataset& dataset, const std::string& split,
                       const CropSpec& crop, const ScaleRatio& r, bool with_psnr) {
  const auto items = dataset.select("target", split);
  if (items.empty()) throw ValidationError("dataset '" + dataset.root() + "' has no target images in split '" + split + "'");
  ConfusionMatrix conf(dataset.num_classes());
  double psnr_sum = 0, bicubic_sum = 0;
  NoGradGuard no_grad;
  for (const DatasetItem* item : items) {
    if (item->label.n == 0) throw ValidationError(item->label_path + ": evaluation needs a label");
    const LabelMap pred = sliding_window_infer(predictor, item->image, crop);
    if (pred.h != item->label.h || pred.w != item->label.w) {
      throw DimensionError(item->label_path + ": label size differs from the prediction");
    }
    conf.add(item->label, pred);
    if (with_psnr) {
      if (!predictor.super_resolve) throw ValidationError("evaluate: PSNR requested but the predictor cannot super-resolve");
      const Shape s = item->image.shape();
      const Tensor down = resize(item->image, r.down(s.h), r.down(s.w), ResizeMode::kBicubic);
      const Tensor sr = predictor.super_resolve(down, s.h, s.w);
      psnr_sum += std::min(psnr(sr, item->image), kPsnrCap);
      bicubic_sum += std::min(psnr(resize(down, s.h, s.w, ResizeMode::kBicubic), item->image), kPsnrCap);
    }
  }
  MetricsReport rep;
  rep.classes = dataset.manifest().classes;
  for (int k = 0; k < conf.num_classes(); ++k) rep.iou.push_back(iou(conf, k));
  rep.miou = miou(conf);
  rep.pixel_accuracy = pixel_accuracy(conf);
  rep.images = static_cast<std::int64_t>(items.size());
  if (with_psnr) {
    rep.psnr_db = psnr_sum / static_cast<double>(items.size());
    rep.psnr_bicubic_db = bicubic_sum / static_cast<double>(items.size());
  }
  return rep;
}

MetricsReport evaluate(const SrsModel& model, const DomainDataset& dataset, const std::string& split,
                       const CropSpec& crop, bool with_psnr) {
  return evaluate(make_predictor(model), dataset, split, crop, model.config().scale, with_psnr);
}

}  // namespace srda
