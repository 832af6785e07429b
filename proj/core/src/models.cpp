#include "srda/models.hpp"

#include <cmath>
#include <sstream>

#include "srda/error.hpp"
#include "srda/ops.hpp"
#include "srda/random.hpp"

namespace srda {

std::string ScaleRatio::str() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

ScaleRatio ScaleRatio::parse(const std::string& text) {
  try {
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
      std::size_t used = 0;
      const std::int64_t num = std::stoll(text.substr(0, slash), &used);
      const std::int64_t den = std::stoll(text.substr(slash + 1));
      if (used != slash || num <= 0 || den <= 0) throw ValidationError("");
      return {num, den};
    }
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !(v > 0)) throw ValidationError("");
    // Decimal ratios are kept to 1e-6.
    const auto num = static_cast<std::int64_t>(std::llround(v * 1e6));
    std::int64_t a = num, b = 1000000;
    while (b) {
      const std::int64_t t = a % b;
      a = b;
      b = t;
    }
    return {num / a, 1000000 / a};
  } catch (const std::logic_error&) {
  } catch (const ValidationError&) {
  }
  throw ValidationError("invalid scale ratio '" + text + "' (expected e.g. 2 or 10/3)");
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw ValidationError("model.num_classes must be >= 2");
  if (num_classes > 254) throw ValidationError("model.num_classes must be <= 254");
  if (!(scale.num > scale.den) || scale.den <= 0) throw ValidationError("model.scale_ratio must be > 1");
  if (base_channels < 8) throw ValidationError("model.base_channels must be >= 8");
  if (aspp_dilations.empty()) throw ValidationError("model.aspp_dilations must not be empty");
  for (int d : aspp_dilations) {
    if (d < 1) throw ValidationError("model.aspp_dilations entries must be >= 1");
  }
  if (image_channels != 3) throw ValidationError("model.image_channels must be 3");
}

int ModelConfig::decoder_stages() const {
  int stages = 0;
  std::int64_t reach = 1;
  // Smallest k with 2^k >= num / den.
  while (reach * scale.den < scale.num) {
    reach *= 2;
    ++stages;
  }
  return stages;
}

std::vector<int> ModelConfig::decoder_channels() const {
  std::vector<int> out;
  int c = 4 * base_channels;
  for (int i = 0; i < decoder_stages(); ++i) {
    c = std::max(c / 2, 16);
    out.push_back(c);
  }
  return out;
}

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void add_conv(ParamStore& ps, const std::string& name, std::int64_t cout, std::int64_t cin,
              std::int64_t k, std::uint64_t seed) {
  ps.add(name + ".weight", he_uniform(Shape{cout, cin, k, k}, cin * k * k, derive_seed(seed, name_hash(name))));
  ps.add(name + ".bias", Tensor::zeros(Shape{1, cout, 1, 1}));
}

// Transposed convolution weights are (Cin, Cout, k, k).
void add_deconv(ParamStore& ps, const std::string& name, std::int64_t cin, std::int64_t cout,
                std::int64_t k, std::uint64_t seed) {
  ps.add(name + ".weight", he_uniform(Shape{cin, cout, k, k}, cout * k * k, derive_seed(seed, name_hash(name))));
  ps.add(name + ".bias", Tensor::zeros(Shape{1, cout, 1, 1}));
}

Tensor conv(const ParamStore& ps, const std::string& name, const Tensor& x,
            const Conv2dOptions& opts = {}) {
  return conv2d(x, ps.at(name + ".weight"), ps.at(name + ".bias"), opts);
}

Tensor act(const Tensor& x) { return leaky_relu(x, kLeakySlope); }

std::string stage_name(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

}  // namespace

PerceptualNet::PerceptualNet(std::uint64_t seed) {
  add_conv(params_, "phi.conv0", 32, 3, 3, seed);
  add_conv(params_, "phi.conv1", 64, 32, 3, seed);
  add_conv(params_, "phi.conv2", 64, 64, 3, seed);
  params_.set_requires_grad(false);
}

Tensor PerceptualNet::features(const Tensor& image) const {
  const Conv2dOptions s2{2, 1, 1};
  Tensor h = act(conv(params_, "phi.conv0", image, s2));
  h = act(conv(params_, "phi.conv1", h, s2));
  return act(conv(params_, "phi.conv2", h, s2));
}

PerceptualNet PerceptualNet::to(DType dtype) const {
  PerceptualNet out{Empty{}};
  out.params_ = params_.to(dtype);
  out.params_.set_requires_grad(false);
  return out;
}

SrsModel::SrsModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::int64_t base = config_.base_channels;
  const std::uint64_t e_seed = derive_seed(seed, name_hash("E"));
  const std::uint64_t r_seed = derive_seed(seed, name_hash("R"));
  const std::uint64_t s_seed = derive_seed(seed, name_hash("S"));

  add_conv(extractor_, "E.stem", base, config_.image_channels, 3, e_seed);
  for (std::size_t i = 0; i < config_.aspp_dilations.size(); ++i) {
    add_conv(extractor_, "E.block" + std::to_string(i) + ".conv_a", base, base, 3, e_seed);
    add_conv(extractor_, "E.block" + std::to_string(i) + ".conv_b", base, base, 3, e_seed);
  }
  const auto blocks = static_cast<std::int64_t>(config_.aspp_dilations.size());
  add_conv(extractor_, "E.fuse", 4 * base, blocks * base, 1, e_seed);

  std::int64_t c = 4 * base;
  const auto widths = config_.decoder_channels();
  for (std::size_t i = 0; i < widths.size(); ++i) {
    add_deconv(decoder_, stage_name("R.up", i), c, widths[i], 4, r_seed);
    c = widths[i];
  }
  add_conv(decoder_, "R.out", 3, c, 3, r_seed);

  add_conv(seg_head_, "S.lateral_features", base, 4 * base, 1, s_seed);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    add_conv(seg_head_, stage_name("S.lateral", i), base, widths[i], 1, s_seed);
  }
  add_conv(seg_head_, "S.classifier", config_.num_classes, base, 3, s_seed);
}

Tensor SrsModel::extract(const Tensor& image) const {
  const Shape s = image.shape();
  if (s.c != config_.image_channels) {
    throw DimensionError("extractor: expected 3 image channels on axis C, got " + std::to_string(s.c));
  }
  Tensor h = act(conv(extractor_, "E.stem", image, {1, 1, 1}));
  std::vector<Tensor> outputs;
  for (std::size_t i = 0; i < config_.aspp_dilations.size(); ++i) {
    const std::int64_t d = config_.aspp_dilations[i];
    const std::string block = "E.block" + std::to_string(i);
    Tensor r = act(conv(extractor_, block + ".conv_a", h, {1, d, d}));
    r = conv(extractor_, block + ".conv_b", r, {1, d, d});
    h = act(add(h, r));
    outputs.push_back(h);
  }
  return act(conv(extractor_, "E.fuse", concat_channels(outputs)));
}

SrResult SrsModel::super_resolve(const Tensor& features, std::int64_t target_h,
                                 std::int64_t target_w) const {
  const Shape s = features.shape();
  if (target_h < s.h || target_w < s.w) {
    throw DimensionError("sr decoder: target " + std::to_string(target_h) + "x" +
                         std::to_string(target_w) + " is smaller than the input " + s.str());
  }
  SrResult result;
  Tensor h = features;
  for (int i = 0; i < config_.decoder_stages(); ++i) {
    const std::string name = stage_name("R.up", static_cast<std::size_t>(i));
    h = act(conv_transpose2d(h, decoder_.at(name + ".weight"), decoder_.at(name + ".bias"), 2, 1));
    result.pyramid.push_back(h);
  }
  if (h.shape().h != target_h || h.shape().w != target_w) {
    h = resize(h, target_h, target_w, ResizeMode::kBilinear);
  }
  result.image = sigmoid(conv(decoder_, "R.out", h, {1, 1, 1}));
  return result;
}

Tensor SrsModel::segment(const Tensor& features, std::span<const Tensor> pyramid,
                         std::int64_t target_h, std::int64_t target_w) const {
  const int stages = config_.decoder_stages();
  if (!pyramid.empty() && static_cast<int>(pyramid.size()) != stages) {
    throw DimensionError("seg head: pyramid has " + std::to_string(pyramid.size()) +
                         " stages, decoder has " + std::to_string(stages));
  }
  const auto widths = config_.decoder_channels();
  const Shape fs = features.shape();
  Tensor m = conv(seg_head_, "S.lateral_features", features);
  std::int64_t h = fs.h, w = fs.w;
  for (int i = 0; i < stages; ++i) {
    h *= 2;
    w *= 2;
    const std::string name = stage_name("S.lateral", static_cast<std::size_t>(i));
    m = resize(m, h, w, ResizeMode::kBilinear);
    if (pyramid.empty()) {
      m = add_channel_bias(m, seg_head_.at(name + ".bias"));
      continue;
    }
    const Shape ps = pyramid[static_cast<std::size_t>(i)].shape();
    if (ps != Shape{fs.n, widths[static_cast<std::size_t>(i)], h, w}) {
      throw DimensionError("seg head: pyramid stage " + std::to_string(i) + " has shape " +
                           ps.str() + ", expected " +
                           Shape{fs.n, widths[static_cast<std::size_t>(i)], h, w}.str());
    }
    m = add(m, conv(seg_head_, name, pyramid[static_cast<std::size_t>(i)]));
  }
  if (h != target_h || w != target_w) m = resize(m, target_h, target_w, ResizeMode::kBilinear);
  return conv(seg_head_, "S.classifier", act(m), {1, 1, 1});
}

SrsForward SrsModel::forward(const Tensor& source, const Tensor& target_down) const {
  if (source.shape() != target_down.shape()) {
    throw DimensionError("srs forward: source " + source.shape().str() +
                         " and downsampled target " + target_down.shape().str() + " differ");
  }
  const std::int64_t th = config_.scale.up(source.shape().h);
  const std::int64_t tw = config_.scale.up(source.shape().w);
  SrsForward f;
  f.features_source = extract(source);
  f.features_target = extract(target_down);
  f.sr_source = super_resolve(f.features_source, th, tw);
  f.sr_target = super_resolve(f.features_target, th, tw);
  f.logits_source = segment(f.features_source, f.sr_source.pyramid, th, tw);
  f.logits_target = segment(f.features_target, f.sr_target.pyramid, th, tw);
  f.prob_source = softmax_channel(f.logits_source);
  f.prob_target = softmax_channel(f.logits_target);
  return f;
}

SrsModel::Prediction SrsModel::predict(const Tensor& low_res) const {
  const std::int64_t th = config_.scale.up(low_res.shape().h);
  const std::int64_t tw = config_.scale.up(low_res.shape().w);
  const Tensor features = extract(low_res);
  SrResult sr = super_resolve(features, th, tw);
  Tensor logits = segment(features, sr.pyramid, th, tw);
  return {sr.image, logits};
}

ParamStore SrsModel::generator_params() const {
  ParamStore out = sr_params();
  out.merge(seg_head_);
  return out;
}

ParamStore SrsModel::sr_params() const {
  ParamStore out;
  out.merge(extractor_);
  out.merge(decoder_);
  return out;
}

SrsModel SrsModel::to(DType dtype) const {
  SrsModel out = *this;
  out.extractor_ = extractor_.to(dtype);
  out.decoder_ = decoder_.to(dtype);
  out.seg_head_ = seg_head_.to(dtype);
  out.perceptual_ = perceptual_.to(dtype);
  return out;
}

PdcModel::PdcModel(std::uint64_t seed) {
  const std::uint64_t s = derive_seed(seed, name_hash("pdc"));
  add_conv(params_, "pdc.conv0", 64, 3, 4, s);
  add_conv(params_, "pdc.conv1", 128, 64, 4, s);
  add_conv(params_, "pdc.conv2", 256, 128, 4, s);
  add_conv(params_, "pdc.conv3", 512, 256, 4, s);
  add_conv(params_, "pdc.score", 1, 512, 4, s);
}

Tensor PdcModel::forward(const Tensor& image) const {
  const Shape s = image.shape();
  if (s.c != 3) throw DimensionError("pdc: expected 3 channels on axis C, got " + std::to_string(s.c));
  if (s.h < kPdcMinInput || s.w < kPdcMinInput) {
    throw DimensionError("pdc: input " + s.str() + " is smaller than the " +
                         std::to_string(kPdcMinInput) + " px receptive field");
  }
  const Conv2dOptions s2{2, 1, 1};
  Tensor h = act(conv(params_, "pdc.conv0", image, s2));
  h = act(instance_norm(conv(params_, "pdc.conv1", h, s2)));
  h = act(instance_norm(conv(params_, "pdc.conv2", h, s2)));
  h = act(instance_norm(conv(params_, "pdc.conv3", h, s2)));
  // 4x4 stride-1 scoring with asymmetric padding keeps the H / 16 grid.
  return conv(params_, "pdc.score", pad2d(h, 1, 2, 1, 2));
}

PdcModel PdcModel::to(DType dtype) const {
  PdcModel out;
  out.params_ = params_.to(dtype);
  return out;
}

OdcModel::OdcModel(int num_classes, std::uint64_t seed) : num_classes_(num_classes) {
  if (num_classes < 2) throw ValidationError("odc: num_classes must be >= 2");
  const std::uint64_t s = derive_seed(seed, name_hash("odc"));
  add_conv(params_, "odc.conv0", 64, num_classes, 4, s);
  add_conv(params_, "odc.conv1", 128, 64, 4, s);
  add_conv(params_, "odc.conv2", 256, 128, 4, s);
  add_conv(params_, "odc.conv3", 512, 256, 4, s);
  add_conv(params_, "odc.conv4", 1, 512, 4, s);
}

Tensor OdcModel::forward(const Tensor& probabilities) const {
  const Shape s = probabilities.shape();
  if (s.c != num_classes_) {
    throw DimensionError("odc: expected " + std::to_string(num_classes_) +
                         " channels on axis C, got " + std::to_string(s.c));
  }
  if (s.h < kOdcMinInput || s.w < kOdcMinInput) {
    throw DimensionError("odc: input " + s.str() + " is smaller than " + std::to_string(kOdcMinInput) + " px");
  }
  const Conv2dOptions s2{2, 1, 1};
  Tensor h = act(conv(params_, "odc.conv0", probabilities, s2));
  h = act(conv(params_, "odc.conv1", h, s2));
  h = act(conv(params_, "odc.conv2", h, s2));
  h = act(conv(params_, "odc.conv3", h, s2));
  return conv(params_, "odc.conv4", h, s2);
}

OdcModel OdcModel::to(DType dtype) const {
  OdcModel out;
  out.num_classes_ = num_classes_;
  out.params_ = params_.to(dtype);
  return out;
}

}  // namespace srda
