#include "srda/losses.hpp"

#include <cmath>
#include <sstream>

#include "srda/error.hpp"
#include "srda/ops.hpp"

namespace srda {

void LossWeights::validate() const {
  if (!(alpha >= 0) || !std::isfinite(alpha)) throw ValidationError("train.alpha must be a finite value >= 0");
  if (!(beta >= 0) || !std::isfinite(beta)) throw ValidationError("train.beta must be a finite value >= 0");
}

double LossReport::get(std::string_view name) const {
  const double* fields[] = {&seg, &idT, &idS, &fp, &srs, &pdc, &pdc_inv, &odc, &odc_inv, &gen_total, &disc_total};
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return *fields[i];
  }
  throw ValidationError("unknown loss name '" + std::string(name) + "'");
}

bool LossReport::all_finite() const {
  for (auto name : kNames) {
    if (!std::isfinite(get(name))) return false;
  }
  return true;
}

std::string LossReport::str() const {
  std::ostringstream os;
  os.precision(6);
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (i) os << ' ';
    os << kNames[i] << '=' << get(kNames[i]);
  }
  return os.str();
}

Tensor idt_loss(const Tensor& sr_target, const Tensor& target) { return mse_loss(sr_target, target); }

Tensor idt_loss(const SrsModel& model, const Tensor& target) {
  const Shape s = target.shape();
  const Tensor down = resize(target, model.config().scale.down(s.h), model.config().scale.down(s.w),
                             ResizeMode::kBicubic);
  const SrResult sr = model.super_resolve(model.extract(down), s.h, s.w);
  return idt_loss(sr.image, target);
}

Tensor perceptual_loss(const PerceptualNet& phi, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("perceptual_loss: shapes " + a.shape().str() + " and " + b.shape().str() + " differ");
  }
  return mse_loss(phi.features(a), phi.features(b));
}

Tensor fixpoint_loss(const SrsModel& model, const Tensor& source, const Tensor& sr_source) {
  const Shape s = source.shape();
  const Tensor down = resize(sr_source, s.h, s.w, ResizeMode::kBicubic);
  return l1_loss(model.extract(down), model.extract(source));
}

IdsTerms ids_loss(const SrsModel& model, const Tensor& source, const Tensor& sr_source) {
  const Shape hr = sr_source.shape();
  const Tensor up = resize(source, hr.h, hr.w, ResizeMode::kBicubic);
  IdsTerms t;
  t.perceptual = perceptual_loss(model.perceptual(), sr_source, up);
  t.fixpoint = fixpoint_loss(model, source, sr_source);
  t.total = add(t.perceptual, scale(t.fixpoint, 0.5));
  return t;
}

IdsTerms ids_loss(const SrsModel& model, const Tensor& source) {
  const Shape s = source.shape();
  const auto& r = model.config().scale;
  const SrResult sr = model.super_resolve(model.extract(source), r.up(s.h), r.up(s.w));
  return ids_loss(model, source, sr.image);
}

SegTerms seg_loss(const SrsModel& model, const Tensor& source_logits, const Tensor& sr_source,
                  const LabelMap& source_labels) {
  const Shape hr = source_logits.shape();
  const LabelMap up = resize_labels(source_labels, hr.h, hr.w);
  const Tensor down = resize(sr_source, source_labels.h, source_labels.w, ResizeMode::kBicubic);
  SegTerms t;
  t.direct = cross_entropy_2d(source_logits, up);
  t.round_trip = cross_entropy_2d(model.predict(down).logits, up);
  t.total = add(t.direct, t.round_trip);
  return t;
}

SegTerms seg_loss(const SrsModel& model, const Tensor& source, const LabelMap& source_labels) {
  const auto p = model.predict(source);
  return seg_loss(model, p.logits, p.sr_image, source_labels);
}

Tensor srs_loss(const LossWeights& weights, const Tensor& seg, const Tensor& idT, const Tensor& idS) {
  return add(scale(seg, weights.alpha), scale(add(idT, idS), weights.beta));
}

double srs_loss(const LossWeights& weights, double seg, double idT, double idS) {
  return weights.alpha * seg + weights.beta * (idT + idS);
}

AdversarialPair pdc_losses(const Tensor& fake_scores, const Tensor& true_scores) {
  AdversarialPair p;
  p.loss = add(mean(square(add_scalar(fake_scores, -1.0))), mean(square(true_scores)));
  p.inverse = add(mean(square(add_scalar(true_scores, -1.0))), mean(square(fake_scores)));
  return p;
}

AdversarialPair pdc_losses(const PdcModel& pdc, const Tensor& sr_source, const Tensor& target) {
  return pdc_losses(pdc.forward(sr_source), pdc.forward(target));
}

namespace {

Tensor neg_log(const Tensor& p) { return scale(mean(log(clamp_min(p, kLogFloor))), -1.0); }

}  // namespace

AdversarialPair odc_losses(const Tensor& source_scores, const Tensor& target_scores) {
  const Tensor p_true = sigmoid(source_scores);
  const Tensor p_fake = sigmoid(target_scores);
  AdversarialPair p;
  p.loss = add(neg_log(p_fake), neg_log(p_true));
  // 1 - sigmoid(x) = sigmoid(-x) is exact and avoids cancellation.
  p.inverse = add(neg_log(p_true), neg_log(sigmoid(scale(target_scores, -1.0))));
  return p;
}

AdversarialPair odc_losses(const OdcModel& odc, const Tensor& prob_source, const Tensor& prob_target) {
  return odc_losses(odc.forward(prob_source), odc.forward(prob_target));
}

Tensor generator_objective(const Tensor& srs, const Tensor& pdc, const Tensor& odc,
                           const AdversarialFlags& flags) {
  Tensor total = srs;
  if (flags.use_pdc) total = add(total, pdc);
  if (flags.use_odc) total = add(total, odc);
  return total;
}

Tensor discriminator_objective(const Tensor& pdc_inv, const Tensor& odc_inv,
                               const AdversarialFlags& flags) {
  if (flags.use_pdc && flags.use_odc) return add(pdc_inv, odc_inv);
  if (flags.use_pdc) return pdc_inv;
  if (flags.use_odc) return odc_inv;
  const DType dtype = pdc_inv.defined() ? pdc_inv.dtype() : odc_inv.defined() ? odc_inv.dtype() : DType::kFloat32;
  return Tensor::scalar(0.0, dtype);
}

}  // namespace srda
