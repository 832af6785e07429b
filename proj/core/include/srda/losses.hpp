#pragma once

#include <array>
#include <string>
#include <string_view>

#include "srda/models.hpp"
#include "srda/tensor.hpp"

namespace srda {

struct LossWeights {
  double alpha = 2.5;  // segmentation
  double beta = 10.0;  // super-resolution

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// Scalar values of one training step, in metrics CSV order.
struct LossReport {
  double seg = 0;
  double idT = 0;
  double idS = 0;
  double fp = 0;
  double srs = 0;
  double pdc = 0;
  double pdc_inv = 0;
  double odc = 0;
  double odc_inv = 0;
  double gen_total = 0;
  double disc_total = 0;

  static constexpr std::array<std::string_view, 11> kNames{
      "seg", "idT", "idS", "fp", "srs", "pdc", "pdc_inv", "odc", "odc_inv", "gen_total", "disc_total"};

  double get(std::string_view name) const;
  bool all_finite() const;
  std::string str() const;
};

// R(down I_T) against I_T.
Tensor idt_loss(const Tensor& sr_target, const Tensor& target);
// Builds R(down I_T) from the model first.
Tensor idt_loss(const SrsModel& model, const Tensor& target);

Tensor perceptual_loss(const PerceptualNet& phi, const Tensor& a, const Tensor& b);

// L1 between E(bicubic down(sr)) and E(source).
Tensor fixpoint_loss(const SrsModel& model, const Tensor& source, const Tensor& sr_source);

struct IdsTerms {
  Tensor perceptual;
  Tensor fixpoint;
  Tensor total;  // perceptual + 0.5 * fixpoint
};
IdsTerms ids_loss(const SrsModel& model, const Tensor& source, const Tensor& sr_source);
IdsTerms ids_loss(const SrsModel& model, const Tensor& source);

// CE(S(I_S), up A_S) + CE(S(bicubic down R(I_S)), up A_S); labels are
// brought to the SR extent with nearest neighbour.
struct SegTerms {
  Tensor direct;
  Tensor round_trip;
  Tensor total;
};
SegTerms seg_loss(const SrsModel& model, const Tensor& source_logits, const Tensor& sr_source,
                  const LabelMap& source_labels);
SegTerms seg_loss(const SrsModel& model, const Tensor& source, const LabelMap& source_labels);

Tensor srs_loss(const LossWeights& weights, const Tensor& seg, const Tensor& idT, const Tensor& idS);
double srs_loss(const LossWeights& weights, double seg, double idT, double idS);

struct AdversarialPair {
  Tensor loss;     // generator side
  Tensor inverse;  // discriminator side
};

// Least-squares losses on raw PDC scores of I_S^R (fake) and I_T (true).
AdversarialPair pdc_losses(const Tensor& fake_scores, const Tensor& true_scores);
AdversarialPair pdc_losses(const PdcModel& pdc, const Tensor& sr_source, const Tensor& target);

inline constexpr double kLogFloor = 1e-7;

// Cross-entropy losses on raw ODC scores of P_S and P_T, source labelled 1.
// The generator side pushes both maps towards "source"; the inverse trains
// the classifier to tell them apart.
AdversarialPair odc_losses(const Tensor& source_scores, const Tensor& target_scores);
AdversarialPair odc_losses(const OdcModel& odc, const Tensor& prob_source, const Tensor& prob_target);

struct AdversarialFlags {
  bool use_pdc = true;
  bool use_odc = true;
  friend bool operator==(const AdversarialFlags&, const AdversarialFlags&) = default;
};

Tensor generator_objective(const Tensor& srs, const Tensor& pdc, const Tensor& odc,
                           const AdversarialFlags& flags);
Tensor discriminator_objective(const Tensor& pdc_inv, const Tensor& odc_inv,
                               const AdversarialFlags& flags);

}  // namespace srda
