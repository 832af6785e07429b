#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "srda/losses.hpp"
#include "srda/models.hpp"
#include "srda/ops.hpp"
#include "srda/train.hpp"

namespace srda::test {
namespace {

ModelConfig small_config(int classes = 2) {
  ModelConfig c;
  c.num_classes = classes;
  c.base_channels = 8;
  return c;
}

Tensor filled(const Shape& s, double v) { return Tensor::full(s, v, DType::kFloat64); }

double scalar_mse(const Tensor& a, const Tensor& b) {
  const auto x = a.to_vector(), y = b.to_vector();
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

double scalar_l1(const Tensor& a, const Tensor& b) {
  const auto x = a.to_vector(), y = b.to_vector();
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::fabs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

// Classifier that ignores its input and always emits the given logits.
void constant_classifier(SrsModel& model, const std::vector<double>& logits) {
  auto& w = model.seg_head().at("S.classifier.weight");
  for (double& v : w.mutable_data<double>()) v = 0.0;
  auto b = model.seg_head().at("S.classifier.bias").mutable_data<double>();
  for (std::size_t i = 0; i < logits.size(); ++i) b[i] = logits[i];
}

// --- PDC -----------------------------------------------------------------

TEST(PdcLosses, HalfScores) {
  const auto p = pdc_losses(filled({2, 1, 3, 3}, 0.5), filled({2, 1, 3, 3}, 0.5));
  EXPECT_DOUBLE_EQ(p.loss.item(), 0.5);
  EXPECT_DOUBLE_EQ(p.inverse.item(), 0.5);
}

TEST(PdcLosses, PerfectDiscriminator) {
  const auto p = pdc_losses(filled({1, 1, 4, 4}, 0.0), filled({1, 1, 4, 4}, 1.0));
  EXPECT_DOUBLE_EQ(p.loss.item(), 2.0);
  EXPECT_DOUBLE_EQ(p.inverse.item(), 0.0);
}

TEST(PdcLosses, SwapIdentity) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor a = random_tensor({2, 1, 5, 5}, seed, -2, 2);
    const Tensor b = random_tensor({2, 1, 5, 5}, seed + 50, -2, 2);
    EXPECT_DOUBLE_EQ(pdc_losses(a, b).loss.item(), pdc_losses(b, a).inverse.item());
    EXPECT_DOUBLE_EQ(pdc_losses(a, b).inverse.item(), pdc_losses(b, a).loss.item());
  }
}

TEST(PdcLosses, ScalarOracle) {
  const Tensor f = random_tensor({2, 1, 3, 4}, 1, -2, 2), t = random_tensor({2, 1, 3, 4}, 2, -2, 2);
  const auto fv = f.to_vector(), tv = t.to_vector();
  double loss = 0, inv = 0;
  for (std::size_t i = 0; i < fv.size(); ++i) {
    loss += (fv[i] - 1) * (fv[i] - 1) + tv[i] * tv[i];
    inv += (tv[i] - 1) * (tv[i] - 1) + fv[i] * fv[i];
  }
  const auto p = pdc_losses(f, t);
  EXPECT_NEAR(p.loss.item(), loss / fv.size(), 1e-12);
  EXPECT_NEAR(p.inverse.item(), inv / fv.size(), 1e-12);
}

// One cell where fake and true samples coincide: the least-squares optimum of
// the discriminator is 0.5.
TEST(PdcLosses, LeastSquaresOptimum) {
  Tensor s = filled({1, 1, 1, 1}, -0.7);
  s.set_requires_grad(true);
  for (int it = 0; it < 200; ++it) {
    s.clear_grad();
    pdc_losses(s, s).inverse.backward();
    s.mutable_data<double>()[0] -= 0.1 * s.grad().item();
  }
  EXPECT_NEAR(s.item(), 0.5, 1e-9);
}

// --- ODC -----------------------------------------------------------------

TEST(OdcLosses, ZeroScores) {
  const auto p = odc_losses(filled({1, 1, 2, 2}, 0.0), filled({1, 1, 2, 2}, 0.0));
  EXPECT_NEAR(p.loss.item(), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(p.inverse.item(), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(p.loss.item(), 1.386294, 1e-6);
}

TEST(OdcLosses, GeneratorOptimalLimit) {
  const auto p = odc_losses(filled({1, 1, 2, 2}, 40.0), filled({1, 1, 2, 2}, 40.0));
  EXPECT_LT(p.loss.item(), 1e-12);
}

TEST(OdcLosses, ClampKeepsExtremesFinite) {
  const auto p = odc_losses(filled({1, 1, 2, 2}, -1e4), filled({1, 1, 2, 2}, 1e4));
  EXPECT_TRUE(std::isfinite(p.loss.item()));
  EXPECT_TRUE(std::isfinite(p.inverse.item()));
  EXPECT_NEAR(p.inverse.item(), -2 * std::log(kLogFloor), 1e-6);
}

TEST(OdcLosses, PerCellOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor s = random_tensor({2, 1, 3, 3}, seed, -4, 4), t = random_tensor({2, 1, 3, 3}, seed + 9, -4, 4);
    const auto sv = s.to_vector(), tv = t.to_vector();
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    double true_src = 0, fake_tgt = 0, inv_tgt = 0;
    for (std::size_t i = 0; i < sv.size(); ++i) {
      true_src += -std::log(sig(sv[i]));
      fake_tgt += -std::log(sig(tv[i]));
      inv_tgt += -std::log(1.0 - sig(tv[i]));
    }
    const double n = static_cast<double>(sv.size());
    const auto p = odc_losses(s, t);
    EXPECT_NEAR(p.loss.item(), (fake_tgt + true_src) / n, 1e-10);
    EXPECT_NEAR(p.inverse.item(), (true_src + inv_tgt) / n, 1e-10);
  }
}

// --- composition ---------------------------------------------------------

TEST(SrsLoss, Compositions) {
  const LossWeights defaults{2.5, 10.0};
  EXPECT_DOUBLE_EQ(srs_loss(defaults, 1, 1, 1), 22.5);
  EXPECT_DOUBLE_EQ(srs_loss(defaults, filled({1, 1, 1, 1}, 1), filled({1, 1, 1, 1}, 1), filled({1, 1, 1, 1}, 1)).item(),
                   22.5);
  EXPECT_DOUBLE_EQ(srs_loss({0, 0}, 3.0, 4.0, 5.0), 0.0);
  const LossWeights vai{5.0, 10.0};
  const double a = 0.31, b = 1.7, c = 0.04;
  EXPECT_DOUBLE_EQ(srs_loss(vai, a, b, c), 5 * a + 10 * (b + c));
  EXPECT_NEAR(srs_loss(vai, filled({1, 1, 1, 1}, a), filled({1, 1, 1, 1}, b), filled({1, 1, 1, 1}, c)).item(),
              5 * a + 10 * (b + c), 1e-12);
}

TEST(LossWeights, Validation) {
  EXPECT_NO_THROW((LossWeights{0, 0}.validate()));
  EXPECT_THROW((LossWeights{-1, 1}.validate()), ValidationError);
  EXPECT_THROW((LossWeights{1, NAN}.validate()), ValidationError);
}

TEST(Objectives, AllOnes) {
  const Tensor one = filled({1, 1, 1, 1}, 1.0);
  EXPECT_DOUBLE_EQ(generator_objective(one, one, one, {true, true}).item(), 3.0);
  EXPECT_DOUBLE_EQ(discriminator_objective(one, one, {true, true}).item(), 2.0);
}

TEST(Objectives, Flags) {
  const Tensor srs = filled({1, 1, 1, 1}, 1.5), pdc = filled({1, 1, 1, 1}, 0.25), odc = filled({1, 1, 1, 1}, 2.0);
  EXPECT_DOUBLE_EQ(generator_objective(srs, pdc, odc, {false, true}).item(), 1.5 + 2.0);
  EXPECT_DOUBLE_EQ(generator_objective(srs, pdc, odc, {true, false}).item(), 1.5 + 0.25);
  EXPECT_DOUBLE_EQ(generator_objective(srs, pdc, odc, {false, false}).item(), 1.5);
  EXPECT_DOUBLE_EQ(discriminator_objective(pdc, odc, {false, true}).item(), 2.0);
  EXPECT_DOUBLE_EQ(discriminator_objective(pdc, odc, {true, false}).item(), 0.25);
  EXPECT_DOUBLE_EQ(discriminator_objective(pdc, odc, {false, false}).item(), 0.0);
}

TEST(LossReport, NamesAndLookup) {
  LossReport r;
  r.odc_inv = 4.0;
  EXPECT_EQ(r.get("odc_inv"), 4.0);
  EXPECT_TRUE(r.all_finite());
  r.seg = NAN;
  EXPECT_FALSE(r.all_finite());
  EXPECT_THROW(r.get("nope"), ValidationError);
  EXPECT_EQ(LossReport::kNames.front(), "seg");
  EXPECT_EQ(LossReport::kNames.back(), "disc_total");
}

// --- reconstruction terms ------------------------------------------------

TEST(IdtLoss, ClosedForms) {
  const Tensor t = random_tensor({1, 3, 6, 6}, 3, 0, 1);
  EXPECT_DOUBLE_EQ(idt_loss(t, t).item(), 0.0);
  EXPECT_NEAR(idt_loss(add_scalar(t, 0.125), t).item(), 0.125 * 0.125, 1e-15);
  const Tensor r = random_tensor({1, 3, 6, 6}, 4, 0, 1);
  EXPECT_NEAR(idt_loss(r, t).item(), scalar_mse(r, t), 1e-14);
}

TEST(IdtLoss, ModelMatchesManualReconstruction) {
  SrsModel model = SrsModel(small_config(), 1).to(DType::kFloat64);
  const Tensor target = random_tensor({1, 3, 32, 32}, 7, 0, 1);
  const Tensor down = resize(target, 16, 16, ResizeMode::kBicubic);
  const Tensor sr = model.super_resolve(model.extract(down), 32, 32).image;
  EXPECT_NEAR(idt_loss(model, target).item(), scalar_mse(sr, target), 1e-12);
}

TEST(PerceptualLoss, Properties) {
  const PerceptualNet phi = PerceptualNet().to(DType::kFloat64);
  const Tensor a = random_tensor({1, 3, 16, 16}, 1, 0, 1), b = random_tensor({1, 3, 16, 16}, 2, 0, 1);
  EXPECT_DOUBLE_EQ(perceptual_loss(phi, a, a).item(), 0.0);
  EXPECT_DOUBLE_EQ(perceptual_loss(phi, a, b).item(), perceptual_loss(phi, b, a).item());
  EXPECT_NEAR(perceptual_loss(phi, a, b).item(), scalar_mse(phi.features(a), phi.features(b)), 1e-14);
  EXPECT_THROW(perceptual_loss(phi, a, random_tensor({1, 3, 8, 8}, 3)), DimensionError);
}

TEST(FixpointLoss, ConstantRoundTrip) {
  SrsModel model = SrsModel(small_config(), 2).to(DType::kFloat64);
  const Tensor source = filled({1, 3, 12, 12}, 0.37);
  const Tensor up = resize(source, 24, 24, ResizeMode::kBicubic);
  EXPECT_NEAR(fixpoint_loss(model, source, up).item(), 0.0, 1e-14);
}

TEST(FixpointLoss, L1Homogeneity) {
  const Tensor a = random_tensor({1, 4, 5, 5}, 1), b = random_tensor({1, 4, 5, 5}, 2);
  const double base = l1_loss(b, a).item();
  for (double k : {0.5, 2.0, 7.0}) {
    const Tensor scaled = add(a, scale(sub(b, a), k));
    EXPECT_NEAR(l1_loss(scaled, a).item(), k * base, 1e-12);
  }
}

TEST(FixpointLoss, ScalarOracle) {
  SrsModel model = SrsModel(small_config(), 3).to(DType::kFloat64);
  const Tensor source = random_tensor({1, 3, 12, 12}, 5, 0, 1);
  const Tensor sr = random_tensor({1, 3, 24, 24}, 6, 0, 1);
  const Tensor fa = model.extract(resize(sr, 12, 12, ResizeMode::kBicubic));
  const Tensor fb = model.extract(source);
  EXPECT_NEAR(fixpoint_loss(model, source, sr).item(), scalar_l1(fa, fb), 1e-13);
}

TEST(IdsLoss, Composition) {
  SrsModel model = SrsModel(small_config(), 4).to(DType::kFloat64);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Tensor source = random_tensor({1, 3, 12, 12}, seed, 0, 1);
    const IdsTerms t = ids_loss(model, source);
    EXPECT_NEAR(t.total.item(), t.perceptual.item() + 0.5 * t.fixpoint.item(), 1e-12);

    const Tensor sr = model.super_resolve(model.extract(source), 24, 24).image;
    const Tensor up = resize(source, 24, 24, ResizeMode::kBicubic);
    const double p = perceptual_loss(model.perceptual(), sr, up).item();
    const double f = fixpoint_loss(model, source, sr).item();
    EXPECT_NEAR(t.total.item(), p + 0.5 * f, 1e-6 * (p + f));
  }
}

TEST(IdsLoss, ZeroWhenBothComponentsVanish) {
  SrsModel model = SrsModel(small_config(), 5).to(DType::kFloat64);
  const Tensor source = filled({1, 3, 12, 12}, 0.6);
  const Tensor up = resize(source, 24, 24, ResizeMode::kBicubic);
  EXPECT_NEAR(ids_loss(model, source, up).total.item(), 0.0, 1e-14);
}

// --- segmentation --------------------------------------------------------

TEST(SegLoss, PerfectPrediction) {
  SrsModel model = SrsModel(small_config(), 6).to(DType::kFloat64);
  constant_classifier(model, {0.0, 30.0});
  LabelMap labels(1, 12, 12);
  for (auto& v : labels.values) v = 1;
  const SegTerms t = seg_loss(model, random_tensor({1, 3, 12, 12}, 1, 0, 1), labels);
  EXPECT_LT(t.total.item(), 1e-5);
}

TEST(SegLoss, IdenticalBranchesDouble) {
  SrsModel model = SrsModel(small_config(3), 7).to(DType::kFloat64);
  constant_classifier(model, {0.3, -0.2, 1.1});
  const LabelMap labels = random_labels(1, 12, 12, 3, 8);
  const SegTerms t = seg_loss(model, random_tensor({1, 3, 12, 12}, 2, 0, 1), labels);
  EXPECT_EQ(t.direct.item(), t.round_trip.item());
  EXPECT_EQ(t.total.item(), 2.0 * t.direct.item());
}

TEST(SegLoss, ManualTwoTermEvaluation) {
  SrsModel model = SrsModel(small_config(3), 8).to(DType::kFloat64);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Tensor source = random_tensor({2, 3, 12, 12}, seed, 0, 1);
    const LabelMap labels = random_labels(2, 12, 12, 3, seed + 1);
    const auto direct = model.predict(source);
    const LabelMap up = resize_labels(labels, 24, 24);
    const auto again = model.predict(resize(direct.sr_image, 12, 12, ResizeMode::kBicubic));
    const double expected = cross_entropy_2d(direct.logits, up).item() + cross_entropy_2d(again.logits, up).item();
    EXPECT_NEAR(seg_loss(model, source, labels).total.item(), expected, 1e-12);
  }
}

// --- whole-batch properties ----------------------------------------------

TEST(Losses, NonNegativeOverRandomBatches) {
  SrsModel model(small_config(), 9);
  PdcModel pdc(10);
  OdcModel odc(2, 11);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    TrainingBatch b;
    b.source = random_tensor({1, 3, 32, 32}, seed, 0, 1, DType::kFloat32);
    b.target = random_tensor({1, 3, 64, 64}, seed + 1000, 0, 1, DType::kFloat32);
    b.target_down = resize(b.target, 32, 32, ResizeMode::kBicubic);
    b.source_labels = random_labels(1, 32, 32, 2, seed);
    NoGradGuard no_grad;
    const GeneratorPass g = generator_pass(model, pdc, odc, b, {2.5, 10.0}, {true, true});
    for (const Tensor* t : {&g.idT, &g.perceptual, &g.fp, &g.idS, &g.seg, &g.srs, &g.pdc, &g.odc, &g.total}) {
      EXPECT_GE(t->item(), 0.0) << "seed " << seed;
    }
    const auto pi = pdc_losses(pdc, g.forward.sr_source.image, b.target);
    const auto oi = odc_losses(odc, g.forward.prob_source, g.forward.prob_target);
    EXPECT_GE(pi.inverse.item(), 0.0);
    EXPECT_GE(oi.inverse.item(), 0.0);
  }
}

TEST(Losses, GeneratorTotalMatchesRecomputedParts) {
  SrsModel model = SrsModel(small_config(), 12).to(DType::kFloat64);
  PdcModel pdc = PdcModel(13).to(DType::kFloat64);
  OdcModel odc = OdcModel(2, 14).to(DType::kFloat64);
  TrainingBatch b;
  b.source = random_tensor({2, 3, 32, 32}, 1, 0, 1);
  b.target = random_tensor({2, 3, 64, 64}, 2, 0, 1);
  b.target_down = resize(b.target, 32, 32, ResizeMode::kBicubic);
  b.source_labels = random_labels(2, 32, 32, 2, 3);
  const LossWeights w{2.5, 10.0};
  NoGradGuard no_grad;
  const GeneratorPass g = generator_pass(model, pdc, odc, b, w, {true, true});

  const double idt = idt_loss(model, b.target).item();
  const double ids = ids_loss(model, b.source).total.item();
  const double seg = seg_loss(model, b.source, b.source_labels).total.item();
  const auto f = model.forward(b.source, b.target_down);
  const double adv_pdc = pdc_losses(pdc, f.sr_source.image, b.target).loss.item();
  const double adv_odc = odc_losses(odc, f.prob_source, f.prob_target).loss.item();
  const double expected = srs_loss(w, seg, idt, ids) + adv_pdc + adv_odc;
  EXPECT_NEAR(g.total.item(), expected, 1e-6 * expected);
  EXPECT_NEAR(g.srs.item(), srs_loss(w, seg, idt, ids), 1e-6 * expected);

  const GeneratorPass no_pdc = generator_pass(model, pdc, odc, b, w, {false, true});
  EXPECT_NEAR(no_pdc.total.item(), srs_loss(w, seg, idt, ids) + adv_odc, 1e-6 * expected);
}

}  // namespace
}  // namespace srda::test
