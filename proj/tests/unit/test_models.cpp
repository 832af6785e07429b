#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "srda/error.hpp"
#include "srda/losses.hpp"
#include "srda/models.hpp"
#include "srda/ops.hpp"

namespace srda {
namespace {

using test::random_tensor;

ModelConfig config(int classes, ScaleRatio r, int base = 32) {
  ModelConfig c;
  c.num_classes = classes;
  c.scale = r;
  c.base_channels = base;
  return c;
}

std::int64_t conv_size(std::int64_t cout, std::int64_t cin, std::int64_t k) { return cout * cin * k * k + cout; }

// Layer arithmetic written out independently of the model code.
std::int64_t expected_extractor(std::int64_t b, std::int64_t blocks) {
  return conv_size(b, 3, 3) + blocks * 2 * conv_size(b, b, 3) + conv_size(4 * b, blocks * b, 1);
}

TEST(ScaleRatio, ParsesFractionsAndDecimals) {
  EXPECT_EQ(ScaleRatio::parse("10/3"), (ScaleRatio{10, 3}));
  EXPECT_EQ(ScaleRatio::parse("2"), (ScaleRatio{2, 1}));
  EXPECT_EQ(ScaleRatio::parse("2.5"), (ScaleRatio{5, 2}));
  EXPECT_THROW(ScaleRatio::parse("x/3"), ValidationError);
  EXPECT_THROW(ScaleRatio::parse("-2"), ValidationError);
  EXPECT_EQ((ScaleRatio{10, 3}).up(114), 380);
  EXPECT_EQ((ScaleRatio{10, 3}).down(380), 114);
  EXPECT_EQ((ScaleRatio{10, 3}).down(625), 188);
}

TEST(ModelConfig, ValidatesInvariants) {
  EXPECT_NO_THROW(config(2, {10, 3}).validate());
  EXPECT_THROW(config(1, {2, 1}).validate(), ValidationError);
  EXPECT_THROW(config(2, {1, 1}).validate(), ValidationError);
  EXPECT_THROW(config(2, {2, 1}, 4).validate(), ValidationError);
}

TEST(ModelConfig, DecoderStagesAreCeilLog2) {
  EXPECT_EQ(config(2, {2, 1}).decoder_stages(), 1);
  EXPECT_EQ(config(2, {10, 3}).decoder_stages(), 2);
  EXPECT_EQ(config(2, {4, 1}).decoder_stages(), 2);
  EXPECT_EQ(config(2, {9, 2}).decoder_stages(), 3);
  EXPECT_EQ(config(2, {10, 3}, 32).decoder_channels(), (std::vector<int>{64, 32}));
  EXPECT_EQ(config(2, {16, 1}, 8).decoder_channels(), (std::vector<int>{16, 16, 16, 16}));
}

TEST(SrsModel, ParameterCountsMatchLayerArithmetic) {
  for (auto [classes, r, base] : {std::tuple{2, ScaleRatio{10, 3}, 32}, std::tuple{6, ScaleRatio{2, 1}, 32},
                                  std::tuple{4, ScaleRatio{2, 1}, 16}, std::tuple{3, ScaleRatio{9, 2}, 8}}) {
    const ModelConfig c = config(classes, r, base);
    const SrsModel m(c, 0);
    EXPECT_EQ(m.extractor().parameter_count(), expected_extractor(base, 4));
    std::int64_t decoder = 0, head = conv_size(base, 4 * base, 1) + conv_size(classes, base, 3);
    std::int64_t width = 4 * base;
    for (int i = 0; i < c.decoder_stages(); ++i) {
      const std::int64_t next = std::max<std::int64_t>(width / 2, 16);
      decoder += width * next * 16 + next;
      head += conv_size(base, next, 1);
      width = next;
    }
    decoder += conv_size(3, width, 3);
    EXPECT_EQ(m.decoder().parameter_count(), decoder);
    EXPECT_EQ(m.seg_head().parameter_count(), head);
    EXPECT_EQ(m.generator_params().parameter_count(), expected_extractor(base, 4) + decoder + head);
    EXPECT_EQ(m.perceptual().params().parameter_count(),
              conv_size(32, 3, 3) + conv_size(64, 32, 3) + conv_size(64, 64, 3));
  }
}

TEST(SrsModel, PerceptualNetIsFrozenAndOutsideGeneratorParams) {
  const SrsModel m(config(2, {2, 1}, 8), 0);
  for (const auto& [name, t] : m.perceptual().params()) EXPECT_FALSE(t.requires_grad()) << name;
  for (const auto& [name, t] : m.generator_params()) EXPECT_EQ(name.rfind("phi.", 0), std::string::npos);
}

TEST(SrsModel, SameSeedSameParameters) {
  const SrsModel a(config(2, {2, 1}, 8), 5), b(config(2, {2, 1}, 8), 5), c(config(2, {2, 1}, 8), 6);
  EXPECT_EQ(a.extractor().at("E.stem.weight").to_vector(), b.extractor().at("E.stem.weight").to_vector());
  EXPECT_NE(a.extractor().at("E.stem.weight").to_vector(), c.extractor().at("E.stem.weight").to_vector());
  for (const auto& [name, t] : a.generator_params()) {
    if (name.ends_with(".bias")) {
      for (double v : t.to_vector()) EXPECT_EQ(v, 0.0) << name;
    }
  }
}

TEST(SrsModel, ExtractorPreservesExtentAndIsDeterministic) {
  const SrsModel m(config(2, {10, 3}, 32), 1);
  const Tensor x = random_tensor({1, 3, 114, 114}, 1, 0, 1, DType::kFloat32);
  const Tensor f = m.extract(x);
  EXPECT_EQ(f.shape(), (Shape{1, 128, 114, 114}));
  EXPECT_EQ(m.extract(x).to_vector(), f.to_vector());
  EXPECT_THROW(m.extract(Tensor::zeros({1, 1, 8, 8})), DimensionError);
}

TEST(SrsModel, SuperResolvesToTheRationalTargetExtent) {
  const SrsModel mi(config(2, {10, 3}, 8), 1);
  const SrResult a = mi.super_resolve(mi.extract(random_tensor({1, 3, 114, 114}, 2, 0, 1, DType::kFloat32)), 380, 380);
  EXPECT_EQ(a.image.shape(), (Shape{1, 3, 380, 380}));
  ASSERT_EQ(a.pyramid.size(), 2u);
  EXPECT_EQ(a.pyramid[0].shape(), (Shape{1, 16, 228, 228}));
  EXPECT_EQ(a.pyramid[1].shape(), (Shape{1, 16, 456, 456}));
  for (double v : a.image.to_vector()) ASSERT_TRUE(v > 0.0 && v < 1.0);

  const SrsModel vp(config(4, {2, 1}, 8), 1);
  const SrResult b = vp.super_resolve(vp.extract(random_tensor({1, 3, 160, 160}, 3, 0, 1, DType::kFloat32)), 320, 320);
  EXPECT_EQ(b.image.shape(), (Shape{1, 3, 320, 320}));
  EXPECT_THROW(vp.super_resolve(Tensor::zeros({1, 32, 16, 16}), 8, 8), DimensionError);
}

TEST(SrsModel, ZeroFeaturesGiveConstantSigmoidOfBias) {
  const SrsModel m(config(2, {2, 1}, 8), 1);
  const auto img = m.super_resolve(Tensor::zeros({1, 32, 6, 6}), 12, 12).image.to_vector();
  for (double v : img) EXPECT_EQ(v, 0.5);
}

TEST(SrsModel, SegmentationShapesWithAndWithoutPyramid) {
  const SrsModel m(config(2, {10, 3}, 8), 1);
  const Tensor x = random_tensor({2, 3, 114, 114}, 4, 0, 1, DType::kFloat32);
  const Tensor f = m.extract(x);
  const SrResult sr = m.super_resolve(f, 380, 380);
  EXPECT_EQ(m.segment(f, sr.pyramid, 380, 380).shape(), (Shape{2, 2, 380, 380}));
  EXPECT_EQ(m.segment(f, {}, 380, 380).shape(), (Shape{2, 2, 380, 380}));
  std::vector<Tensor> wrong{sr.pyramid[0]};
  EXPECT_THROW(m.segment(f, wrong, 380, 380), DimensionError);
}

TEST(SrsModel, LogitsStayFiniteAndBoundedAcrossSeeds) {
  const ModelConfig c = config(3, {2, 1}, 8);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SrsModel m(c, seed);
    const auto pred = m.predict(random_tensor({1, 3, 12, 12}, seed, 0, 1, DType::kFloat32));
    for (double v : pred.logits.to_vector()) ASSERT_TRUE(std::isfinite(v) && std::abs(v) < 1e4) << seed;
  }
}

TEST(SrsModel, ForwardProducesAlgorithmTensors) {
  const SrsModel m(config(6, {2, 1}, 8), 2);
  const Tensor s = random_tensor({1, 3, 160, 160}, 5, 0, 1, DType::kFloat32);
  const Tensor t = random_tensor({1, 3, 160, 160}, 6, 0, 1, DType::kFloat32);
  const SrsForward f = m.forward(s, t);
  EXPECT_EQ(f.sr_source.image.shape(), (Shape{1, 3, 320, 320}));
  EXPECT_EQ(f.sr_target.image.shape(), (Shape{1, 3, 320, 320}));
  EXPECT_EQ(f.prob_source.shape(), (Shape{1, 6, 320, 320}));
  EXPECT_EQ(f.prob_target.shape(), (Shape{1, 6, 320, 320}));
  for (const Tensor* p : {&f.prob_source, &f.prob_target}) {
    const auto v = p->to_vector();
    for (std::int64_t i = 0; i < 320 * 320; i += 97) {
      double sum = 0;
      for (std::int64_t c = 0; c < 6; ++c) sum += v[static_cast<std::size_t>(c * 320 * 320 + i)];
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
  const LabelMap at = argmax_channel(f.prob_target);
  for (auto v : at.values) ASSERT_LT(v, 6);
  EXPECT_THROW(m.forward(s, Tensor::zeros({1, 3, 80, 80})), DimensionError);
}

TEST(SrsModel, ForwardIsBitwisePure) {
  const SrsModel m(config(2, {2, 1}, 8), 3);
  const Tensor s = random_tensor({2, 3, 16, 16}, 7, 0, 1, DType::kFloat32);
  const auto a = m.forward(s, s), b = m.forward(s, s);
  EXPECT_EQ(a.logits_source.to_vector(), b.logits_source.to_vector());
  EXPECT_EQ(a.sr_target.image.to_vector(), b.sr_target.image.to_vector());
}

TEST(PdcModel, PatchGridIsOneSixteenth) {
  const PdcModel d(1);
  const Tensor x = random_tensor({2, 3, 320, 320}, 8, 0, 1, DType::kFloat32);
  const Tensor y = d.forward(x);
  EXPECT_EQ(y.shape(), (Shape{2, 1, 20, 20}));
  EXPECT_EQ(d.forward(x).to_vector(), y.to_vector());
  EXPECT_EQ(d.forward(Tensor::zeros({1, 3, 64, 64})).shape(), (Shape{1, 1, 4, 4}));
  EXPECT_THROW(d.forward(Tensor::zeros({1, 3, 48, 64})), DimensionError);
}

TEST(PdcModel, ParameterCountMatchesLayerArithmetic) {
  const PdcModel d(0);
  EXPECT_EQ(d.params().parameter_count(), conv_size(64, 3, 4) + conv_size(128, 64, 4) + conv_size(256, 128, 4) +
                                              conv_size(512, 256, 4) + conv_size(1, 512, 4));
}

// Instance normalisation uses whole-plane statistics, so a shift only
// commutes exactly with the network when the statistics are unchanged. A
// 16 px periodic image has that property: shifting it by one period leaves it
// unchanged, so every interior cell must equal its neighbour.
TEST(PdcModel, ShiftingBySixteenPixelsShiftsOneCell) {
  const PdcModel d(2);
  Rng rng(9);
  std::vector<double> tile(3 * 128 * 16);
  for (double& v : tile) v = rng.uniform();
  const std::int64_t w = 256;
  std::vector<double> img(3 * 128 * w);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < 128; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        img[static_cast<std::size_t>((c * 128 + y) * w + x)] = tile[static_cast<std::size_t>((c * 128 + y) * 16 + x % 16)];
  const Tensor full = Tensor::from_data({1, 3, 128, w}, img);
  const PdcModel d64 = d.to(DType::kFloat64);
  const Tensor a = d64.forward(full);
  // The same content shifted 16 px left, built by cropping a wider canvas.
  std::vector<double> wide(3 * 128 * (w + 16));
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < 128; ++y)
      for (std::int64_t x = 0; x < w + 16; ++x)
        wide[static_cast<std::size_t>((c * 128 + y) * (w + 16) + x)] =
            tile[static_cast<std::size_t>((c * 128 + y) * 16 + x % 16)];
  std::vector<double> shifted(3 * 128 * w);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < 128; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        shifted[static_cast<std::size_t>((c * 128 + y) * w + x)] =
            wide[static_cast<std::size_t>((c * 128 + y) * (w + 16) + x + 16)];
  const Tensor b = d64.forward(Tensor::from_data({1, 3, 128, w}, shifted));
  const std::int64_t cells = w / 16;
  for (std::int64_t i = 0; i < 8; ++i)
    for (std::int64_t j = 4; j + 5 < cells; ++j) {
      EXPECT_NEAR(b.at(0, 0, i, j), a.at(0, 0, i, j + 1), 1e-4) << i << "," << j;
    }
}

TEST(OdcModel, PatchGridIsOneThirtySecond) {
  const OdcModel d(6, 1);
  EXPECT_EQ(d.forward(Tensor::full({1, 6, 320, 320}, 1.0 / 6)).shape(), (Shape{1, 1, 10, 10}));
  for (double v : d.forward(Tensor::full({1, 6, 64, 64}, 1.0 / 6)).to_vector()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(d.forward(Tensor::full({1, 4, 64, 64}, 0.25)), DimensionError);
}

TEST(OdcModel, ParameterCountMatchesLayerArithmetic) {
  for (int c : {2, 4, 6}) {
    const OdcModel d(c, 0);
    EXPECT_EQ(d.params().parameter_count(), 64 * c * 16 + 64 + conv_size(128, 64, 4) + conv_size(256, 128, 4) +
                                                conv_size(512, 256, 4) + conv_size(1, 512, 4));
  }
}

TEST(Isolation, GeneratorObjectiveLeavesClassifierGradsAbsent) {
  const SrsModel m(config(2, {2, 1}, 8), 4);
  PdcModel pdc(5);
  OdcModel odc(2, 6);
  const Tensor s = random_tensor({1, 3, 32, 32}, 10, 0, 1, DType::kFloat32);
  const SrsForward f = m.forward(s, s);
  {
    FreezeGuard a(pdc.params()), b(odc.params());
    add(pdc_losses(pdc, f.sr_source.image, f.sr_target.image.detach()).loss,
        odc_losses(odc, f.prob_source, f.prob_target).loss)
        .backward();
  }
  for (const auto& [name, t] : pdc.params()) EXPECT_FALSE(t.has_grad()) << name;
  for (const auto& [name, t] : odc.params()) EXPECT_FALSE(t.has_grad()) << name;
  EXPECT_TRUE(m.extractor().at("E.stem.weight").has_grad());

  // And the other way round with detached generator outputs.
  ParamStore gen = m.generator_params();
  gen.clear_grads();
  const Tensor target = random_tensor({1, 3, 64, 64}, 11, 0, 1, DType::kFloat32);
  const Tensor disc = add(pdc_losses(pdc, f.sr_source.image.detach(), target).inverse,
                          odc_losses(odc, f.prob_source.detach(), f.prob_target.detach()).inverse);
  disc.backward();
  for (const auto& [name, t] : gen) EXPECT_FALSE(t.has_grad()) << name;
  EXPECT_TRUE(pdc.params().at("pdc.conv0.weight").has_grad());
}

}  // namespace
}  // namespace srda
