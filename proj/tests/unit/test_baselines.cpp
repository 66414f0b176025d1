#include <gtest/gtest.h>

#include "driver_wm/baselines/variants.hpp"
#include "driver_wm/baselines/zero_velocity.hpp"
#include "fixtures.hpp"

using namespace dwm;
using dwm::testing::error_code_of;
using dwm::testing::micro_corpus;

namespace {

CorpusDims micro_dims() {
  CorpusDims d;
  d.D = 16;
  return d;
}

std::vector<Clip> clips() {
  const Corpus c = micro_corpus(3, 2, 2, 4);
  return c.split(c.manifest.test);
}

Clip with_external_noise(const Clip& c, std::uint64_t seed) {
  Clip out = c;
  Rng rng(seed);
  for (auto& v : out.external) v = static_cast<float>(rng.normal());
  return out;
}

}  // namespace

TEST(ZeroVelocity, RepeatsLastObservedFrame) {
  const Clip c = clips()[0];
  const Tensor s = zero_velocity_predict(c);
  ASSERT_EQ(s.rows(), 5u);
  ASSERT_EQ(s.cols(), 34u);
  for (std::size_t p = 0; p < 5; ++p)
    for (std::size_t k = 0; k < 17; ++k) {
      EXPECT_EQ(s(p, 2 * k), c.x(4, k));
      EXPECT_EQ(s(p, 2 * k + 1), c.y(4, k));
    }
}

TEST(ZeroVelocity, ModelHasNoParametersAndMatchesPredictor) {
  const Clip c = clips()[1];
  const WorldModel m = build_variant(VariantKind::kZeroVelocity, ModelConfig::for_variant(VariantKind::kMain, micro_dims()), 1);
  EXPECT_EQ(m.params().size(), 0u);
  EXPECT_EQ(m.predict_skeleton(c), zero_velocity_predict(c));
  EXPECT_EQ(error_code_of([&] { m.loss_terms(ParamView(m.params(), false), c); }), ErrorCode::kUnsupported);
}

TEST(BuildVariant, KlBetaRules) {
  const ModelConfig base = ModelConfig::for_variant(VariantKind::kMain, micro_dims());
  EXPECT_EQ(build_variant(VariantKind::kKlBottleneck, base, 1).config().weights.beta, kDefaultKlBeta);
  ModelConfig custom = base;
  custom.weights.beta = 0.5;
  EXPECT_EQ(build_variant(VariantKind::kKlBottleneck, custom, 1).config().weights.beta, 0.5);
  EXPECT_EQ(error_code_of([&] { build_variant(VariantKind::kMain, custom, 1); }), ErrorCode::kInvalidConfig);
}

TEST(BuildVariant, SharesNonStructuralSettings) {
  ModelConfig base = ModelConfig::for_variant(VariantKind::kMain, micro_dims());
  base.channels = 8;
  base.weights.phys = 0.25;
  const WorldModel m = build_variant(VariantKind::kRssmGru, base, 1);
  EXPECT_EQ(m.config().variant, VariantKind::kRssmGru);
  EXPECT_EQ(m.config().channels, 8u);
  EXPECT_EQ(m.config().weights.phys, 0.25);
}

TEST(Variants, NamesRoundTrip) {
  for (const auto& [kind, name] : kVariantNames) {
    EXPECT_EQ(parse_variant(name), kind);
    EXPECT_EQ(variant_name(kind), name);
  }
  EXPECT_EQ(error_code_of([] { parse_variant("transformer"); }), ErrorCode::kInvalidConfig);
}

TEST(Variants, EveryVariantForwardsWithFiniteOutputs) {
  const auto cs = clips();
  const ModelConfig base = ModelConfig::for_variant(VariantKind::kMain, micro_dims());
  for (const auto& [kind, name] : kVariantNames) {
    const WorldModel m = build_variant(kind, base, 4);
    const ForwardResult f = m.forward(ParamView(m.params(), false), cs[0]);
    if (variant_traits(kind).pose_head) {
      ASSERT_TRUE(f.skeleton.defined()) << name;
      EXPECT_EQ(f.skeleton.value().rows(), 5u) << name;
      EXPECT_TRUE(f.skeleton.value().all_finite()) << name;
    } else {
      EXPECT_FALSE(f.skeleton.defined()) << name;
    }
    if (variant_traits(kind).trainable) {
      for (std::size_t h = 0; h < 4; ++h) EXPECT_EQ(f.logits[h].value().cols(), kLabelClasses[h]) << name;
      EXPECT_TRUE(std::isfinite(m.objective(ParamView(m.params(), false), cs[0]).total)) << name;
    }
  }
}

TEST(Variants, SingleStreamExternalHeadsSeeZeroLatent) {
  const auto cs = clips();
  const WorldModel m = build_variant(VariantKind::kSingleStream, ModelConfig::for_variant(VariantKind::kMain, micro_dims()), 4);
  const ParamView v(m.params(), false);
  const ForwardResult f = m.forward(v, cs[0]);
  EXPECT_EQ(f.logits[2].value(), m.params().at("head.tcr.b"));
  EXPECT_EQ(f.logits[3].value(), m.params().at("head.vcr.b"));
  EXPECT_EQ(m.forward(v, with_external_noise(cs[0], 9)).skeleton.value(), f.skeleton.value());
}

TEST(Variants, NoExtContextIgnoresExternalStream) {
  const auto cs = clips();
  const WorldModel m = build_variant(VariantKind::kNoExtContext, ModelConfig::for_variant(VariantKind::kMain, micro_dims()), 4);
  const ParamView v(m.params(), false);
  const ForwardResult a = m.forward(v, cs[0]);
  const ForwardResult b = m.forward(v, with_external_noise(cs[0], 9));
  EXPECT_EQ(a.skeleton.value(), b.skeleton.value());
  for (std::size_t h = 0; h < 4; ++h) EXPECT_EQ(a.logits[h].value(), b.logits[h].value());
}

TEST(Variants, MainDependsOnExternalStream) {
  const auto cs = clips();
  const WorldModel m = build_variant(VariantKind::kMain, ModelConfig::for_variant(VariantKind::kMain, micro_dims()), 4);
  const ParamView v(m.params(), false);
  EXPECT_NE(m.forward(v, cs[0]).skeleton.value(), m.forward(v, with_external_noise(cs[0], 9)).skeleton.value());
}

TEST(Variants, StaticPoolingIsConstantOverHorizon) {
  const auto cs = clips();
  const WorldModel m = build_variant(VariantKind::kStaticPooling, ModelConfig::for_variant(VariantKind::kMain, micro_dims()), 4);
  const Tensor s = m.predict_skeleton(cs[0]);
  for (std::size_t p = 1; p < s.rows(); ++p)
    for (std::size_t c = 0; c < s.cols(); ++c) EXPECT_EQ(s(p, c), s(0, c));
  EXPECT_EQ(error_code_of([&] { m.trace(cs[0]); }), ErrorCode::kUnsupported);
}

TEST(Variants, LateFusionDecoderReadsBothStreams) {
  const auto cs = clips();
  const WorldModel m = build_variant(VariantKind::kLateFusion, ModelConfig::for_variant(VariantKind::kMain, micro_dims()), 4);
  EXPECT_EQ(m.params().at("dec.lift.w").rows(), 32u);
  const ParamView v(m.params(), false);
  EXPECT_NE(m.forward(v, cs[0]).skeleton.value(), m.forward(v, with_external_noise(cs[0], 9)).skeleton.value());
}

TEST(Variants, NoPoseHeadHasNoDecoder) {
  const WorldModel m = build_variant(VariantKind::kNoPoseHead, ModelConfig::for_variant(VariantKind::kMain, micro_dims()), 4);
  EXPECT_FALSE(m.params().contains("dec.lift.w"));
  EXPECT_EQ(error_code_of([&] { m.predict_skeleton(clips()[0]); }), ErrorCode::kUnsupported);
}

TEST(Variants, SameSeedSameParameters) {
  const ModelConfig base = ModelConfig::for_variant(VariantKind::kMain, micro_dims());
  for (const auto& [kind, name] : kVariantNames) {
    const WorldModel a = build_variant(kind, base, 11), b = build_variant(kind, base, 11);
    ASSERT_EQ(a.params().size(), b.params().size()) << name;
    for (const auto& e : a.params().entries()) EXPECT_EQ(e.value, b.params().at(e.name)) << name << " " << e.name;
  }
}
