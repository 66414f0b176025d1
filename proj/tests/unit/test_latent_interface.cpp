#include <gtest/gtest.h>

#include "driver_wm/latent/latent_interface.hpp"
#include "driver_wm/numerics/gradcheck.hpp"
#include "fixtures.hpp"

using namespace dwm;
using dwm::testing::error_code_of;
using dwm::testing::random_matrix;

namespace {

ParameterSet embeddings(std::size_t V, std::size_t D) {
  ParameterSet p;
  add_view_embeddings(p, V, D);
  return p;
}

}  // namespace

TEST(ViewEmbedding, ZeroInitIsIdentity) {
  const auto clips = dwm::testing::tiny_clips();
  const ParameterSet p = embeddings(3, 8);
  const auto seq = build_latent_states(clips[0], ParamView(p, false));
  EXPECT_EQ(seq.internal.value(), internal_features(clips[0]));
  ASSERT_EQ(seq.external.size(), 3u);
  for (std::size_t v = 0; v < 3; ++v) EXPECT_EQ(seq.external[v].value(), external_features(clips[0], v));
}

TEST(ViewEmbedding, AddsSameRowToEveryStep) {
  Rng rng(2);
  ParameterSet p = embeddings(2, 4);
  p.at("view.ext2") = random_matrix(1, 4, rng);
  const Tensor f = random_matrix(5, 4, rng);
  const Tensor out = apply_view_embedding(f, 2, p);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out(r, c), f(r, c) + p.at("view.ext2")(0, c));
}

TEST(ViewEmbedding, DistinctViewsGetDistinctParameters) {
  const ParameterSet p = embeddings(3, 4);
  EXPECT_EQ(p.size(), 4u);
  EXPECT_TRUE(p.contains("view.in"));
  for (std::size_t v = 1; v <= 3; ++v) EXPECT_TRUE(p.contains(view_param_name(v)));
}

TEST(ViewEmbedding, UnknownViewRejected) {
  const ParameterSet p = embeddings(2, 4);
  const Tensor f = Tensor::matrix(1, 4);
  EXPECT_EQ(error_code_of([&] { apply_view_embedding(f, 3, p); }), ErrorCode::kUnknownView);
  const auto clips = dwm::testing::tiny_clips();
  const ParameterSet full = embeddings(3, 8);
  EXPECT_EQ(error_code_of([&] { build_latent_states(clips[0], ParamView(full, false), {0}); }), ErrorCode::kUnknownView);
  EXPECT_EQ(error_code_of([&] { build_latent_states(clips[0], ParamView(full, false), {4}); }), ErrorCode::kUnknownView);
}

TEST(ViewEmbedding, WidthMismatchRejected) {
  const ParameterSet p = embeddings(1, 4);
  EXPECT_EQ(error_code_of([&] { apply_view_embedding(Tensor::matrix(2, 5), 1, p); }), ErrorCode::kShapeMismatch);
  const auto clips = dwm::testing::tiny_clips();
  EXPECT_EQ(error_code_of([&] { build_latent_states(clips[0], ParamView(embeddings(3, 6), false)); }),
            ErrorCode::kShapeMismatch);
}

TEST(Pooling, ArithmeticMeanOverViews) {
  Rng rng(4);
  const Tensor stacked = random_matrix(3, 6, rng);
  const Tensor pooled = pool_external_views(stacked);
  ASSERT_EQ(pooled.rows(), 1u);
  for (std::size_t c = 0; c < 6; ++c) {
    const double want = (stacked(0, c) + stacked(1, c) + stacked(2, c)) / 3.0;
    EXPECT_NEAR(pooled(0, c), want, 1e-15);
  }
}

TEST(Pooling, SingleViewIsIdentity) {
  Rng rng(5);
  const Tensor one = random_matrix(1, 6, rng);
  EXPECT_EQ(pool_external_views(one), one);
  const ad::Var v = ad::constant(random_matrix(4, 6, rng));
  EXPECT_EQ(pool_external_views(std::vector<ad::Var>{v}).value(), v.value());
}

TEST(Pooling, EmptyRejected) {
  EXPECT_EQ(error_code_of([] { pool_external_views(std::vector<ad::Var>{}); }), ErrorCode::kEmptyInput);
  EXPECT_EQ(error_code_of([] { pool_external_views(Tensor::matrix(0, 4)); }), ErrorCode::kEmptyInput);
}

TEST(Pooling, SubsetOfViewsPoolsOnlyThose) {
  const auto clips = dwm::testing::tiny_clips();
  const ParameterSet p = embeddings(3, 8);
  const auto seq = build_latent_states(clips[1], ParamView(p, false), {1, 3});
  ASSERT_EQ(seq.external.size(), 2u);
  const Tensor a = external_features(clips[1], 0), b = external_features(clips[1], 2);
  const Tensor& pooled = seq.external_pooled.value();
  for (std::size_t i = 0; i < pooled.size(); ++i) EXPECT_NEAR(pooled[i], 0.5 * (a[i] + b[i]), 1e-15);
}

TEST(Pooling, ViewOrderDoesNotMatterBeyondRounding) {
  const auto clips = dwm::testing::tiny_clips();
  const ParameterSet p = embeddings(3, 8);
  const Tensor a = build_latent_states(clips[2], ParamView(p, false), {1, 2, 3}).external_pooled.value();
  const Tensor b = build_latent_states(clips[2], ParamView(p, false), {3, 1, 2}).external_pooled.value();
  EXPECT_LE(max_abs_diff(a, b), 1e-14);
}

TEST(LatentStates, GradientReachesEmbeddings) {
  const auto clips = dwm::testing::tiny_clips();
  const ParameterSet p = embeddings(3, 8);
  const ParameterSet g = grad_of_scalar(p, [&](const ParamView& v) {
    const auto seq = build_latent_states(clips[0], v);
    return ad::add(ad::sum(seq.internal), ad::sum(seq.external_pooled));
  });
  const double T = clips[0].dims.T;
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_DOUBLE_EQ(g.at("view.in")(0, c), T);
    for (std::size_t v = 1; v <= 3; ++v) EXPECT_NEAR(g.at(view_param_name(v))(0, c), T / 3.0, 1e-12);
  }
}

TEST(LatentStates, FeaturesAreWidenedExactly) {
  const auto clips = dwm::testing::tiny_clips();
  const Clip& c = clips[0];
  const Tensor f = internal_features(c);
  for (std::size_t t = 0; t < c.dims.T; ++t)
    for (std::size_t d = 0; d < c.dims.D; ++d) EXPECT_EQ(f(t, d), static_cast<double>(c.internal[t * c.dims.D + d]));
  const Tensor e = external_features(c, 2);
  for (std::size_t t = 0; t < c.dims.T; ++t)
    for (std::size_t d = 0; d < c.dims.D; ++d) EXPECT_EQ(e(t, d), c.external_at(t, 2, d));
}
