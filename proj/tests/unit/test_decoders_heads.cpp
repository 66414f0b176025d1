#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <type_traits>

#include "driver_wm/decoders/heads.hpp"
#include "driver_wm/decoders/skeleton_decoder.hpp"
#include "driver_wm/numerics/gradcheck.hpp"
#include "fixtures.hpp"

using namespace dwm;
using dwm::testing::error_code_of;
using dwm::testing::random_matrix;

static_assert(!std::is_convertible_v<ad::Var, InternalLatent>);
static_assert(!std::is_convertible_v<ad::Var, ExternalLatent>);
static_assert(!std::is_invocable_v<decltype(&classify_internal), const ParamView&, const ExternalLatent&>);
static_assert(!std::is_invocable_v<decltype(&classify_external), const ParamView&, const InternalLatent&>);

namespace {

SkeletonTopology path3() {
  SkeletonTopology t;
  t.num_joints = 3;
  t.edges = {{0, 1}, {1, 2}};
  return t;
}

}  // namespace

TEST(Topology, NoEdgesGivesIdentity) {
  SkeletonTopology t;
  t.num_joints = 4;
  const Tensor a = t.normalized_adjacency();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a(i, j), i == j ? 1.0 : 0.0);
}

TEST(Topology, PathGraphNormalization) {
  const Tensor a = path3().normalized_adjacency();
  // Degrees with self loops: 2, 3, 2.
  EXPECT_NEAR(a(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(a(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(a(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(a(1, 0), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_EQ(a(0, 2), 0.0);
  EXPECT_NEAR(a(2, 2), 0.5, 1e-15);
}

TEST(Topology, ToyBodyIsValidAndSymmetric) {
  const SkeletonTopology t = toy_body_topology();
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(t.num_joints, 17u);
  const Tensor a = t.normalized_adjacency();
  for (std::size_t i = 0; i < 17; ++i)
    for (std::size_t j = 0; j < 17; ++j) EXPECT_EQ(a(i, j), a(j, i));
  EXPECT_EQ(t.neighbors(5), (std::vector<std::size_t>{0, 6, 7, 11}));
}

TEST(Topology, ParseFileFormat) {
  std::istringstream in("# three joints\nedge 0 1\nedge 1 2  # trailing\n\nroi_joint 0\nhand_joint 2\nhead_joint 1\n");
  const SkeletonTopology t = parse_topology(in);
  EXPECT_EQ(t.num_joints, 3u);
  EXPECT_EQ(t.edges.size(), 2u);
  EXPECT_EQ(t.roi_joints, std::vector<std::size_t>{0});
  EXPECT_EQ(t.hand_joints, std::vector<std::size_t>{2});
  EXPECT_EQ(t.head_joints, std::vector<std::size_t>{1});
}

TEST(Topology, DeclaredJointCountAllowsIsolatedJoints) {
  std::istringstream in("joints 5\nedge 0 1\n");
  const SkeletonTopology t = parse_topology(in);
  EXPECT_EQ(t.num_joints, 5u);
  EXPECT_EQ(t.normalized_adjacency()(4, 4), 1.0);
}

TEST(Topology, FormatRoundTrips) {
  const SkeletonTopology t = toy_body_topology();
  std::istringstream in(format_topology(t));
  const SkeletonTopology back = parse_topology(in);
  EXPECT_EQ(back.num_joints, t.num_joints);
  EXPECT_EQ(back.edges, t.edges);
  EXPECT_EQ(back.roi_joints, t.roi_joints);
  EXPECT_EQ(back.hand_joints, t.hand_joints);
  EXPECT_EQ(back.head_joints, t.head_joints);
}

TEST(Topology, MalformedLinesRejectedWithLineNumber) {
  std::istringstream in("edge 0 1\nbone 1 2\n");
  try {
    parse_topology(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream self("edge 1 1\n");
  EXPECT_EQ(error_code_of([&] { parse_topology(self); }), ErrorCode::kInvalidConfig);
  std::istringstream out_of_range("joints 2\nedge 0 3\n");
  EXPECT_EQ(error_code_of([&] { parse_topology(out_of_range); }), ErrorCode::kInvalidConfig);
}

TEST(Topology, MissingFileIsIoError) {
  EXPECT_EQ(error_code_of([] { load_topology("/nonexistent/topology.txt"); }), ErrorCode::kIo);
}

TEST(GraphPropagate, MatchesDenseProductPerFrame) {
  Rng rng(3);
  const Tensor a = toy_body_topology().normalized_adjacency();
  const Tensor h = random_matrix(2 * 17, 5, rng);
  const Tensor out = graph_propagate(ad::constant(h), a).value();
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t i = 0; i < 17; ++i)
      for (std::size_t c = 0; c < 5; ++c) {
        double want = 0.0;
        for (std::size_t j = 0; j < 17; ++j) want += a(i, j) * h(f * 17 + j, c);
        EXPECT_NEAR(out(f * 17 + i, c), want, 1e-14);
      }
}

TEST(GraphPropagate, RowsNotMultipleOfJointsRejected) {
  EXPECT_EQ(error_code_of([] { graph_propagate(ad::constant(Tensor::matrix(4, 2)), path3().normalized_adjacency()); }),
            ErrorCode::kShapeMismatch);
}

TEST(Decoder, OutputShapeAndRange) {
  Rng rng(4);
  DecoderConfig cfg;
  cfg.latent_dim = 8;
  ParameterSet p;
  add_decoder_params(p, cfg, rng);
  const Tensor z = random_matrix(3, 8, rng, 5.0);
  const Tensor out = decode_skeleton(p, cfg, z, toy_body_topology());
  ASSERT_EQ(out.rows(), 3u);
  ASSERT_EQ(out.cols(), 34u);
  for (double v : out.storage()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Decoder, FramesAreDecodedIndependently) {
  Rng rng(5);
  DecoderConfig cfg;
  cfg.latent_dim = 8;
  ParameterSet p;
  add_decoder_params(p, cfg, rng);
  const Tensor z = random_matrix(2, 8, rng);
  Tensor first = Tensor::matrix(1, 8);
  for (std::size_t c = 0; c < 8; ++c) first(0, c) = z(0, c);
  const Tensor both = decode_skeleton(p, cfg, z, toy_body_topology());
  const Tensor one = decode_skeleton(p, cfg, first, toy_body_topology());
  for (std::size_t c = 0; c < 34; ++c) EXPECT_NEAR(both(0, c), one(0, c), 1e-15);
}

TEST(Decoder, ParameterNamesAndShapes) {
  Rng rng(6);
  DecoderConfig cfg;
  ParameterSet p;
  add_decoder_params(p, cfg, rng);
  EXPECT_EQ(p.at("dec.lift.w").shape(), (std::vector<std::size_t>{64, 17 * 16}));
  EXPECT_TRUE(p.contains("dec.gc0.w"));
  EXPECT_TRUE(p.contains("dec.gc1.w"));
  EXPECT_FALSE(p.contains("dec.gc2.w"));
  EXPECT_EQ(p.at("dec.out.w").shape(), (std::vector<std::size_t>{16, 2}));
}

TEST(Decoder, MismatchedTopologyOrLatentRejected) {
  Rng rng(7);
  DecoderConfig cfg;
  cfg.latent_dim = 8;
  ParameterSet p;
  add_decoder_params(p, cfg, rng);
  EXPECT_EQ(error_code_of([&] { decode_skeleton(p, cfg, Tensor::matrix(1, 8), path3()); }), ErrorCode::kShapeMismatch);
  EXPECT_EQ(error_code_of([&] { decode_skeleton(p, cfg, Tensor::matrix(1, 9), toy_body_topology()); }),
            ErrorCode::kShapeMismatch);
}

TEST(Decoder, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  DecoderConfig cfg{4, 3, 4, 2};
  ParameterSet p;
  add_decoder_params(p, cfg, rng);
  p.add("z", random_matrix(2, 4, rng));
  const Tensor adj = path3().normalized_adjacency();
  const Tensor target = random_matrix(2, 6, rng, 0.2);
  const ObjectiveFn fn = [&](const ParamView& v) {
    const ad::Var out = decode_skeleton(v, cfg, v("z"), adj);
    return ScalarObjective{ad::sum(ad::square(ad::sub(out, ad::constant(target)))), {}};
  };
  const auto rep = finite_diff_check(p, fn, 1e-5, 1e-5);
  EXPECT_TRUE(rep.pass) << rep.worst;
}

TEST(Heads, LogitWidthsMatchClassCounts) {
  Rng rng(9);
  ParameterSet p;
  add_head_params(p, 8, rng);
  const ParamView v(p, false);
  const ad::Var z = ad::constant(random_matrix(1, 8, rng));
  const auto in = classify_internal(v, InternalLatent(z));
  const auto ex = classify_external(v, ExternalLatent(z));
  const auto all = all_logits(in, ex);
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(all[t].rows(), 1u);
    EXPECT_EQ(all[t].cols(), kLabelClasses[t]);
  }
}

TEST(Heads, LinearMapOracle) {
  Rng rng(10);
  ParameterSet p;
  add_head_params(p, 6, rng);
  p.at("head.tcr.b") = random_matrix(1, 3, rng);
  const Tensor z = random_matrix(1, 6, rng);
  const Tensor out = classify_external(ParamView(p, false), ExternalLatent(ad::constant(z))).tcr.value();
  for (std::size_t k = 0; k < 3; ++k) {
    double want = p.at("head.tcr.b")(0, k);
    for (std::size_t d = 0; d < 6; ++d) want += z(0, d) * p.at("head.tcr.w")(d, k);
    EXPECT_NEAR(out(0, k), want, 1e-14);
  }
}

TEST(Heads, InternalHeadsNeverTouchExternalParameters) {
  Rng rng(11);
  ParameterSet p;
  add_head_params(p, 6, rng);
  const Tensor z = random_matrix(1, 6, rng);
  const ParameterSet g = grad_of_scalar(p, [&](const ParamView& v) {
    const auto in = classify_internal(v, InternalLatent(ad::constant(z)));
    return ad::add(ad::sum(ad::square(in.dbr)), ad::sum(ad::square(in.der)));
  });
  for (const char* n : {"head.tcr.w", "head.tcr.b", "head.vcr.w", "head.vcr.b"})
    for (double x : g.at(n).storage()) EXPECT_EQ(x, 0.0) << n;
  double touched = 0.0;
  for (double x : g.at("head.dbr.w").storage()) touched += std::abs(x);
  EXPECT_GT(touched, 0.0);
}
