#include <gtest/gtest.h>

#include <cmath>

#include "driver_wm/baselines/zero_velocity.hpp"
#include "driver_wm/evaluation/evaluate.hpp"
#include "fixtures.hpp"

using namespace dwm;
using dwm::testing::error_code_of;
using dwm::testing::micro_corpus;

namespace {

constexpr FrameSize kFrame{1920, 1080};

ModelConfig micro_model(VariantKind kind) {
  CorpusDims dims;
  dims.D = 16;
  return ModelConfig::for_variant(kind, dims);
}

}  // namespace

TEST(Mpjpe, ThreeFourFiveTriangle) {
  Tensor gt = Tensor::matrix(1, 4, 0.5), pred = gt;
  pred(0, 0) += 3.0 / 1920.0;
  pred(0, 1) += 4.0 / 1080.0;
  const MpjpeResult r = mpjpe(pred, gt, Tensor::matrix(1, 2, 1.0), kFrame);
  EXPECT_NEAR(r.per_horizon[0], 2.5, 1e-9);
  EXPECT_NEAR(r.mean, 2.5, 1e-9);
  EXPECT_EQ(r.count, 2u);
}

TEST(Mpjpe, MaskedJointsExcludedAndHorizonsPooled) {
  Tensor gt = Tensor::matrix(2, 4, 0.5), pred = gt;
  pred(0, 0) += 10.0 / 1920.0;   // row 0 joint 0: 10 px
  pred(0, 2) += 500.0 / 1920.0;  // row 0 joint 1: masked out
  pred(1, 1) += 20.0 / 1080.0;   // row 1 joint 0: 20 px
  pred(1, 3) += 40.0 / 1080.0;   // row 1 joint 1: 40 px
  Tensor mask = Tensor::matrix(2, 2, 1.0);
  mask(0, 1) = 0.0;
  const MpjpeResult r = mpjpe(pred, gt, mask, kFrame);
  EXPECT_NEAR(r.per_horizon[0], 10.0, 1e-9);
  EXPECT_NEAR(r.per_horizon[1], 30.0, 1e-9);
  EXPECT_NEAR(r.mean, 70.0 / 3.0, 1e-9);
}

TEST(Mpjpe, EmptyHorizonIsNanAndEmptyMaskRejected) {
  Tensor mask = Tensor::matrix(2, 2, 1.0);
  mask(1, 0) = mask(1, 1) = 0.0;
  const MpjpeResult r = mpjpe(Tensor::matrix(2, 4), Tensor::matrix(2, 4), mask, kFrame);
  EXPECT_TRUE(std::isnan(r.per_horizon[1]));
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_EQ(error_code_of([] { mpjpe(Tensor::matrix(2, 4), Tensor::matrix(2, 4), Tensor::matrix(2, 2), kFrame); }),
            ErrorCode::kEmptyInput);
  EXPECT_EQ(error_code_of([] { mpjpe(Tensor::matrix(2, 4), Tensor::matrix(2, 4), Tensor::matrix(2, 3), kFrame); }),
            ErrorCode::kShapeMismatch);
}

TEST(Normalized, DiagonalPercent) {
  EXPECT_NEAR(d_nmpjpe(22.0, kFrame), 100.0 * 22.0 / std::sqrt(1920.0 * 1920.0 + 1080.0 * 1080.0), 1e-12);
  EXPECT_NEAR(d_nmpjpe(5.0, FrameSize{3, 4}), 100.0, 1e-12);
}

TEST(Pck, InclusiveThresholdAndEmptyMask) {
  const FrameSize f{3, 4};  // diagonal 5
  Tensor gt = Tensor::matrix(1, 4), pred = gt;
  pred(0, 0) = 0.25 / 3.0;   // 0.25 px: exactly 5% of the diagonal
  pred(0, 2) = 0.26 / 3.0;   // just outside
  const Tensor mask = Tensor::matrix(1, 2, 1.0);
  EXPECT_EQ(pck(pred, gt, mask, f, 0.05), 50.0);
  EXPECT_EQ(pck(pred, gt, mask, f, 0.10), 100.0);
  EXPECT_EQ(pck(pred, gt, Tensor::matrix(1, 2), f, 0.05), 0.0);
  EXPECT_EQ(error_code_of([&] { pck(pred, gt, mask, f, 0.0); }), ErrorCode::kInvalidConfig);
}

TEST(Classification, MacroF1WorkedExample) {
  const std::vector<std::size_t> preds = {0, 0, 1, 2}, labels = {0, 1, 1, 2};
  EXPECT_NEAR(macro_f1(preds, labels, 3), 100.0 * (2.0 / 3.0 + 2.0 / 3.0 + 1.0) / 3.0, 1e-12);
  EXPECT_EQ(accuracy(preds, labels), 75.0);
}

TEST(Classification, AbsentClassScoresZeroAndCounts) {
  EXPECT_EQ(macro_f1({0, 0}, {0, 0}, 2), 50.0);
  EXPECT_EQ(error_code_of([] { macro_f1({}, {}, 2); }), ErrorCode::kEmptyInput);
  EXPECT_EQ(error_code_of([] { macro_f1({3}, {0}, 2); }), ErrorCode::kLabelOutOfRange);
}

TEST(HighMotion, SubsetSizeRoundsUpWithRepresentationGuard) {
  EXPECT_EQ(HmSelection{}.size(609), 61u);
  EXPECT_EQ(HmSelection{}.size(50), 5u);
  EXPECT_EQ(HmSelection{}.size(64), 7u);
  EXPECT_EQ((HmSelection{0.35, 0}.size(20)), 7u);
  EXPECT_EQ((HmSelection{0.1, 4}.size(64)), 4u);
  EXPECT_EQ((HmSelection{0.1, 99}.size(64)), 64u);
  EXPECT_EQ(error_code_of([] { HmSelection{1.5, 0}.size(10); }), ErrorCode::kInvalidConfig);
}

TEST(HighMotion, DescendingScoreTiesByIdAscending) {
  const HmSubset s = hm_subset({{"000003", 5.0}, {"000001", 9.0}, {"000002", 5.0}, {"000000", 1.0}}, HmSelection{0.5, 0});
  EXPECT_EQ(s.ids, (std::vector<std::string>{"000001", "000002"}));
  EXPECT_EQ(s.threshold, 5.0);
}

TEST(HighMotion, MotionScoreOracle) {
  Tensor f = Tensor::matrix(3, 2, 0.5);
  f(1, 0) += 6.0 / 1920.0;
  f(1, 1) += 8.0 / 1080.0;
  // Transitions: 10 px then 10 px back, one joint.
  EXPECT_NEAR(motion_score(f, kFrame), 10.0, 1e-9);
  EXPECT_EQ(error_code_of([] { motion_score(Tensor::matrix(1, 2), kFrame); }), ErrorCode::kInvalidConfig);
}

TEST(Evaluate, ZeroVelocityMatchesIndependentOracle) {
  const Corpus c = micro_corpus();
  const std::vector<Clip> test = c.split(c.manifest.test);
  const WorldModel zv = WorldModel::create(micro_model(VariantKind::kZeroVelocity), 0);
  const MetricsReport r = evaluate(zv, test);
  double total = 0.0;
  std::size_t n = 0;
  std::vector<double> hs(5, 0.0);
  std::vector<std::size_t> hc(5, 0);
  for (const Clip& clip : test) {
    const std::size_t last = clip.dims.T_obs - 1;
    for (std::size_t p = 0; p < 5; ++p)
      for (std::size_t k = 0; k < clip.dims.K; ++k) {
        if (!clip.visible(clip.dims.T_obs + p, k)) continue;
        const double dx = (clip.x(last, k) - clip.x(clip.dims.T_obs + p, k)) * clip.frame.width;
        const double dy = (clip.y(last, k) - clip.y(clip.dims.T_obs + p, k)) * clip.frame.height;
        const double e = std::sqrt(dx * dx + dy * dy);
        total += e;
        ++n;
        hs[p] += e;
        ++hc[p];
      }
  }
  EXPECT_NEAR(r.all.mpjpe, total / n, 1e-9);
  EXPECT_EQ(r.all.joints, n);
  for (std::size_t p = 0; p < 5; ++p) EXPECT_NEAR(r.all.per_horizon[p], hs[p] / hc[p], 1e-9);
  EXPECT_FALSE(r.all.semantic);
}

TEST(Evaluate, HmSubsetIsTopMotionClips) {
  const Corpus c = micro_corpus(3, 4, 2, 20);
  const std::vector<Clip> test = c.split(c.manifest.test);
  const WorldModel zv = WorldModel::create(micro_model(VariantKind::kZeroVelocity), 0);
  const MetricsReport r = evaluate(zv, test);
  ASSERT_EQ(r.hm_subset.ids.size(), 2u);
  EXPECT_EQ(r.hm.clips, 2u);
  std::vector<double> motions;
  for (const Clip& clip : test) motions.push_back(motion_score(future_skeleton(clip), clip.frame));
  std::sort(motions.rbegin(), motions.rend());
  EXPECT_EQ(r.hm_subset.threshold, motions[1]);
  for (const auto& rec : r.records) EXPECT_EQ(rec.hm, rec.motion >= motions[1]);
}

TEST(Evaluate, LaneCountDoesNotChangeReport) {
  const Corpus c = micro_corpus();
  const std::vector<Clip> test = c.split(c.manifest.test);
  const WorldModel m = WorldModel::create(micro_model(VariantKind::kMain), 9);
  EvalOptions one, three;
  three.lanes = 3;
  EXPECT_EQ(report_to_kv(evaluate(m, test, one)).str(), report_to_kv(evaluate(m, test, three)).str());
}

TEST(Evaluate, HorizonMeanIsUnweightedAverage) {
  const Corpus c = micro_corpus();
  const std::vector<Clip> test = c.split(c.manifest.test);
  const WorldModel m = WorldModel::create(micro_model(VariantKind::kMain), 9);
  const auto per = evaluate(m, test).all.per_horizon;
  double want = 0.0;
  for (double v : per) want += v / per.size();
  EXPECT_NEAR(horizon_mean_mpjpe(m, test), want, 1e-12);
}

TEST(Evaluate, SemanticHeadsScoredForTrainableVariants) {
  const Corpus c = micro_corpus();
  const std::vector<Clip> test = c.split(c.manifest.test);
  const WorldModel m = WorldModel::create(micro_model(VariantKind::kMain), 9);
  const MetricsReport r = evaluate(m, test);
  ASSERT_TRUE(r.all.semantic);
  for (std::size_t t = 0; t < 4; ++t) {
    std::vector<std::size_t> p, y;
    for (const auto& rec : r.records) {
      p.push_back(static_cast<std::size_t>(rec.pred[t]));
      y.push_back(static_cast<std::size_t>(rec.label[t]));
    }
    EXPECT_EQ(r.all.heads[t].accuracy, accuracy(p, y));
    EXPECT_EQ(r.all.heads[t].macro_f1, macro_f1(p, y, kLabelClasses[t]));
  }
}

TEST(Evaluate, NoPoseHeadGeometricUnsupported) {
  const Corpus c = micro_corpus();
  const std::vector<Clip> test = c.split(c.manifest.test);
  const WorldModel m = WorldModel::create(micro_model(VariantKind::kNoPoseHead), 9);
  EXPECT_EQ(error_code_of([&] { evaluate(m, test); }), ErrorCode::kUnsupported);
  EvalOptions o;
  o.geometric = false;
  const MetricsReport r = evaluate(m, test, o);
  EXPECT_TRUE(r.all.semantic);
  const KeyValueText kv = report_to_kv(r);
  EXPECT_FALSE(kv.has("all.mpjpe_px"));
  EXPECT_TRUE(kv.has("all.dbr.macro_f1_pct"));
}

TEST(Evaluate, EmptyClipListRejected) {
  const WorldModel m = WorldModel::create(micro_model(VariantKind::kZeroVelocity), 0);
  EXPECT_EQ(error_code_of([&] { evaluate(m, {}); }), ErrorCode::kEmptyInput);
}

TEST(Evaluate, WrongDimsRejected) {
  const Corpus c = micro_corpus();
  const WorldModel m = WorldModel::create(ModelConfig::for_variant(VariantKind::kMain), 1);
  EXPECT_EQ(error_code_of([&] { evaluate(m, c.clips); }), ErrorCode::kHeaderMismatch);
}

TEST(Records, FormatParseRoundTrip) {
  const Corpus c = micro_corpus();
  const std::vector<Clip> test = c.split(c.manifest.test);
  const WorldModel m = WorldModel::create(micro_model(VariantKind::kMain), 9);
  const MetricsReport r = evaluate(m, test);
  const std::string text = format_records(r.records);
  const auto back = parse_records(text);
  ASSERT_EQ(back.size(), r.records.size());
  EXPECT_EQ(format_records(back), text);
  MetricsReport again;
  again.records = back;
  again.geometric = true;
  summarize(again, 5, HmSelection{});
  EXPECT_EQ(again.all.mpjpe, r.all.mpjpe);
  EXPECT_EQ(again.hm.per_horizon, r.hm.per_horizon);
}

TEST(Records, MalformedLineRejected) {
  EXPECT_EQ(error_code_of([] { parse_records("header\nid\t1\t0\n"); }), ErrorCode::kTruncated);
}

TEST(Report, KeyValueFields) {
  const Corpus c = micro_corpus();
  const std::vector<Clip> test = c.split(c.manifest.test);
  const WorldModel m = WorldModel::create(micro_model(VariantKind::kMain), 9);
  const KeyValueText kv = report_to_kv(evaluate(m, test));
  EXPECT_EQ(kv.get("format"), "dwm-metrics-report");
  EXPECT_EQ(kv.get("variant"), "main");
  for (const char* key : {"all.mpjpe_px", "all.mpjpe_h1_px", "all.mpjpe_h5_px", "hm.mpjpe_px", "all.d_nmpjpe_pct",
                          "all.pck05_pct", "all.pck10_pct", "all.head_mpjpe_px", "all.hands_mpjpe_px", "hm.ids",
                          "all.tcr.accuracy_pct"})
    EXPECT_TRUE(kv.has(key)) << key;
  EXPECT_FALSE(kv.has("all.mpjpe_h6_px"));
}
