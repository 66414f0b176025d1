#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/data/corpus_io.hpp"
#include "driver_wm/data/normalize.hpp"
#include "driver_wm/data/split.hpp"
#include "driver_wm/data/synth.hpp"
#include "driver_wm/evaluation/metrics.hpp"
#include "driver_wm/model/world_model.hpp"

using namespace dwm;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.dims.D = 8;
  c.num_train = 12;
  c.num_val = 4;
  c.num_test = 4;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dwm_data_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

double future_motion(const Clip& c) { return motion_score(future_skeleton(c), c.frame); }

}  // namespace

TEST(Normalize, CenterOfFrame) {
  const auto p = normalize_coords(960, 540, {1920, 1080});
  EXPECT_EQ(p.x, 0.5);
  EXPECT_EQ(p.y, 0.5);
}

TEST(Normalize, Origin) {
  const auto p = normalize_coords(0, 0, {1920, 1080});
  EXPECT_EQ(p.x, 0.0);
  EXPECT_EQ(p.y, 0.0);
}

TEST(Normalize, FarCorner) {
  const auto p = normalize_coords(1920, 1080, {1920, 1080});
  EXPECT_EQ(p.x, 1.0);
  EXPECT_EQ(p.y, 1.0);
}

TEST(Normalize, InverseRecoversPixels) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-100, 2000), y = rng.uniform(-100, 1200);
    const auto [bx, by] = denormalize_coords(normalize_coords(x, y, {1920, 1080}), {1920, 1080});
    EXPECT_NEAR(bx, x, 1e-12 * std::max(1.0, std::abs(x)));
    EXPECT_NEAR(by, y, 1e-12 * std::max(1.0, std::abs(y)));
  }
}

TEST(Labels, OutOfRangeRejected) {
  LabelSet l;
  l.tcr = 3;
  EXPECT_THROW(l.validate(), Error);
  l.tcr = 2;
  EXPECT_NO_THROW(l.validate());
}

TEST(Synth, SameSeedByteIdentical) {
  const SynthConfig c = small_config();
  const auto a = synth_generate_corpus(c, 42), b = synth_generate_corpus(c, 42);
  EXPECT_EQ(encode_corpus_blob(a.corpus.dims, a.corpus.clips), encode_corpus_blob(b.corpus.dims, b.corpus.clips));
  EXPECT_EQ(a.corpus.manifest, b.corpus.manifest);
  const auto d = synth_generate_corpus(c, 43);
  EXPECT_NE(encode_corpus_blob(a.corpus.dims, a.corpus.clips), encode_corpus_blob(d.corpus.dims, d.corpus.clips));
}

TEST(Synth, LaneCountDoesNotChangeOutput) {
  const SynthConfig c = small_config();
  const auto a = synth_generate_corpus(c, 5, toy_body_topology(), 1);
  const auto b = synth_generate_corpus(c, 5, toy_body_topology(), 3);
  EXPECT_EQ(encode_corpus_blob(a.corpus.dims, a.corpus.clips), encode_corpus_blob(b.corpus.dims, b.corpus.clips));
}

TEST(Synth, ClipsAreValidAndSplitsExhaustive) {
  const SynthConfig c = small_config();
  const auto s = synth_generate_corpus(c, 9);
  ASSERT_EQ(s.corpus.clips.size(), c.num_clips());
  for (const auto& clip : s.corpus.clips) EXPECT_NO_THROW(clip.validate());
  const auto& m = s.corpus.manifest;
  EXPECT_EQ(m.train.size(), c.num_train);
  EXPECT_EQ(m.val.size(), c.num_val);
  EXPECT_EQ(m.test.size(), c.num_test);
  std::set<std::string> all(m.train.begin(), m.train.end());
  all.insert(m.val.begin(), m.val.end());
  all.insert(m.test.begin(), m.test.end());
  EXPECT_EQ(all.size(), c.num_clips());
}

TEST(Synth, InertialCorpusIsNearlyStatic) {
  SynthConfig c = small_config();
  c.event_rate = 0.0;
  const auto s = synth_generate_corpus(c, 11);
  for (const auto& clip : s.corpus.clips) {
    const Tensor pred = future_skeleton(clip);
    // Copy-last-frame error stays at the coordinate-noise floor.
    double worst = 0.0;
    for (std::size_t p = 0; p < clip.dims.T_pred(); ++p)
      for (std::size_t k = 0; k < clip.dims.K; ++k) {
        const double dx = (pred(p, 2 * k) - clip.x(clip.dims.T_obs - 1, k)) * clip.frame.width;
        const double dy = (pred(p, 2 * k + 1) - clip.y(clip.dims.T_obs - 1, k)) * clip.frame.height;
        worst = std::max(worst, std::sqrt(dx * dx + dy * dy));
      }
    EXPECT_LT(worst, 12.0 * c.coord_noise * clip.frame.diagonal());
    EXPECT_EQ(clip.labels.tcr, 0);
  }
}

TEST(Synth, MotionRisesIffReactionInsideFutureWindow) {
  SynthConfig c = small_config();
  c.damping = 0.0;
  c.coord_noise = 0.0;
  const auto topo = toy_body_topology();
  const auto proj = SynthProjections::make(c, topo, 3);
  const std::uint32_t T = c.dims.T, T_obs = c.dims.T_obs, L = c.reaction_lag;
  for (std::uint32_t onset = 1; onset + L <= T + 2; ++onset) {
    const auto base = synth_clip(c, topo, proj, 3, 0, EventOverride{false, 0, 1, false}).first;
    const auto ev = synth_clip(c, topo, proj, 3, 0, EventOverride{true, 0, onset, false}).first;
    const std::uint32_t react = onset + L;
    const bool inside = react >= T_obs + 2 && react <= T;
    if (inside) {
      EXPECT_GT(future_motion(ev), future_motion(base)) << "onset " << onset;
    } else {
      EXPECT_EQ(future_motion(ev), future_motion(base)) << "onset " << onset;
    }
  }
}

TEST(Synth, EventOnsetCorrelatesWithFutureMotion) {
  SynthConfig c;
  c.dims.D = 8;
  c.num_train = 200;
  c.num_val = 0;
  c.num_test = 0;
  auto correlation = [&](double rate) {
    c.event_rate = rate;
    const auto s = synth_generate_corpus(c, 21);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < s.corpus.clips.size(); ++i) {
      const auto& t = s.truths[i];
      const bool in_future = t.has_event && t.reaction_step > c.dims.T_obs && t.reaction_step <= c.dims.T;
      x.push_back(in_future ? 1.0 : 0.0);
      y.push_back(future_motion(s.corpus.clips[i]));
    }
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    return sxx == 0.0 ? 0.0 : sxy / std::sqrt(sxx * syy);
  };
  EXPECT_GT(correlation(0.6), 0.3);
  EXPECT_EQ(correlation(0.0), 0.0);
}

TEST(Synth, TrafficLabelsDependOnlyOnEvents) {
  SynthConfig c = small_config();
  const auto topo = toy_body_topology();
  SynthConfig noisy = c;
  noisy.coord_noise = 0.01;
  noisy.feature_noise = 0.3;
  const auto p1 = SynthProjections::make(c, topo, 4), p2 = SynthProjections::make(noisy, topo, 4);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto a = synth_clip(c, topo, p1, 4, i), b = synth_clip(noisy, topo, p2, 4, i);
    EXPECT_EQ(a.first.labels.tcr, b.first.labels.tcr);
    EXPECT_EQ(a.first.labels.vcr, b.first.labels.vcr);
  }
}

TEST(Synth, InvalidConfigRejected) {
  SynthConfig c = small_config();
  c.event_rate = 1.5;
  EXPECT_THROW(synth_generate_corpus(c, 1), Error);
  c = small_config();
  c.dims.T_obs = c.dims.T;
  EXPECT_THROW(synth_generate_corpus(c, 1), Error);
}

TEST(CorpusIo, RoundTripIsExact) {
  const auto s = synth_generate_corpus(small_config(), 7);
  const auto dir = temp_dir("roundtrip");
  save_corpus(dir.string(), s.corpus);
  const Corpus back = load_corpus(dir.string());
  EXPECT_EQ(back.dims, s.corpus.dims);
  EXPECT_EQ(back.manifest, s.corpus.manifest);
  ASSERT_EQ(back.clips.size(), s.corpus.clips.size());
  for (std::size_t i = 0; i < back.clips.size(); ++i) {
    const Clip &a = back.clips[i], &b = s.corpus.clips[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.coords, b.coords);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_EQ(a.internal, b.internal);
    EXPECT_EQ(a.external, b.external);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.frame, b.frame);
  }
}

TEST(CorpusIo, BlobLayoutHeader) {
  const auto s = synth_generate_corpus(small_config(), 7);
  const std::string blob = encode_corpus_blob(s.corpus.dims, s.corpus.clips);
  EXPECT_EQ(blob.substr(0, 4), "DWM1");
  ByteReader r(blob.substr(4, 28), "header");
  EXPECT_EQ(r.u32(), 1u);
  EXPECT_EQ(r.u32(), s.corpus.clips.size());
  EXPECT_EQ(r.u32(), 10u);
  EXPECT_EQ(r.u32(), 5u);
  EXPECT_EQ(r.u32(), 3u);
  EXPECT_EQ(r.u32(), 8u);
  EXPECT_EQ(r.u32(), 17u);
  const std::size_t T = 10, K = 17, D = 8, V = 3;
  const std::size_t per_clip = T * K * 2 * 4 + T * K + T * D * 4 + T * V * D * 4 + 4 + 8;
  EXPECT_EQ(blob.size(), 32 + per_clip * s.corpus.clips.size());
}

TEST(CorpusIo, CorruptedMagicIsBadMagic) {
  const auto s = synth_generate_corpus(small_config(), 7);
  std::string blob = encode_corpus_blob(s.corpus.dims, s.corpus.clips);
  blob[0] = 'X';
  std::vector<std::string> ids;
  for (const auto& c : s.corpus.clips) ids.push_back(c.id);
  try {
    decode_corpus_blob(blob, ids);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBadMagic);
  }
}

TEST(CorpusIo, WrongVersionIsBadVersion) {
  const auto s = synth_generate_corpus(small_config(), 7);
  std::string blob = encode_corpus_blob(s.corpus.dims, s.corpus.clips);
  blob[4] = 2;
  std::vector<std::string> ids;
  for (const auto& c : s.corpus.clips) ids.push_back(c.id);
  try {
    decode_corpus_blob(blob, ids);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBadVersion);
  }
}

TEST(CorpusIo, ShortPayloadIsTruncated) {
  ByteWriter w;
  w.raw("DWM1", 4);
  for (std::uint32_t v : {1u, 1u, 10u, 5u, 3u, 64u, 136u}) w.u32(v);
  for (int i = 0; i < 100; ++i) w.f32(0.5f);
  try {
    decode_corpus_blob(w.bytes(), {"000000"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTruncated);
  }
}

TEST(CorpusIo, InconsistentHeaderIsHeaderMismatch) {
  ByteWriter w;
  w.raw("DWM1", 4);
  for (std::uint32_t v : {1u, 1u, 10u, 10u, 3u, 64u, 17u}) w.u32(v);
  try {
    decode_corpus_blob(w.bytes(), {"000000"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHeaderMismatch);
  }
}

TEST(CorpusIo, MissingDirectoryIsIoError) {
  try {
    load_corpus("/nonexistent/dwm/corpus");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dwm/corpus"), std::string::npos);
  }
}

TEST(Split, AllTrain) {
  std::vector<std::string> ids;
  for (int i = 0; i < 7; ++i) ids.push_back(clip_id(i));
  const auto m = split_corpus(ids, {1.0, 0.0, 0.0}, 1);
  EXPECT_EQ(m.train.size(), 7u);
  EXPECT_TRUE(m.val.empty());
  EXPECT_TRUE(m.test.empty());
}

TEST(Split, EightOneOne) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back(clip_id(i));
  const auto m = split_corpus(ids, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(m.train.size(), 8u);
  EXPECT_EQ(m.val.size(), 1u);
  EXPECT_EQ(m.test.size(), 1u);
}

TEST(Split, SeededAndOrderIndependent) {
  std::vector<std::string> ids;
  for (int i = 0; i < 20; ++i) ids.push_back(clip_id(i));
  auto reversed = ids;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(split_corpus(ids, {0.6, 0.2, 0.2}, 4), split_corpus(reversed, {0.6, 0.2, 0.2}, 4));
  EXPECT_NE(split_corpus(ids, {0.6, 0.2, 0.2}, 4), split_corpus(ids, {0.6, 0.2, 0.2}, 5));
}

TEST(Split, EmptyCorpusRejected) {
  EXPECT_THROW(split_corpus(std::vector<std::string>{}, {1.0, 0.0, 0.0}, 1), Error);
}

TEST(Split, FractionsMustSumToOne) {
  EXPECT_THROW(split_corpus(std::vector<std::string>{"a", "b"}, {0.5, 0.2, 0.2}, 1), Error);
}

TEST(ClipIds, ZeroPaddedSortOrder) {
  EXPECT_EQ(clip_id(7), "000007");
  EXPECT_LT(clip_id(9), clip_id(10));
}
