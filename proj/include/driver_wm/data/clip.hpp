#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "driver_wm/error.hpp"

namespace dwm {

/// Class counts of the four auxiliary tasks.
inline constexpr std::array<std::size_t, 4> kLabelClasses = {7, 5, 3, 5};

enum class Task : std::size_t { kDbr = 0, kDer = 1, kTcr = 2, kVcr = 3 };

inline constexpr const char* task_name(std::size_t t) {
  constexpr const char* names[] = {"dbr", "der", "tcr", "vcr"};
  return names[t];
}

struct LabelSet {
  std::uint8_t dbr = 0;  // driver behaviour, 7 classes
  std::uint8_t der = 0;  // driver emotion, 5 classes
  std::uint8_t tcr = 0;  // traffic context, 3 classes
  std::uint8_t vcr = 0;  // vehicle condition, 5 classes

  std::array<std::uint8_t, 4> as_array() const { return {dbr, der, tcr, vcr}; }

  void validate() const {
    const auto v = as_array();
    for (std::size_t t = 0; t < 4; ++t) {
      if (v[t] >= kLabelClasses[t]) {
        fail(ErrorCode::kLabelOutOfRange, std::string(task_name(t)) + " label " + std::to_string(v[t]));
      }
    }
  }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

struct FrameSize {
  std::uint32_t width = 1920;
  std::uint32_t height = 1080;

  double diagonal() const {
    return std::sqrt(static_cast<double>(width) * width + static_cast<double>(height) * height);
  }
  friend bool operator==(const FrameSize&, const FrameSize&) = default;
};

/// Shape header shared by every clip of a corpus.
struct CorpusDims {
  std::uint32_t T = 10;
  std::uint32_t T_obs = 5;
  std::uint32_t V = 3;
  std::uint32_t D = 64;
  std::uint32_t K = 17;

  std::uint32_t T_pred() const { return T - T_obs; }

  void validate() const {
    if (T_obs < 1 || T_obs >= T) {
      fail(ErrorCode::kInvalidConfig, "need 1 <= T_obs < T, got T_obs=" + std::to_string(T_obs) +
                                          " T=" + std::to_string(T));
    }
    if (V < 1) fail(ErrorCode::kInvalidConfig, "need at least one external view");
    if (D < 1 || K < 1) fail(ErrorCode::kInvalidConfig, "D and K must be positive");
  }
  friend bool operator==(const CorpusDims&, const CorpusDims&) = default;
};

/// One clip. Payloads are stored in binary32 exactly as on disk; model code
/// widens to binary64.
///   coords:   T x K x 2 normalized (x, y)
///   mask:     T x K, 1 = confident joint
///   internal: T x D
///   external: T x V x D
struct Clip {
  std::string id;
  CorpusDims dims;
  std::vector<float> coords;
  std::vector<std::uint8_t> mask;
  std::vector<float> internal;
  std::vector<float> external;
  LabelSet labels;
  FrameSize frame;

  double x(std::size_t t, std::size_t k) const { return coords[(t * dims.K + k) * 2]; }
  double y(std::size_t t, std::size_t k) const { return coords[(t * dims.K + k) * 2 + 1]; }
  bool visible(std::size_t t, std::size_t k) const { return mask[t * dims.K + k] != 0; }
  double internal_at(std::size_t t, std::size_t d) const { return internal[t * dims.D + d]; }
  double external_at(std::size_t t, std::size_t v, std::size_t d) const {
    return external[(t * dims.V + v) * dims.D + d];
  }

  void validate() const {
    dims.validate();
    const std::size_t T = dims.T, K = dims.K, D = dims.D, V = dims.V;
    if (coords.size() != T * K * 2 || mask.size() != T * K || internal.size() != T * D ||
        external.size() != T * V * D) {
      fail(ErrorCode::kShapeMismatch, "clip " + id + " payload sizes disagree with dims");
    }
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        const auto m = mask[t * K + k];
        if (m > 1) fail(ErrorCode::kInvalidConfig, "clip " + id + " mask value " + std::to_string(m));
        if (m == 1 && (x(t, k) < 0.0 || x(t, k) > 1.0 || y(t, k) < 0.0 || y(t, k) > 1.0)) {
          fail(ErrorCode::kInvalidConfig, "clip " + id + " visible joint outside [0,1]");
        }
      }
    }
    for (float v : internal) {
      if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, "clip " + id + " internal features");
    }
    for (float v : external) {
      if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, "clip " + id + " external features");
    }
    labels.validate();
    if (frame.width == 0 || frame.height == 0) fail(ErrorCode::kInvalidConfig, "clip " + id + " frame size");
  }

  friend bool operator==(const Clip&, const Clip&) = default;
};

struct CorpusManifest {
  std::string corpus_id;
  std::string generator_config_hash;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  std::size_t num_clips() const { return train.size() + val.size() + test.size(); }
  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

struct Corpus {
  CorpusDims dims;
  std::vector<Clip> clips;
  CorpusManifest manifest;

  const Clip& by_id(const std::string& id) const {
    for (const auto& c : clips) {
      if (c.id == id) return c;
    }
    fail(ErrorCode::kNotFound, "clip id " + id);
  }

  std::vector<Clip> split(const std::vector<std::string>& ids) const {
    std::vector<Clip> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(by_id(id));
    return out;
  }
};

/// Zero-padded decimal ids keep lexicographic and numeric order aligned.
inline std::string clip_id(std::size_t index) {
  std::string s = std::to_string(index);
  return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

}  // namespace dwm
