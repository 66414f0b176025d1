#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/numerics/rng.hpp"

namespace dwm {

/// Seeded train/val/test assignment. Ids are sorted, shuffled with the seed,
/// then cut at round(N * cumulative fraction).
inline CorpusManifest split_corpus(std::vector<std::string> ids, std::array<double, 3> fractions,
                                   std::uint64_t seed) {
  if (ids.empty()) fail(ErrorCode::kEmptyInput, "cannot split an empty corpus");
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) fail(ErrorCode::kInvalidConfig, "split fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::kInvalidConfig, "split fractions must sum to 1");

  std::sort(ids.begin(), ids.end());
  Rng rng(mix_seed(seed, hash_key("split")));
  rng.shuffle(ids);

  const double n = static_cast<double>(ids.size());
  const auto cut1 = static_cast<std::size_t>(std::llround(n * fractions[0]));
  const auto cut2 = std::min(ids.size(), static_cast<std::size_t>(std::llround(n * (fractions[0] + fractions[1]))));

  CorpusManifest m;
  m.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cut1));
  m.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(cut1), ids.begin() + static_cast<std::ptrdiff_t>(cut2));
  m.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(cut2), ids.end());
  std::sort(m.train.begin(), m.train.end());
  std::sort(m.val.begin(), m.val.end());
  std::sort(m.test.begin(), m.test.end());
  return m;
}

inline CorpusManifest split_corpus(const std::vector<Clip>& clips, std::array<double, 3> fractions,
                                   std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(clips.size());
  for (const auto& c : clips) ids.push_back(c.id);
  return split_corpus(std::move(ids), fractions, seed);
}

}  // namespace dwm
