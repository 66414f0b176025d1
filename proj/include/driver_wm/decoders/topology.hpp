#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "driver_wm/error.hpp"
#include "driver_wm/numerics/tensor.hpp"

namespace dwm {

/// Kinematic graph plus the joint groups used by the ROI penalty and the
/// per-group deviation breakdowns.
struct SkeletonTopology {
  std::size_t num_joints = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::size_t> roi_joints;
  std::vector<std::size_t> hand_joints;
  std::vector<std::size_t> head_joints;

  void validate() const {
    if (num_joints == 0) fail(ErrorCode::kInvalidConfig, "topology has no joints");
    auto check = [&](std::size_t j, const char* what) {
      if (j >= num_joints) {
        fail(ErrorCode::kInvalidConfig,
             std::string(what) + " joint " + std::to_string(j) + " >= K=" + std::to_string(num_joints));
      }
    };
    for (auto [i, j] : edges) {
      check(i, "edge");
      check(j, "edge");
      if (i == j) fail(ErrorCode::kInvalidConfig, "self edge on joint " + std::to_string(i));
    }
    for (auto j : roi_joints) check(j, "roi");
    for (auto j : hand_joints) check(j, "hand");
    for (auto j : head_joints) check(j, "head");
  }

  /// Symmetrically normalized adjacency with self loops,
  /// D^-1/2 (A + I) D^-1/2. With no edges this is the identity.
  Tensor normalized_adjacency() const {
    Tensor a = Tensor::matrix(num_joints, num_joints);
    for (std::size_t i = 0; i < num_joints; ++i) a(i, i) = 1.0;
    for (auto [i, j] : edges) {
      a(i, j) = 1.0;
      a(j, i) = 1.0;
    }
    std::vector<double> deg(num_joints, 0.0);
    for (std::size_t i = 0; i < num_joints; ++i)
      for (std::size_t j = 0; j < num_joints; ++j) deg[i] += a(i, j);
    for (std::size_t i = 0; i < num_joints; ++i)
      for (std::size_t j = 0; j < num_joints; ++j) a(i, j) /= std::sqrt(deg[i] * deg[j]);
    return a;
  }

  std::vector<std::size_t> neighbors(std::size_t joint) const {
    std::vector<std::size_t> out;
    for (auto [i, j] : edges) {
      if (i == joint) out.push_back(j);
      if (j == joint) out.push_back(i);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

/// 17-joint body layout (COCO order): 0 nose, 1-4 eyes/ears, 5-6 shoulders,
/// 7-8 elbows, 9-10 wrists, 11-12 hips, 13-14 knees, 15-16 ankles.
inline SkeletonTopology toy_body_topology() {
  SkeletonTopology t;
  t.num_joints = 17;
  t.edges = {{0, 1},  {0, 2},  {1, 3},   {2, 4},   {0, 5},   {0, 6},   {5, 6},  {5, 7},
             {7, 9},  {6, 8},  {8, 10},  {5, 11},  {6, 12},  {11, 12}, {11, 13}, {13, 15},
             {12, 14}, {14, 16}};
  t.roi_joints = {0, 11, 12};
  t.hand_joints = {9, 10};
  t.head_joints = {0, 1, 2, 3, 4};
  return t;
}

/// Parses lines "edge i j", "roi_joint i", "hand_joint i", "head_joint i".
/// Blank lines and '#' comments are ignored. K is one past the largest index
/// mentioned unless a "joints K" line fixes it.
inline SkeletonTopology parse_topology(std::istream& in) {
  SkeletonTopology t;
  std::size_t declared = 0;
  std::size_t largest = 0;
  bool any = false;
  std::string line;
  std::size_t lineno = 0;
  auto note = [&](std::size_t j) {
    largest = std::max(largest, j);
    any = true;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    auto bad = [&] { fail(ErrorCode::kInvalidConfig, "topology line " + std::to_string(lineno) + ": '" + line + "'"); };
    if (key == "edge") {
      std::size_t i, j;
      if (!(ss >> i >> j)) bad();
      t.edges.emplace_back(i, j);
      note(i);
      note(j);
    } else if (key == "roi_joint" || key == "hand_joint" || key == "head_joint") {
      std::size_t j;
      if (!(ss >> j)) bad();
      note(j);
      auto& group = key == "roi_joint" ? t.roi_joints : (key == "hand_joint" ? t.hand_joints : t.head_joints);
      group.push_back(j);
    } else if (key == "joints") {
      if (!(ss >> declared)) bad();
    } else {
      bad();
    }
  }
  t.num_joints = declared ? declared : (any ? largest + 1 : 0);
  t.validate();
  return t;
}

inline SkeletonTopology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open topology file " + path);
  return parse_topology(in);
}

inline std::string format_topology(const SkeletonTopology& t) {
  std::ostringstream out;
  out << "joints " << t.num_joints << "\n";
  for (auto [i, j] : t.edges) out << "edge " << i << " " << j << "\n";
  for (auto j : t.roi_joints) out << "roi_joint " << j << "\n";
  for (auto j : t.hand_joints) out << "hand_joint " << j << "\n";
  for (auto j : t.head_joints) out << "head_joint " << j << "\n";
  return out.str();
}

}  // namespace dwm
