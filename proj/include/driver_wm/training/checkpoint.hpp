#pragma once

// Checkpoint file, little-endian:
//   "DWMC", u32 version (=1), u32 tensor count
//   per tensor: u32 name length, name bytes (UTF-8), u32 rank, rank x u64 dims,
//               prod(dims) x f64
// Tensor names:
//   meta.dims   [T, T_obs, V, D, K]
//   meta.arch   [channels, graph_layers, pre_heads, ctx_queries, ctx_rank,
//                ctx_heads, variant, latent_mode]
//   meta.loss   [lat, skel, aux, phys, bone, smooth, seat, beta]
//   meta.roi    [x_min, x_max, y_min, y_max]
//   meta.topology.{edges (E x 2), roi, hands, head}
//   meta.train  [epoch, adam_step, seed_lo32, seed_hi32, val_mpjpe]
//   param.<name>, adam.m.<name>, adam.v.<name>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "driver_wm/data/corpus_io.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/model/world_model.hpp"
#include "driver_wm/training/optimizer.hpp"

namespace dwm {

inline constexpr char kCheckpointMagic[4] = {'D', 'W', 'M', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  ParameterSet params;
  AdamState adam;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
  double val_mpjpe = std::numeric_limits<double>::quiet_NaN();

  WorldModel world_model() const { return WorldModel::from_parameters(model, params); }
};

namespace detail {

inline Tensor index_tensor(const std::vector<std::size_t>& v) {
  std::vector<double> d(v.begin(), v.end());
  return Tensor({v.size()}, std::move(d));
}

inline std::vector<std::size_t> index_vector(const Tensor& t) {
  std::vector<std::size_t> out;
  for (double v : t.storage()) out.push_back(static_cast<std::size_t>(v));
  return out;
}

}  // namespace detail

inline std::vector<std::pair<std::string, Tensor>> checkpoint_tensors(const Checkpoint& c) {
  const ModelConfig& m = c.model;
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("meta.dims", Tensor::row({double(m.dims.T), double(m.dims.T_obs), double(m.dims.V), double(m.dims.D),
                                             double(m.dims.K)}));
  out.emplace_back("meta.arch", Tensor::row({double(m.channels), double(m.graph_layers), double(m.pre_heads),
                                             double(m.ctx_queries), double(m.ctx_rank), double(m.ctx_heads),
                                             double(variant_index(m.variant)), double(static_cast<int>(m.latent_mode))}));
  const LossWeights& w = m.weights;
  out.emplace_back("meta.loss", Tensor::row({w.lat, w.skel, w.aux, w.phys, w.bone, w.smooth, w.seat, w.beta}));
  out.emplace_back("meta.roi", Tensor::row({m.roi.x_min, m.roi.x_max, m.roi.y_min, m.roi.y_max}));
  Tensor edges = Tensor::matrix(m.topology.edges.size(), 2);
  for (std::size_t e = 0; e < m.topology.edges.size(); ++e) {
    edges(e, 0) = static_cast<double>(m.topology.edges[e].first);
    edges(e, 1) = static_cast<double>(m.topology.edges[e].second);
  }
  out.emplace_back("meta.topology.joints", Tensor::row({double(m.topology.num_joints)}));
  out.emplace_back("meta.topology.edges", std::move(edges));
  out.emplace_back("meta.topology.roi", detail::index_tensor(m.topology.roi_joints));
  out.emplace_back("meta.topology.hands", detail::index_tensor(m.topology.hand_joints));
  out.emplace_back("meta.topology.head", detail::index_tensor(m.topology.head_joints));
  out.emplace_back("meta.train", Tensor::row({double(c.epoch), double(c.adam.step), double(c.seed & 0xffffffffULL),
                                              double(c.seed >> 32), c.val_mpjpe}));
  for (const auto& e : c.params.entries()) out.emplace_back("param." + e.name, e.value);
  for (const auto& e : c.adam.m.entries()) out.emplace_back("adam.m." + e.name, e.value);
  for (const auto& e : c.adam.v.entries()) out.emplace_back("adam.v." + e.name, e.value);
  return out;
}

inline std::string encode_checkpoint(const Checkpoint& c) {
  const auto tensors = checkpoint_tensors(c);
  ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    for (double v : t.storage()) w.f64(v);
  }
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::string bytes) {
  ByteReader r(std::move(bytes), "checkpoint");
  if (r.remaining() < 4) fail(ErrorCode::kBadMagic, "checkpoint shorter than magic");
  const std::string magic = r.raw(4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) fail(ErrorCode::kBadMagic, "expected DWMC");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) fail(ErrorCode::kBadVersion, "checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    std::string name = r.raw(len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) fail(ErrorCode::kHeaderMismatch, "tensor '" + name + "' rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = r.u64();
      n *= d;
    }
    if (n > r.remaining() / 8) fail(ErrorCode::kTruncated, "tensor '" + name + "' payload");
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64();
    tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) fail(ErrorCode::kHeaderMismatch, "trailing bytes after checkpoint tensors");

  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& [n, t] : tensors) {
      if (n == name) return t;
    }
    fail(ErrorCode::kHeaderMismatch, "checkpoint lacks '" + name + "'");
  };
  auto expect = [](const Tensor& t, std::size_t n, const char* what) {
    if (t.size() != n) fail(ErrorCode::kHeaderMismatch, std::string("checkpoint ") + what + " has wrong length");
  };

  Checkpoint c;
  ModelConfig& m = c.model;
  const Tensor& dims = find("meta.dims");
  expect(dims, 5, "meta.dims");
  m.dims = {static_cast<std::uint32_t>(dims[0]), static_cast<std::uint32_t>(dims[1]), static_cast<std::uint32_t>(dims[2]),
            static_cast<std::uint32_t>(dims[3]), static_cast<std::uint32_t>(dims[4])};
  const Tensor& arch = find("meta.arch");
  expect(arch, 8, "meta.arch");
  m.channels = static_cast<std::size_t>(arch[0]);
  m.graph_layers = static_cast<std::size_t>(arch[1]);
  m.pre_heads = static_cast<std::size_t>(arch[2]);
  m.ctx_queries = static_cast<std::size_t>(arch[3]);
  m.ctx_rank = static_cast<std::size_t>(arch[4]);
  m.ctx_heads = static_cast<std::size_t>(arch[5]);
  const auto vi = static_cast<std::size_t>(arch[6]);
  if (vi >= kVariantNames.size()) fail(ErrorCode::kHeaderMismatch, "checkpoint variant index");
  m.variant = kVariantNames[vi].first;
  m.latent_mode = arch[7] == 0.0 ? LatentLossMode::kDirect : LatentLossMode::kVelocity;
  const Tensor& loss = find("meta.loss");
  expect(loss, 8, "meta.loss");
  m.weights = {loss[0], loss[1], loss[2], loss[3], loss[4], loss[5], loss[6], loss[7]};
  const Tensor& roi = find("meta.roi");
  expect(roi, 4, "meta.roi");
  m.roi = {roi[0], roi[1], roi[2], roi[3]};
  m.topology = SkeletonTopology{};
  m.topology.num_joints = static_cast<std::size_t>(find("meta.topology.joints")[0]);
  const Tensor& edges = find("meta.topology.edges");
  for (std::size_t e = 0; e < edges.rows() && edges.size() > 0; ++e) {
    m.topology.edges.emplace_back(static_cast<std::size_t>(edges(e, 0)), static_cast<std::size_t>(edges(e, 1)));
  }
  m.topology.roi_joints = detail::index_vector(find("meta.topology.roi"));
  m.topology.hand_joints = detail::index_vector(find("meta.topology.hands"));
  m.topology.head_joints = detail::index_vector(find("meta.topology.head"));
  const Tensor& train = find("meta.train");
  expect(train, 5, "meta.train");
  c.epoch = static_cast<std::uint64_t>(train[0]);
  c.adam.step = static_cast<std::uint64_t>(train[1]);
  c.seed = static_cast<std::uint64_t>(train[2]) | (static_cast<std::uint64_t>(train[3]) << 32);
  c.val_mpjpe = train[4];

  for (const auto& [name, t] : tensors) {
    if (name.rfind("param.", 0) == 0) c.params.add(name.substr(6), t);
    if (name.rfind("adam.m.", 0) == 0) c.adam.m.add(name.substr(7), t);
    if (name.rfind("adam.v.", 0) == 0) c.adam.v.add(name.substr(7), t);
  }
  m.validate();
  // Validates names and shapes against the declared architecture.
  (void)WorldModel::from_parameters(m, c.params);
  if (c.adam.m.size() != c.params.size() || c.adam.v.size() != c.params.size()) {
    fail(ErrorCode::kHeaderMismatch, "checkpoint optimizer moments do not cover the parameters");
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) { write_file(path, encode_checkpoint(c)); }

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace dwm
