#pragma once

#include <string>

#include "driver_wm/decoders/topology.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/numerics/autodiff.hpp"
#include "driver_wm/numerics/nn.hpp"
#include "driver_wm/numerics/parameter_set.hpp"

namespace dwm {

struct DecoderConfig {
  std::size_t latent_dim = 64;
  std::size_t num_joints = 17;
  std::size_t channels = 16;
  std::size_t graph_layers = 2;
};

/// dec.lift.{w,b}: latent -> K*C; dec.gc<l>.{w,b}: C -> C; dec.out.{w,b}: C -> 2.
inline void add_decoder_params(ParameterSet& params, const DecoderConfig& cfg, Rng& rng) {
  const std::size_t KC = cfg.num_joints * cfg.channels, C = cfg.channels;
  params.add("dec.lift.w", uniform_init(cfg.latent_dim, KC, cfg.latent_dim, rng));
  params.add("dec.lift.b", Tensor::matrix(1, KC));
  for (std::size_t l = 0; l < cfg.graph_layers; ++l) {
    params.add("dec.gc" + std::to_string(l) + ".w", uniform_init(C, C, C, rng));
    params.add("dec.gc" + std::to_string(l) + ".b", Tensor::matrix(1, C));
  }
  params.add("dec.out.w", uniform_init(C, 2, C, rng));
  params.add("dec.out.b", Tensor::matrix(1, 2));
}

/// h holds n frames of K joint rows each ((n*K) x C); returns A h per frame.
inline ad::Var graph_propagate(const ad::Var& h, const Tensor& adjacency) {
  const std::size_t K = adjacency.rows(), C = h.cols();
  if (adjacency.cols() != K || K == 0 || h.rows() % K != 0) {
    fail(ErrorCode::kShapeMismatch, "graph propagate: features " + h.value().shape_string() + ", adjacency " +
                                        adjacency.shape_string());
  }
  const std::size_t frames = h.rows() / K;
  Tensor out = Tensor::matrix(h.rows(), C);
  const Tensor& x = h.value();
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t j = 0; j < K; ++j) {
        const double a = adjacency(i, j);
        if (a == 0.0) continue;
        for (std::size_t c = 0; c < C; ++c) out(f * K + i, c) += a * x(f * K + j, c);
      }
  return ad::detail::make(std::move(out), {h}, [adjacency, frames, K, C](ad::Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j) {
          const double a = adjacency(i, j);
          if (a == 0.0) continue;
          for (std::size_t c = 0; c < C; ++c) g(f * K + j, c) += a * self.grad(f * K + i, c);
        }
  });
}

/// tanh(A h W + b).
inline ad::Var graph_conv_layer(const ParamView& params, const std::string& prefix, const ad::Var& h,
                                const Tensor& adjacency) {
  return ad::tanh(ad::add(ad::matmul(graph_propagate(h, adjacency), params(prefix + ".w")), params(prefix + ".b")));
}

/// z (n x latent) -> n x 2K normalized coordinates (x0, y0, x1, y1, ...),
/// each strictly inside (0,1).
inline ad::Var decode_skeleton(const ParamView& params, const DecoderConfig& cfg, const ad::Var& z,
                               const Tensor& adjacency) {
  const std::size_t K = cfg.num_joints, C = cfg.channels, n = z.rows();
  if (adjacency.rows() != K || adjacency.cols() != K) {
    fail(ErrorCode::kShapeMismatch, "decoder built for K=" + std::to_string(K) + ", adjacency " +
                                        adjacency.shape_string());
  }
  if (params("dec.lift.w").rows() != z.cols() || params("dec.lift.w").cols() != K * C) {
    fail(ErrorCode::kShapeMismatch, "decoder lift " + params("dec.lift.w").value().shape_string() + " for input " +
                                        z.value().shape_string() + " and K*C=" + std::to_string(K * C));
  }
  ad::Var h = ad::tanh(ad::add(ad::matmul(z, params("dec.lift.w")), params("dec.lift.b")));
  h = ad::reshape(h, n * K, C);
  for (std::size_t l = 0; l < cfg.graph_layers; ++l) {
    h = graph_conv_layer(params, "dec.gc" + std::to_string(l), h, adjacency);
  }
  const ad::Var out = ad::sigmoid(ad::add(ad::matmul(h, params("dec.out.w")), params("dec.out.b")));
  return ad::reshape(out, n, 2 * K);
}

inline Tensor decode_skeleton(const ParameterSet& params, const DecoderConfig& cfg, const Tensor& z,
                              const SkeletonTopology& topology) {
  if (topology.num_joints != cfg.num_joints) {
    fail(ErrorCode::kShapeMismatch, "topology K=" + std::to_string(topology.num_joints) + " vs decoder K=" +
                                        std::to_string(cfg.num_joints));
  }
  return decode_skeleton(ParamView(params, false), cfg, ad::constant(z), topology.normalized_adjacency()).value();
}

}  // namespace dwm
