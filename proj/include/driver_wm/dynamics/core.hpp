#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "driver_wm/error.hpp"
#include "driver_wm/numerics/autodiff.hpp"
#include "driver_wm/numerics/nn.hpp"
#include "driver_wm/numerics/parameter_set.hpp"
#include "driver_wm/numerics/rng.hpp"

namespace dwm {

/// How the next internal state is formed from the candidate and the context.
enum class CoreKind {
  kGated,          // (1-g) z~ + g m
  kCrossAttnOnly,  // z~ + m
  kGru,            // GRU(input m, hidden z)
  kInternalOnly,   // z~, no context
};

enum class TransitionMode { kDeterministic, kGaussian };
enum class PreEncodeMode { kCausal, kBidirectional };

struct DynamicsConfig {
  std::size_t dim = 64;
  std::size_t pre_heads = 4;
  std::size_t ctx_queries = 4;
  std::size_t ctx_rank = 0;  // 0 = dim / 4
  std::size_t ctx_heads = 4;
  CoreKind core = CoreKind::kGated;
  TransitionMode transition = TransitionMode::kDeterministic;
  bool residual_transitions = true;

  std::size_t rank() const { return ctx_rank == 0 ? dim / 4 : ctx_rank; }
  bool uses_context() const { return core != CoreKind::kInternalOnly; }

  void validate() const {
    if (dim == 0 || pre_heads == 0 || dim % pre_heads != 0) {
      fail(ErrorCode::kInvalidConfig, "latent dim must be a positive multiple of the pre-encoder heads");
    }
    if (rank() == 0 || ctx_heads == 0 || rank() % ctx_heads != 0 || ctx_queries == 0) {
      fail(ErrorCode::kInvalidConfig, "context rank must be a positive multiple of the context heads");
    }
  }
};

inline constexpr double kLogSigmaMin = -6.0;
inline constexpr double kLogSigmaMax = 2.0;

inline MlpSpec transition_mlp_spec(std::size_t dim) { return {{dim, dim, dim}, Activation::kTanh, false}; }
inline MlpSpec ctx_query_mlp_spec(const DynamicsConfig& cfg) {
  return {{cfg.dim, cfg.dim, cfg.ctx_queries * cfg.rank()}, Activation::kTanh, false};
}

/// Parameter names:
///   pre_int.{wq,wk,wv,wo}, pre_ext.{...}            D x D
///   ctx.q.{w,b}{0,1}  query MLP D -> D -> Q*r
///   ctx.wk, ctx.wv    D x r
///   ctx.wo            Q*r x D, ctx.bo 1 x D
///   f_int.{w,b}{0,1}, f_int.ls.{w,b} (gaussian), f_ext.{w,b}{0,1}
///   gate.{w,b}{0,1}   (gated core), gru.* (GRU core)
inline void add_dynamics_params(ParameterSet& params, const DynamicsConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t D = cfg.dim, r = cfg.rank(), Q = cfg.ctx_queries;
  if (cfg.uses_context()) {
    for (const char* stream : {"pre_int", "pre_ext"}) {
      for (const char* w : {".wq", ".wk", ".wv", ".wo"}) params.add(std::string(stream) + w, uniform_init(D, D, D, rng));
    }
    add_mlp_params(params, "ctx.q", ctx_query_mlp_spec(cfg), rng);
    params.add("ctx.wk", uniform_init(D, r, D, rng));
    params.add("ctx.wv", uniform_init(D, r, D, rng));
    params.add("ctx.wo", uniform_init(Q * r, D, Q * r, rng));
    params.add("ctx.bo", Tensor::matrix(1, D));
  }
  if (cfg.core == CoreKind::kGru) {
    for (const char* g : {"r", "u", "n"}) {
      params.add(std::string("gru.w") + g, uniform_init(D, D, D, rng));
      params.add(std::string("gru.u") + g, uniform_init(D, D, D, rng));
      params.add(std::string("gru.b") + g, Tensor::matrix(1, D));
    }
  } else {
    add_mlp_params(params, "f_int", transition_mlp_spec(D), rng);
    if (cfg.transition == TransitionMode::kGaussian) {
      params.add("f_int.ls.w", uniform_init(D, D, D, rng));
      params.add("f_int.ls.b", Tensor::matrix(1, D));
    }
  }
  add_mlp_params(params, "f_ext", transition_mlp_spec(D), rng);
  if (cfg.core == CoreKind::kGated) add_mlp_params(params, "gate", transition_mlp_spec(D), rng);
}

/// x + softmax(x Wq (x Wk)^T / sqrt(dh)) (x Wv) Wo, multi-head, no biases.
/// Causal mode masks keys after the query step.
inline ad::Var causal_pre_encode(const ParamView& params, const std::string& prefix, const ad::Var& x,
                                 PreEncodeMode mode, std::size_t heads) {
  if (x.rows() == 0) fail(ErrorCode::kEmptyInput, prefix + ": empty stream");
  const ad::Var q = ad::matmul(x, params(prefix + ".wq"));
  const ad::Var k = ad::matmul(x, params(prefix + ".wk"));
  const ad::Var v = ad::matmul(x, params(prefix + ".wv"));
  const ad::Var a = scaled_dot_attention(q, k, v, heads, mode == PreEncodeMode::kCausal, 0);
  return ad::add(x, ad::matmul(a, params(prefix + ".wo")));
}

/// m_t from pre-encoded histories (rows = steps 1..t).
/// Queries: MLP(mean of internal history) reshaped to Q x r. Keys/values:
/// ext history projected to rank r. The flattened attention output is
/// projected to a global context c; m_t = last internal state + c.
inline ad::Var context_summary(const ParamView& params, const DynamicsConfig& cfg, const ad::Var& int_history,
                               const ad::Var& ext_history) {
  if (int_history.rows() == 0 || ext_history.rows() == 0) {
    fail(ErrorCode::kEmptyInput, "context summary over an empty history");
  }
  const std::size_t r = cfg.rank(), Q = cfg.ctx_queries;
  const ad::Var pooled = ad::mean_rows(int_history);
  const ad::Var queries = ad::reshape(mlp_forward(params, "ctx.q", pooled, ctx_query_mlp_spec(cfg)), Q, r);
  const ad::Var keys = ad::matmul(ext_history, params("ctx.wk"));
  const ad::Var values = ad::matmul(ext_history, params("ctx.wv"));
  const ad::Var attended = scaled_dot_attention(queries, keys, values, cfg.ctx_heads);
  const ad::Var c = ad::add(ad::matmul(ad::reshape(attended, 1, Q * r), params("ctx.wo")), params("ctx.bo"));
  return ad::add(ad::row(int_history, int_history.rows() - 1), c);
}

struct TransitionOutput {
  ad::Var candidate;
  ad::Var mean;
  ad::Var log_sigma;  // undefined in deterministic mode
};

/// z~ = mu + eps * sigma.
inline ad::Var reparameterize(const ad::Var& mean, const ad::Var& sigma, const Tensor& eps) {
  return ad::add(mean, ad::mul(ad::constant(eps), sigma));
}

/// Candidate = mean unless `sample_rng` is given in gaussian mode.
inline TransitionOutput internal_transition(const ParamView& params, const DynamicsConfig& cfg, const ad::Var& z,
                                            Rng* sample_rng = nullptr) {
  const ad::Var h = ad::tanh(ad::add(ad::matmul(z, params("f_int.w0")), params("f_int.b0")));
  ad::Var out = ad::add(ad::matmul(h, params("f_int.w1")), params("f_int.b1"));
  if (cfg.residual_transitions) out = ad::add(z, out);
  TransitionOutput res{out, out, {}};
  if (cfg.transition == TransitionMode::kGaussian) {
    res.log_sigma = ad::clamp(ad::add(ad::matmul(h, params("f_int.ls.w")), params("f_int.ls.b")), kLogSigmaMin,
                              kLogSigmaMax);
    if (sample_rng != nullptr) {
      Tensor eps = Tensor::matrix(1, z.cols());
      for (auto& e : eps.storage()) e = sample_rng->normal();
      res.candidate = reparameterize(res.mean, ad::exp(res.log_sigma), eps);
    }
  }
  return res;
}

inline ad::Var external_transition(const ParamView& params, const DynamicsConfig& cfg, const ad::Var& z_ext) {
  const ad::Var out = mlp_forward(params, "f_ext", z_ext, transition_mlp_spec(cfg.dim));
  return cfg.residual_transitions ? ad::add(z_ext, out) : out;
}

/// g = sigmoid(MLP_g(z_ext)), strictly inside (0,1) for finite input.
inline ad::Var compute_gate(const ParamView& params, const DynamicsConfig& cfg, const ad::Var& z_ext) {
  return ad::sigmoid(mlp_forward(params, "gate", z_ext, transition_mlp_spec(cfg.dim)));
}

inline ad::Var gated_update(const ad::Var& candidate, const ad::Var& context, const ad::Var& gate) {
  ad::detail::require_same(candidate, context, "gated update");
  return ad::add(ad::mul(ad::affine(gate, -1.0, 1.0), candidate), ad::mul(gate, context));
}

inline ad::Var override_update(const ad::Var& candidate, const ad::Var& context, double lambda) {
  ad::detail::require_same(candidate, context, "gated update");
  return ad::add(ad::scale(candidate, 1.0 - lambda), ad::scale(context, lambda));
}

inline ad::Var gru_update(const ParamView& params, const ad::Var& input, const ad::Var& hidden) {
  auto lin = [&](const char* g, const ad::Var& x, const ad::Var& h) {
    return ad::add(ad::add(ad::matmul(x, params(std::string("gru.w") + g)), ad::matmul(h, params(std::string("gru.u") + g))),
                   params(std::string("gru.b") + g));
  };
  const ad::Var reset = ad::sigmoid(lin("r", input, hidden));
  const ad::Var update = ad::sigmoid(lin("u", input, hidden));
  const ad::Var n = ad::tanh(ad::add(ad::add(ad::matmul(input, params("gru.wn")),
                                             ad::matmul(ad::mul(reset, hidden), params("gru.un"))),
                                     params("gru.bn")));
  return ad::add(n, ad::mul(update, ad::sub(hidden, n)));
}

}  // namespace dwm
