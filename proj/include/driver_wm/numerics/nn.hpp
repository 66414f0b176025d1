#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "driver_wm/error.hpp"
#include "driver_wm/numerics/autodiff.hpp"
#include "driver_wm/numerics/parameter_set.hpp"

namespace dwm {

/// A ParameterSet bound into the autodiff graph for one forward pass.
/// Trainable entries become leaves when `track` is set; everything else is a
/// constant.
class ParamView {
 public:
  ParamView() = default;

  ParamView(const ParameterSet& params, bool track) {
    for (const auto& e : params.entries()) {
      vars_.emplace(e.name, (track && e.trainable) ? ad::leaf(e.value) : ad::constant(e.value));
      order_.push_back(e.name);
    }
  }

  const ad::Var& operator()(const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) fail(ErrorCode::kNotFound, "parameter '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return vars_.count(name) != 0; }

  /// Gradients gathered back into a ParameterSet shaped like `like`.
  ParameterSet gradients(const ParameterSet& like) const {
    ParameterSet out;
    for (const auto& e : like.entries()) {
      Tensor g = (*this)(e.name).grad();
      out.add(e.name, g.reshaped(e.value.shape()), e.trainable);
    }
    return out;
  }

 private:
  std::unordered_map<std::string, ad::Var> vars_;
  std::vector<std::string> order_;
};

enum class Activation { kLinear, kTanh, kRelu, kSigmoid };

inline ad::Var activate(const ad::Var& x, Activation act) {
  switch (act) {
    case Activation::kLinear: return x;
    case Activation::kTanh: return ad::tanh(x);
    case Activation::kRelu: return ad::relu(x);
    case Activation::kSigmoid: return ad::sigmoid(x);
  }
  return x;
}

/// Layer sizes [in, h1, ..., out]; `activation` applies between layers, the
/// output layer is linear unless `activate_output` is set.
/// Parameters are "<prefix>.w<i>" (in x out) and "<prefix>.b<i>" (1 x out).
struct MlpSpec {
  std::vector<std::size_t> sizes;
  Activation activation = Activation::kTanh;
  bool activate_output = false;

  std::size_t layers() const { return sizes.size() - 1; }
};

inline void add_mlp_params(ParameterSet& params, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
  if (spec.sizes.size() < 2) fail(ErrorCode::kInvalidConfig, "mlp '" + prefix + "' needs at least one layer");
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const std::size_t in = spec.sizes[l], out = spec.sizes[l + 1];
    params.add(prefix + ".w" + std::to_string(l), uniform_init(in, out, in, rng));
    params.add(prefix + ".b" + std::to_string(l), uniform_init(1, out, in, rng));
  }
}

/// Row-wise MLP over x (n x in).
inline ad::Var mlp_forward(const ParamView& params, const std::string& prefix, const ad::Var& x,
                           const MlpSpec& spec) {
  ad::Var h = x;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const std::string layer = prefix + ".w" + std::to_string(l);
    const ad::Var& w = params(layer);
    const ad::Var& b = params(prefix + ".b" + std::to_string(l));
    if (h.cols() != w.rows() || w.rows() != spec.sizes[l] || w.cols() != spec.sizes[l + 1] ||
        b.cols() != w.cols()) {
      fail(ErrorCode::kShapeMismatch, "layer '" + layer + "': input width " + std::to_string(h.cols()) +
                                          ", weight " + w.value().shape_string() + ", bias " +
                                          b.value().shape_string());
    }
    h = ad::add(ad::matmul(h, w), b);
    const bool last = l + 1 == spec.layers();
    if (!last || spec.activate_output) h = activate(h, spec.activation);
  }
  return h;
}

inline Tensor mlp_forward(const ParameterSet& params, const std::string& prefix, const Tensor& x,
                          const MlpSpec& spec) {
  ParamView view(params, false);
  return mlp_forward(view, prefix, ad::constant(x), spec).value();
}

/// Multi-head scaled dot-product attention without projections.
/// q: Nq x d, k and v: Nk x d. Heads split the feature axis into equal chunks.
/// With causal=true, query i attends to keys j <= i + offset.
inline ad::Var scaled_dot_attention(const ad::Var& q, const ad::Var& k, const ad::Var& v, std::size_t heads,
                                    bool causal = false, std::size_t offset = 0) {
  if (k.rows() == 0) fail(ErrorCode::kEmptyKeySet, "attention over zero keys");
  const std::size_t d = q.cols();
  if (heads == 0 || d % heads != 0) {
    fail(ErrorCode::kShapeMismatch, "feature width " + std::to_string(d) + " not divisible by " +
                                        std::to_string(heads) + " heads");
  }
  if (k.cols() != d || v.cols() != d || v.rows() != k.rows()) {
    fail(ErrorCode::kShapeMismatch, "attention q " + q.value().shape_string() + ", k " +
                                        k.value().shape_string() + ", v " + v.value().shape_string());
  }
  const std::size_t dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t b = h * dh, e = b + dh;
    ad::Var qh = heads == 1 ? q : ad::slice_cols(q, b, e);
    ad::Var kh = heads == 1 ? k : ad::slice_cols(k, b, e);
    ad::Var vh = heads == 1 ? v : ad::slice_cols(v, b, e);
    ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv);
    outs.push_back(ad::matmul(ad::softmax_rows(scores, causal, offset), vh));
  }
  return heads == 1 ? outs[0] : ad::concat_cols(outs);
}

inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  return scaled_dot_attention(ad::constant(q), ad::constant(k), ad::constant(v), heads).value();
}

}  // namespace dwm
