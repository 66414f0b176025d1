#pragma once

#include <cmath>
#include <string>

#include "driver_wm/error.hpp"
#include "driver_wm/kv_text.hpp"
#include "driver_wm/numerics/autodiff.hpp"

namespace dwm {

/// total = lat*L_lat + skel*L_skel + aux*L_aux + beta*KL
///       + phys*(bone*L_bone + smooth*L_smooth + seat*L_seat)
struct LossWeights {
  double lat = 1.0;
  double skel = 1.0;
  double aux = 1.0;
  double phys = 0.0;
  double bone = 0.1;
  double smooth = 0.1;
  double seat = 0.01;
  double beta = 0.0;

  void validate() const {
    for (double w : {lat, skel, aux, phys, bone, smooth, seat, beta}) {
      if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::kInvalidConfig, "loss weights must be finite and >= 0");
    }
  }

  void to_kv(KeyValueText& kv) const {
    kv.set("loss.lat", lat);
    kv.set("loss.skel", skel);
    kv.set("loss.aux", aux);
    kv.set("loss.phys", phys);
    kv.set("loss.bone", bone);
    kv.set("loss.smooth", smooth);
    kv.set("loss.seat", seat);
    kv.set("loss.beta", beta);
  }

  static LossWeights from_kv(const KeyValueText& kv, LossWeights w) {
    auto read = [&](const char* key, double& dst) {
      if (kv.has(key)) dst = kv.get_double(key);
    };
    read("loss.lat", w.lat);
    read("loss.skel", w.skel);
    read("loss.aux", w.aux);
    read("loss.phys", w.phys);
    read("loss.bone", w.bone);
    read("loss.smooth", w.smooth);
    read("loss.seat", w.seat);
    read("loss.beta", w.beta);
    w.validate();
    return w;
  }
};

/// Unweighted terms; undefined entries are absent and count as 0.
struct LossTerms {
  ad::Var latent, skeleton, aux, bone, smooth, seat, kl;
};

struct LossBreakdown {
  double latent = 0, skeleton = 0, aux = 0, bone = 0, smooth = 0, seat = 0, kl = 0;
  double total = 0;
  ad::Var total_var;
};

inline LossBreakdown total_loss(const LossTerms& terms, const LossWeights& w) {
  w.validate();
  LossBreakdown out;
  auto value = [](const ad::Var& v) { return v.defined() ? v.item() : 0.0; };
  out.latent = value(terms.latent);
  out.skeleton = value(terms.skeleton);
  out.aux = value(terms.aux);
  out.bone = value(terms.bone);
  out.smooth = value(terms.smooth);
  out.seat = value(terms.seat);
  out.kl = value(terms.kl);

  ad::Var total = ad::scalar(0.0);
  auto accumulate = [&](const ad::Var& term, double weight) {
    if (term.defined() && weight != 0.0) total = ad::add(total, ad::scale(term, weight));
  };
  accumulate(terms.latent, w.lat);
  accumulate(terms.skeleton, w.skel);
  accumulate(terms.aux, w.aux);
  accumulate(terms.kl, w.beta);
  accumulate(terms.bone, w.phys * w.bone);
  accumulate(terms.smooth, w.phys * w.smooth);
  accumulate(terms.seat, w.phys * w.seat);
  out.total_var = total;
  out.total = total.item();
  return out;
}

}  // namespace dwm
