#pragma once

// Run configuration: flat "key = value" text. Keys used by the commands:
//   run.command, run.seed, run.out, run.corpus, run.checkpoint, run.variant,
//   run.lanes, run.split (eval/intervene/verify: train|val|test),
//   run.specs (intervene: comma-separated spec names),
//   gen.*   synthetic corpus (see SynthConfig::to_kv)
//   train.* optimizer and schedule (see TrainConfig::to_kv)
//   loss.*  loss weights (see LossWeights::to_kv)
//   model.* channels, graph_layers, pre_heads, ctx_queries, ctx_rank,
//           ctx_heads, latent_mode (direct|velocity)
//   eval.hm_fraction, eval.hm_count, eval.geometric (auto|on|off)
// Flags are merged over the config file; the merged set is written to
// <out>/run_config.txt before any output.

#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "driver_wm/baselines/variants.hpp"
#include "driver_wm/data/corpus_io.hpp"
#include "driver_wm/data/synth.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/evaluation/evaluate.hpp"
#include "driver_wm/interventions/probes.hpp"
#include "driver_wm/kv_text.hpp"
#include "driver_wm/training/checkpoint.hpp"
#include "driver_wm/training/trainer.hpp"

namespace dwm::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitVerify = 3 };

inline constexpr const char* kRunConfigFile = "run_config.txt";

struct RunConfig {
  KeyValueText kv;

  std::string str(const std::string& key, const std::string& fallback = "") const { return kv.get_or(key, fallback); }
  std::string required(const std::string& key) const {
    if (!kv.has(key) || kv.get(key).empty()) fail(ErrorCode::kInvalidConfig, "missing required setting " + key);
    return kv.get(key);
  }
  std::uint64_t seed() const { return kv.has("run.seed") ? kv.get_u64("run.seed") : 0; }
  std::size_t lanes() const {
    const std::uint64_t n = kv.has("run.lanes") ? kv.get_u64("run.lanes") : 1;
    if (n == 0) fail(ErrorCode::kInvalidConfig, "run.lanes must be at least 1");
    return static_cast<std::size_t>(n);
  }
  std::string out() const { return required("run.out"); }

  /// File settings first, then `overrides` on top.
  static RunConfig merge(const std::string& config_path, const KeyValueText& overrides) {
    RunConfig rc;
    if (!config_path.empty()) {
      if (!std::filesystem::exists(config_path)) fail(ErrorCode::kIo, "config file " + config_path + " not found");
      rc.kv = KeyValueText::load(config_path);
    }
    rc.kv.merge(overrides);
    return rc;
  }

  void save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    kv.save(dir + "/" + kRunConfigFile);
  }
};

/// Hash over the corpus blob and manifest.
inline std::string corpus_hash(const std::string& dir) {
  const std::string text = file_hash(dir + "/corpus.bin") + file_hash(dir + "/manifest.txt");
  return hex64(fnv1a(text.data(), text.size()));
}

inline ModelConfig model_config_from(const RunConfig& rc, VariantKind kind, const CorpusDims& dims) {
  ModelConfig m = ModelConfig::for_variant(kind, dims);
  const KeyValueText& kv = rc.kv;
  auto sz = [&](const char* key, std::size_t& dst) {
    if (kv.has(key)) dst = static_cast<std::size_t>(kv.get_u64(key));
  };
  sz("model.channels", m.channels);
  sz("model.graph_layers", m.graph_layers);
  sz("model.pre_heads", m.pre_heads);
  sz("model.ctx_queries", m.ctx_queries);
  sz("model.ctx_rank", m.ctx_rank);
  sz("model.ctx_heads", m.ctx_heads);
  if (kv.has("model.latent_mode")) {
    const std::string s = kv.get("model.latent_mode");
    if (s != "direct" && s != "velocity") fail(ErrorCode::kInvalidConfig, "model.latent_mode must be direct or velocity");
    m.latent_mode = s == "direct" ? LatentLossMode::kDirect : LatentLossMode::kVelocity;
  }
  m.weights = LossWeights::from_kv(kv, m.weights);
  m.validate();
  return m;
}

inline void model_config_to_kv(KeyValueText& kv, const ModelConfig& m) {
  kv.set("model.channels", static_cast<std::uint64_t>(m.channels));
  kv.set("model.graph_layers", static_cast<std::uint64_t>(m.graph_layers));
  kv.set("model.pre_heads", static_cast<std::uint64_t>(m.pre_heads));
  kv.set("model.ctx_queries", static_cast<std::uint64_t>(m.ctx_queries));
  kv.set("model.ctx_rank", static_cast<std::uint64_t>(m.ctx_rank));
  kv.set("model.ctx_heads", static_cast<std::uint64_t>(m.ctx_heads));
  kv.set("model.latent_mode", std::string(m.latent_mode == LatentLossMode::kDirect ? "direct" : "velocity"));
  m.weights.to_kv(kv);
}

inline HmSelection hm_selection_from(const RunConfig& rc) {
  HmSelection sel;
  if (rc.kv.has("eval.hm_fraction")) sel.fraction = rc.kv.get_double("eval.hm_fraction");
  if (rc.kv.has("eval.hm_count")) sel.count = static_cast<std::size_t>(rc.kv.get_u64("eval.hm_count"));
  return sel;
}

inline std::vector<Clip> split_clips(const Corpus& corpus, const std::string& split) {
  if (split == "train") return corpus.split(corpus.manifest.train);
  if (split == "val") return corpus.split(corpus.manifest.val);
  if (split == "test") return corpus.split(corpus.manifest.test);
  fail(ErrorCode::kInvalidConfig, "run.split must be train, val or test, got '" + split + "'");
}

/// Model and its provenance hash: the checkpoint when given, otherwise a
/// parameter-free variant.
struct LoadedModel {
  WorldModel model;
  std::string checkpoint_hash = "none";
};

inline LoadedModel load_model(const RunConfig& rc, const CorpusDims& dims) {
  LoadedModel lm;
  const std::string ckpt = rc.str("run.checkpoint");
  if (!ckpt.empty()) {
    const Checkpoint c = load_checkpoint(ckpt);
    if (!(c.model.dims == dims)) {
      fail(ErrorCode::kHeaderMismatch, "checkpoint (D,K,V)=(" + std::to_string(c.model.dims.D) + "," +
                                           std::to_string(c.model.dims.K) + "," + std::to_string(c.model.dims.V) +
                                           ") does not match corpus (" + std::to_string(dims.D) + "," +
                                           std::to_string(dims.K) + "," + std::to_string(dims.V) + ")");
    }
    if (rc.kv.has("run.variant") && parse_variant(rc.kv.get("run.variant")) != c.model.variant) {
      fail(ErrorCode::kInvalidConfig, "run.variant " + rc.kv.get("run.variant") + " disagrees with checkpoint variant " +
                                          variant_name(c.model.variant));
    }
    lm.model = c.world_model();
    lm.checkpoint_hash = file_hash(ckpt);
    return lm;
  }
  const VariantKind kind = parse_variant(rc.str("run.variant", "main"));
  if (variant_traits(kind).trainable) {
    fail(ErrorCode::kInvalidConfig, "variant " + variant_name(kind) + " needs --checkpoint");
  }
  lm.model = WorldModel::create(model_config_from(rc, kind, dims), 0);
  return lm;
}

inline void write_text(const std::string& path, const std::string& text) { write_file(path, text); }

// ------------------------------------------------------------- commands

inline int cmd_gen_data(const RunConfig& rc, std::ostream& log) {
  const std::string out = rc.out();
  SynthConfig cfg = SynthConfig::from_kv(rc.kv);
  RunConfig resolved = rc;
  resolved.kv.set("run.command", std::string("gen-data"));
  resolved.kv.set("run.seed", rc.seed());
  resolved.kv.merge(cfg.to_kv());
  resolved.save(out);
  const SynthCorpus synth = synth_generate_corpus(cfg, rc.seed(), toy_body_topology(), rc.lanes());
  save_corpus(out, synth.corpus);
  log << "wrote " << synth.corpus.clips.size() << " clips to " << out << " corpus_hash=" << corpus_hash(out) << "\n";
  return kExitOk;
}

inline std::string format_train_log(const std::vector<EpochLog>& rows, const std::string& corpus) {
  std::ostringstream o;
  o << "# corpus_hash=" << corpus << "\n";
  o << "epoch\tlr\tloss_total\tloss_latent\tloss_skeleton\tloss_aux\tloss_bone\tloss_smooth\tloss_seat\tloss_kl\tgrad_"
       "norm\tval_metric\n";
  for (const auto& r : rows) {
    o << r.epoch;
    for (double v : {r.lr, r.loss.total, r.loss.latent, r.loss.skeleton, r.loss.aux, r.loss.bone, r.loss.smooth,
                     r.loss.seat, r.loss.kl, r.grad_norm, r.val_metric}) {
      o << '\t' << KeyValueText::format_double(v);
    }
    o << '\n';
  }
  return o.str();
}

inline int cmd_train(const RunConfig& rc, std::ostream& log) {
  const std::string out = rc.out();
  const std::string corpus_dir = rc.required("run.corpus");
  const VariantKind kind = parse_variant(rc.str("run.variant", "main"));
  if (!variant_traits(kind).trainable) {
    fail(ErrorCode::kUnsupported, "variant " + variant_name(kind) + " has no parameters and cannot be trained");
  }
  const Corpus corpus = load_corpus(corpus_dir);
  const std::string chash = corpus_hash(corpus_dir);
  const ModelConfig mcfg = model_config_from(rc, kind, corpus.dims);
  TrainConfig tcfg = TrainConfig::from_kv(rc.kv, TrainConfig{});
  tcfg.seed = rc.seed();
  tcfg.lanes = rc.lanes();

  RunConfig resolved = rc;
  resolved.kv.set("run.command", std::string("train"));
  resolved.kv.set("run.seed", rc.seed());
  resolved.kv.set("run.variant", variant_name(kind));
  resolved.kv.set("run.corpus_hash", chash);
  model_config_to_kv(resolved.kv, mcfg);
  tcfg.to_kv(resolved.kv);
  resolved.save(out);

  const TrainResult res = train(mcfg, corpus.split(corpus.manifest.train), corpus.split(corpus.manifest.val), tcfg,
                                [&](const EpochLog& e) {
                                  log << "epoch " << e.epoch << " loss " << KeyValueText::format_double(e.loss.total)
                                      << " val " << KeyValueText::format_double(e.val_metric) << " lr "
                                      << KeyValueText::format_double(e.lr) << "\n";
                                });
  save_checkpoint(out + "/best.ckpt", res.best);
  save_checkpoint(out + "/last.ckpt", res.last);
  write_text(out + "/train_log.tsv", format_train_log(res.log, chash));
  KeyValueText summary;
  summary.set("format", std::string("dwm-train-summary"));
  summary.set("corpus_hash", chash);
  summary.set("checkpoint_hash", file_hash(out + "/best.ckpt"));
  summary.set("variant", variant_name(kind));
  summary.set("epochs_run", static_cast<std::uint64_t>(res.log.size()));
  summary.set("best_epoch", res.best.epoch);
  summary.set("best_val_metric", res.best.val_mpjpe);
  summary.set("init_val_metric", res.init_val_metric);
  summary.set("init_train_loss", res.init_train_loss);
  summary.set("diverged", res.diverged ? 1 : 0);
  if (res.diverged) summary.set("diverged_reason", res.diverged_reason);
  summary.save(out + "/train_summary.txt");
  if (res.diverged) {
    log << "training diverged (" << res.diverged_reason << "); kept the last finite checkpoint\n";
    return kExitData;
  }
  log << "best epoch " << res.best.epoch << " val " << KeyValueText::format_double(res.best.val_mpjpe) << "\n";
  return kExitOk;
}

inline int cmd_eval(const RunConfig& rc, std::ostream& log) {
  const std::string out = rc.out();
  const std::string corpus_dir = rc.required("run.corpus");
  const Corpus corpus = load_corpus(corpus_dir);
  const LoadedModel lm = load_model(rc, corpus.dims);
  const std::string split = rc.str("run.split", "test");
  RunConfig resolved = rc;
  resolved.kv.set("run.command", std::string("eval"));
  resolved.kv.set("run.split", split);
  resolved.kv.set("run.corpus_hash", corpus_hash(corpus_dir));
  resolved.kv.set("run.checkpoint_hash", lm.checkpoint_hash);
  resolved.save(out);

  EvalOptions opts;
  opts.hm = hm_selection_from(rc);
  opts.lanes = rc.lanes();
  const std::string geo = rc.str("eval.geometric", "auto");
  if (geo != "auto" && geo != "on" && geo != "off") fail(ErrorCode::kInvalidConfig, "eval.geometric must be auto, on or off");
  opts.geometric = geo == "auto" ? lm.model.config().traits().pose_head : geo == "on";
  const MetricsReport report = evaluate(lm.model, split_clips(corpus, split), opts);
  KeyValueText kv = report_to_kv(report);
  kv.set("corpus_hash", corpus_hash(corpus_dir));
  kv.set("checkpoint_hash", lm.checkpoint_hash);
  kv.set("split", split);
  kv.save(out + "/metrics.txt");
  write_text(out + "/records.tsv", "# corpus_hash=" + corpus_hash(corpus_dir) + " checkpoint_hash=" + lm.checkpoint_hash +
                                       "\n" + format_records(report.records));
  if (report.geometric) {
    log << report.variant << " " << split << " MPJPE all " << KeyValueText::format_double(report.all.mpjpe) << " px, HM "
        << KeyValueText::format_double(report.hm.mpjpe) << " px\n";
  } else {
    log << report.variant << " " << split << " semantic metrics only\n";
  }
  return kExitOk;
}

inline int cmd_intervene(const RunConfig& rc, std::ostream& log) {
  const std::string out = rc.out();
  const std::string corpus_dir = rc.required("run.corpus");
  std::vector<InterventionSpec> specs;
  if (rc.kv.has("run.specs")) {
    specs.push_back(InterventionSpec::none());
    for (const auto& s : KeyValueText::split_list(rc.kv.get("run.specs"))) {
      const InterventionSpec spec = InterventionSpec::parse(s);
      if (spec.kind != InterventionKind::kNone) specs.push_back(spec);
    }
  } else {
    specs = default_intervention_specs();
  }
  const Corpus corpus = load_corpus(corpus_dir);
  const LoadedModel lm = load_model(rc, corpus.dims);
  if (!lm.model.config().traits().rollout) {
    fail(ErrorCode::kUnsupported, "variant " + variant_name(lm.model.config().variant) + " has no rollout to intervene on");
  }
  const std::string split = rc.str("run.split", "test");
  RunConfig resolved = rc;
  resolved.kv.set("run.command", std::string("intervene"));
  resolved.kv.set("run.split", split);
  resolved.kv.set("run.corpus_hash", corpus_hash(corpus_dir));
  resolved.kv.set("run.checkpoint_hash", lm.checkpoint_hash);
  resolved.save(out);

  const auto rows = deviation_table(lm.model, split_clips(corpus, split), specs, hm_selection_from(rc), rc.lanes());
  KeyValueText kv = deviations_to_kv(rows);
  kv.set("corpus_hash", corpus_hash(corpus_dir));
  kv.set("checkpoint_hash", lm.checkpoint_hash);
  kv.set("split", split);
  kv.save(out + "/deviations.txt");
  for (const auto& r : rows) {
    log << r.spec << " all " << KeyValueText::format_double(r.all) << " hm " << KeyValueText::format_double(r.hm)
        << " final " << KeyValueText::format_double(r.final_horizon) << "\n";
  }
  return kExitOk;
}

inline int cmd_verify(const RunConfig& rc, std::ostream& log) {
  const std::string out = rc.out();
  const std::string corpus_dir = rc.required("run.corpus");
  const Corpus corpus = load_corpus(corpus_dir);
  const std::string split = rc.str("run.split", "test");

  // Without a checkpoint, a seeded random initialization of run.variant.
  LoadedModel lm;
  if (rc.kv.has("run.checkpoint") && !rc.kv.get("run.checkpoint").empty()) {
    lm = load_model(rc, corpus.dims);
  } else {
    const VariantKind kind = parse_variant(rc.str("run.variant", "main"));
    lm.model = WorldModel::create(model_config_from(rc, kind, corpus.dims), rc.seed());
    lm.checkpoint_hash = "init-seed" + std::to_string(rc.seed());
  }
  RunConfig resolved = rc;
  resolved.kv.set("run.command", std::string("verify-causality"));
  resolved.kv.set("run.split", split);
  resolved.kv.set("run.corpus_hash", corpus_hash(corpus_dir));
  resolved.kv.set("run.checkpoint_hash", lm.checkpoint_hash);
  resolved.save(out);

  const std::vector<Clip> clips = split_clips(corpus, split);
  KeyValueText kv;
  kv.set("format", std::string("dwm-causality-verdict"));
  kv.set("corpus_hash", corpus_hash(corpus_dir));
  kv.set("checkpoint_hash", lm.checkpoint_hash);
  kv.set("variant", variant_name(lm.model.config().variant));
  kv.set("tolerance", kLookaheadTolerance);
  bool pass = true;
  for (SuffixMode mode : {SuffixMode::kZero, SuffixMode::kRandom}) {
    const LookaheadResult r = verify_zero_lookahead(lm.model, clips, mode, rc.seed(), rc.lanes());
    const std::string p = suffix_mode_name(mode);
    for (std::size_t h = 0; h < r.max_abs_diff.size(); ++h) {
      kv.set(p + ".h" + std::to_string(h + 1) + ".max_abs_diff", r.max_abs_diff[h]);
    }
    kv.set(p + ".max_abs_diff", r.worst);
    kv.set(p + ".verdict", std::string(r.pass ? "PASS" : "FAIL"));
    log << p << " max abs diff " << KeyValueText::format_double(r.worst) << (r.pass ? " PASS" : " FAIL") << "\n";
    pass = pass && r.pass;
  }
  const double rerun = self_consistency_diff(lm.model, clips, rc.lanes());
  kv.set("rerun.max_abs_diff", rerun);
  pass = pass && rerun <= kLookaheadTolerance;
  kv.set("verdict", std::string(pass ? "PASS" : "FAIL"));
  kv.save(out + "/causality.txt");
  log << "rerun max abs diff " << KeyValueText::format_double(rerun) << "\nverdict " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kExitOk : kExitVerify;
}

/// Runs one command, mapping library errors to exit codes.
inline int run_command(const std::string& command, const RunConfig& rc, std::ostream& log, std::ostream& err) {
  try {
    if (command == "gen-data") return cmd_gen_data(rc, log);
    if (command == "train") return cmd_train(rc, log);
    if (command == "eval") return cmd_eval(rc, log);
    if (command == "intervene") return cmd_intervene(rc, log);
    if (command == "verify-causality") return cmd_verify(rc, log);
    err << "unknown command '" << command << "'\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.is_data_error() || e.code() == ErrorCode::kNonFinite ? kExitData : kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace dwm::cli
