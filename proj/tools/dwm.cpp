#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "driver_wm/cli/commands.hpp"

namespace {

struct SharedFlags {
  std::string config;
  std::string seed, out, corpus, checkpoint, variant, lanes, split;
  std::vector<std::string> sets;
};

void add_shared(CLI::App* cmd, SharedFlags& f) {
  cmd->add_option("--config", f.config, "key = value config file; flags override it");
  cmd->add_option("--seed", f.seed, "64-bit seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--corpus", f.corpus, "corpus directory");
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint file");
  cmd->add_option("--variant", f.variant, "model variant");
  cmd->add_option("--lanes", f.lanes, "per-clip worker threads (1 = reference mode)");
  cmd->add_option("--split", f.split, "train, val or test");
  cmd->add_option("--set", f.sets, "extra key=value override, repeatable");
}

dwm::KeyValueText overrides(const SharedFlags& f) {
  dwm::KeyValueText kv;
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) kv.set(key, v);
  };
  put("run.seed", f.seed);
  put("run.out", f.out);
  put("run.corpus", f.corpus);
  put("run.checkpoint", f.checkpoint);
  put("run.variant", f.variant);
  put("run.lanes", f.lanes);
  put("run.split", f.split);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got '" + s + "'");
    kv.set(dwm::KeyValueText::trim(s.substr(0, eq)), dwm::KeyValueText::trim(s.substr(eq + 1)));
  }
  return kv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Driver world model: corpus generation, training, evaluation and intervention probes"};
  app.require_subcommand(1);
  SharedFlags flags;
  std::string event_rate, epochs, specs;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_shared(gen, flags);
  gen->add_option("--event-rate", event_rate, "share of clips with a traffic event (0 = inertial corpus)");
  CLI::App* train = app.add_subcommand("train", "train a variant and save checkpoints");
  add_shared(train, flags);
  train->add_option("--epochs", epochs, "training epochs (0 = initialization only)");
  CLI::App* eval = app.add_subcommand("eval", "write a metrics report and per-clip records");
  add_shared(eval, flags);
  CLI::App* intervene = app.add_subcommand("intervene", "write the intervention deviation table");
  add_shared(intervene, flags);
  intervene->add_option("--specs", specs, "comma-separated interventions, e.g. ext_remove,lambda:0");
  CLI::App* verify = app.add_subcommand("verify-causality", "check zero lookahead and rerun determinism");
  add_shared(verify, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : dwm::cli::kExitUsage;
  }

  try {
    dwm::KeyValueText kv = overrides(flags);
    if (!event_rate.empty()) kv.set("gen.event_rate", event_rate);
    if (!epochs.empty()) kv.set("train.epochs", epochs);
    if (!specs.empty()) kv.set("run.specs", specs);
    const std::string command = app.get_subcommands().front()->get_name();
    const dwm::cli::RunConfig rc = dwm::cli::RunConfig::merge(flags.config, kv);
    return dwm::cli::run_command(command, rc, std::cout, std::cerr);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dwm::cli::kExitUsage;
  } catch (const dwm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_data_error() ? dwm::cli::kExitData : dwm::cli::kExitUsage;
  }
}
