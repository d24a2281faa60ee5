// Command-line front end for the StratDef experiment pipeline.
//
// Subcommands map to pipeline stages (synth covers dataset preparation);
// `run` executes an arbitrary stage subset in dependency order. Exit codes:
// 0 success, 2 configuration/validation error, 1 runtime failure.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stratdef/error.hpp"
#include "stratdef/pipeline.hpp"

namespace {

struct Options {
  std::string config_path;
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool has_seed = false;
};

int execute(const Options& opt, const std::vector<std::string>& stages) {
  try {
    stratdef::ExperimentConfig cfg = stratdef::load_config(opt.config_path);
    if (!opt.out_override.empty()) cfg.out_dir = opt.out_override;
    if (opt.has_seed) {
      cfg.seed = opt.seed_override;
      cfg.seeds.clear();
      for (const auto& stage : stratdef::Pipeline::stage_order()) {
        cfg.seeds[stage] = stratdef::derive_seed(cfg.seed, "stage/" + stage);
      }
    }
    stratdef::Pipeline pipeline(std::move(cfg));
    pipeline.run(stages);
    return 0;
  } catch (const stratdef::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const stratdef::ParseError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"StratDef: strategic moving-target defense experiments"};
  app.require_subcommand(1);

  Options opt;
  app.add_option("--config", opt.config_path, "experiment config (JSON)")
      ->required();
  app.add_option("--out", opt.out_override, "override the output directory");
  auto* seed_opt =
      app.add_option("--seed", opt.seed_override, "override the master seed");

  // stage subcommands; `synth` prepares the dataset whether synthesized or
  // loaded from a file
  const std::vector<std::pair<std::string, std::string>> stage_commands = {
      {"synth", "data"},         {"train", "train"},
      {"attack", "attack"},      {"profile", "profile"},
      {"select", "select"},      {"strategize", "strategize"},
      {"evaluate", "evaluate"},  {"blackbox", "blackbox"},
      {"report", "report"},
  };
  std::vector<std::string> picked;
  for (const auto& [name, stage] : stage_commands) {
    auto* sub = app.add_subcommand(name, "run the " + stage + " stage");
    sub->callback([&picked, stage = stage] { picked = {stage}; });
  }

  std::vector<std::string> run_stages;
  auto* run = app.add_subcommand("run", "run a stage subset in order");
  run->add_option("--stages", run_stages, "stages or 'all'")
      ->expected(-1)
      ->default_val(std::vector<std::string>{"all"});
  run->callback([&picked, &run_stages] { picked = run_stages; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  opt.has_seed = seed_opt->count() > 0;
  if (picked.empty()) picked = {"all"};
  return execute(opt, picked);
}
