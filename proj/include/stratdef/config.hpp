#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stratdef/attacks.hpp"
#include "stratdef/strategy.hpp"

namespace stratdef {

struct SynthSpec {
  std::size_t phi = 64;
  std::size_t n_per_class = 400;
  double class_separation = 0.85;
};

struct DatasetSource {
  std::optional<SynthSpec> synth;       // either synth...
  std::filesystem::path path;           // ...or a file
  DatasetFormat format = DatasetFormat::SparseIndex;
};

struct ZooSpec {
  std::vector<ModelFamily> families = {ModelFamily::DT, ModelFamily::RF,
                                       ModelFamily::NN, ModelFamily::LSVM};
  std::vector<double> at_ratios = {0.001, 0.01, 0.05, 0.1, 0.25};
  bool rfn = true;
  double rfn_rate = 0.1;
  bool dd = true;
  double dd_temperature = 4.0;
  bool sec = true;
  double sec_bound = 0.2;
  bool sec_at = true;
  ModelHypers hypers;
};

struct EvaluateSpec {
  int repetitions = 5;
  int efficiency_queries = 1200;
  std::vector<std::string> efficiency_targets;  // empty: pipeline default
};

struct BlackboxSpec {
  std::vector<std::size_t> budgets = {2, 100, 200, 300, 400, 500};
  std::vector<std::string> targets;  // empty: pipeline default
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";

  DatasetSource dataset;
  std::filesystem::path policy_path;  // empty: synthetic family policy
  ZooSpec zoo;
  std::vector<AttackSpec> attacks;
  std::vector<std::string> attackers = {"weak", "medium", "strong", "random",
                                        "universal"};
  std::vector<SelectionMethod> selection_methods = {SelectionMethod::Best,
                                                    SelectionMethod::Variety};
  int selection_k = 5;
  std::vector<std::string> optimizers = {"GT", "Ranked", "URS"};
  std::vector<double> alpha_grid;       // default 0.0 .. 1.0 step 0.1
  std::size_t alpha_dataset_size = 0;   // 0: clean test-set size
  ScoreCombiner combiner;
  EvaluateSpec evaluate;
  BlackboxSpec blackbox;

  // Per-stage seeds; filled from `seed` when absent so every stochastic
  // stage always has one.
  std::map<std::string, std::uint64_t> seeds;

  std::uint64_t stage_seed(const std::string& stage) const;
  void validate() const;  // throws ConfigError
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config_json(const std::string& json_text,
                                   const std::filesystem::path& base_dir);

extern const std::vector<std::string> kStageOrder;

}  // namespace stratdef
