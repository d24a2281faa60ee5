#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stratdef/config.hpp"

namespace stratdef {

// Orchestrates the experiment stages with content-addressed caching: a stage
// reruns only when the hash of its configuration and upstream artifacts
// changed. Stage order: data, attack, train, profile, select, strategize,
// evaluate, blackbox, report. (Attack precedes train because adversarially
// trained zoo members consume the defender's generated examples.)
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig cfg);

  // Runs the requested stages (plus nothing else) in dependency order.
  // "all" expands to every stage. Throws ConfigError when an upstream
  // artifact is missing, naming the stage to run first.
  void run(const std::vector<std::string>& stages);

  static const std::vector<std::string>& stage_order();

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& out_dir() const { return cfg_.out_dir; }

  // Exposed for tests and the report tooling.
  struct State;
  State& state() { return *state_; }

 private:
  bool stage_fresh(const std::string& stage, const std::string& hash) const;
  void write_stamp(const std::string& stage, const std::string& hash);
  std::string stage_hash(const std::string& stage) const;
  void require_upstream(const std::string& stage) const;

  void run_data(bool cached);
  void run_attack(bool cached);
  void run_train(bool cached);
  void run_profile(bool cached);
  void run_select(bool cached);
  void run_strategize(bool cached);
  void run_evaluate(bool cached);
  void run_blackbox(bool cached);
  void run_report(bool cached);

  ExperimentConfig cfg_;
  std::unique_ptr<State> state_;
};

// Roles for the two independent generation runs.
enum class Role { Defender, Attacker };
std::string role_name(Role role);

struct StrategyKey {
  SelectionMethod method;
  std::string optimizer;
  std::string gamma;

  std::string defense_id() const;   // StratDef-<Method>-<Optimizer>
  std::string file_name() const;    // StratDef-<Method>-<Optimizer>_<gamma>
  auto operator<=>(const StrategyKey&) const = default;
};

struct Pipeline::State {
  Dataset balanced;
  SplitSpec splits;
  Dataset train_split, validation_split, test_split;
  PerturbationPolicy policy;
  std::vector<std::string> families;

  ModelZoo zoo;  // includes the SUB-* attacker substitutes at the tail
  std::vector<std::string> zoo_ids;  // candidate set U (no SUB-*)
  std::map<std::string, double> clean_accuracy;

  std::map<Role, std::vector<AdversarialSet>> sets;
  std::map<Role, std::vector<UAPRecord>> uaps;
  std::map<Role, RateTable> rates;
  std::map<Role, std::size_t> pool_max;
  std::map<Role, std::map<std::string, AttackerPool>> pools;
  std::map<Role, std::map<std::string, std::vector<AlphaDataset>>> alpha_sets;

  std::map<std::string, std::vector<ConsiderationScore>> scores;  // per gamma
  std::map<std::pair<SelectionMethod, std::string>, ModelSelection> selections;
  std::map<StrategyKey, StrategyVector> strategies;

  std::set<std::string> loaded_stages;
};

}  // namespace stratdef
