#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stratdef/attacks.hpp"
#include "stratdef/threat.hpp"

namespace stratdef {

// ACC/F1/AUC/FPR/FNR; NaN marks an undefined metric (denominator zero, or a
// single-class dataset for AUC).
struct MetricSet {
  double acc = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

struct MetricReport {
  std::string target;
  std::string gamma;
  double alpha = 0.0;
  MetricSet metrics;
  double evasion_rate = 0.0;  // NaN when the dataset has no adversarial rows
};

// Anything that can answer prediction queries. `set_alpha` lets
// context-aware targets (the strategy engine) adapt to the evaluated threat
// level; `reseed` restarts a stochastic target's die stream.
struct EvalTarget {
  std::string id;
  std::function<Prediction(const FeatureVector&)> predict;
  bool stochastic = false;
  std::function<void(double)> set_alpha;        // optional
  std::function<void(std::uint64_t)> reseed;    // optional
  std::function<std::size_t()> loaded_params;   // memory proxy; optional
};

EvalTarget target_of(const CandidateModel& model);

// AUC by the rank statistic (probability a random positive outscores a
// random negative, ties counting 1/2).
double auc_rank(const std::vector<double>& scores,
                const std::vector<int>& labels);

MetricReport compute_metrics(
    const std::function<Prediction(const FeatureVector&)>& predict,
    const AlphaDataset& ds);

// Runs the target over every alpha dataset; stochastic targets are averaged
// over `repetitions` reseeded runs.
std::vector<MetricReport> evaluate_defense(
    EvalTarget& target, const std::string& gamma,
    const std::vector<AlphaDataset>& datasets, int repetitions,
    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Voting baselines

enum class VoteMode { Majority, Veto };

struct VotingDefense {
  std::string id;
  std::vector<const CandidateModel*> ensemble;
  VoteMode mode = VoteMode::Majority;

  // Majority: malware iff at least half the constituents say malware (the
  // even-split tie resolves to malware). Veto: malware iff any does.
  Prediction vote(const FeatureVector& x) const;
  std::size_t param_count() const;
};

EvalTarget target_of(const VotingDefense& voting);

// ---------------------------------------------------------------------------
// Efficiency

struct EfficiencyReport {
  std::string target;
  double seconds_per_prediction = 0.0;
  std::size_t memory_proxy = 0;  // parameter count of resident models
};

EfficiencyReport measure_efficiency(const EvalTarget& target,
                                    const std::vector<FeatureVector>& queries,
                                    int repetitions);

// ---------------------------------------------------------------------------
// Black-box substitute-model attack

struct BlackboxRun {
  std::string target;
  std::vector<std::size_t> budgets;
  std::map<std::size_t, double> evasion_by_budget;  // union over attacks
  std::map<std::size_t, std::map<std::string, double>> evasion_by_attack;
  std::map<std::size_t, double> agreement_by_budget;
  std::map<std::size_t, bool> degenerate;  // single-class oracle responses
};

struct BlackboxSettings {
  std::vector<std::size_t> budgets = {2, 100, 200, 300, 400, 500};
  int max_flips = 20;
  int iterations = 5;
  NnHyper substitute_hyper;
};

// Queries the target as an oracle with balanced samples, trains a substitute
// network on the observed input/output pairs, attacks the substitute
// (saliency + iterative sign, policy-verified) and measures how the
// substitute-evading examples transfer to the target.
BlackboxRun blackbox_attack(EvalTarget& target, const Dataset& clean_test,
                            const PerturbationPolicy& policy,
                            const BlackboxSettings& settings,
                            std::uint64_t seed);

// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Upper-tail chi^2 probability Q(chi2 | df) via the regularized incomplete
// gamma function.
double chi_squared_pvalue(double statistic, int df);

}  // namespace stratdef
