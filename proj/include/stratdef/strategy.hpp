#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stratdef/eval.hpp"
#include "stratdef/game.hpp"

namespace stratdef {

// Weighted signed sum over the five metrics; defaults give
// ACC + F1 + AUC - FPR - FNR.
struct ScoreCombiner {
  double w_acc = 1.0;
  double w_f1 = 1.0;
  double w_auc = 1.0;
  double w_fpr = -1.0;
  double w_fnr = -1.0;

  double combine(const MetricSet& m) const {
    return w_acc * m.acc + w_f1 * m.f1 + w_auc * m.auc + w_fpr * m.fpr +
           w_fnr * m.fnr;
  }
};

struct ConsiderationScore {
  std::string model;
  std::string gamma;
  double alpha = 0.0;
  MetricSet metrics;  // AUC/FPR at alpha=1 already substituted
  double value = 0.0;
};

// Scores every model on every alpha dataset of one attacker. AUC and FPR are
// undefined on the single-class alpha=1 dataset, so that row substitutes the
// model's average of the metric across the other intensities before
// combining.
std::vector<ConsiderationScore> score_models(
    const ModelZoo& zoo, const std::string& gamma,
    const std::vector<AlphaDataset>& datasets, const ScoreCombiner& combiner);

enum class SelectionMethod { Best, Variety };

std::string selection_name(SelectionMethod m);

struct ModelSelection {
  std::string gamma;
  SelectionMethod method = SelectionMethod::Best;
  int k = 0;  // Best only
  std::vector<double> alpha_grid;
  std::vector<std::vector<std::string>> per_alpha;  // Sigma(gamma, alpha)
  std::vector<std::string> pooled;                  // Sigma(gamma), sorted
};

ModelSelection select_best(const std::vector<ConsiderationScore>& scores,
                           const ModelZoo& zoo, int k);
ModelSelection select_variety(const std::vector<ConsiderationScore>& scores,
                              const ModelZoo& zoo);

void save_selection(const std::filesystem::path& path,
                    const ModelSelection& sel);
ModelSelection load_selection(const std::filesystem::path& path);

// Per-intensity probability rows over the pooled selection.
struct StrategyVector {
  std::string gamma;
  std::string optimizer;  // GT | Ranked | URS
  std::vector<double> alpha_grid;
  std::vector<std::string> models;         // row order of the file
  std::vector<std::vector<double>> rows;   // [alpha][model]

  const std::vector<double>& row_for(double alpha) const;
};

// Game-theoretic optimizer: one Bayesian Stackelberg game per intensity over
// the pooled selection. At alpha=0 the row is pure on the most accurate
// model. `dump_game` (optional) receives each solved game for auditing.
StrategyVector optimize_gt(
    const ModelSelection& selection,
    const std::vector<AttackerMove>& attacker_moves, const RateTable& rates,
    const std::map<std::string, double>& clean_accuracy,
    const std::function<void(double, const GameInstance&,
                             const GameSolution&)>& dump_game = nullptr);

// Ranked optimizer: within Sigma(gamma, alpha), ascending consideration-score
// ranks 1..n and p = rank / sum(ranks); pure most-accurate row at alpha=0.
StrategyVector optimize_ranked(const ModelSelection& selection,
                               const std::vector<ConsiderationScore>& scores,
                               const std::map<std::string, double>& clean_accuracy);

// Uniform 1/|Sigma(gamma)| at every intensity, alpha=0 included.
StrategyVector optimize_urs(const ModelSelection& selection);

// Appendix-style strategy file: header row of intensities, then one row per
// model with probabilities at six decimal places.
void save_strategy(const std::filesystem::path& path,
                   const StrategyVector& z);
StrategyVector load_strategy(const std::filesystem::path& path,
                             const std::string& gamma,
                             const std::string& optimizer);

// ---------------------------------------------------------------------------
// Prediction-time engine: rolls a biased die over the active row and
// delegates to the drawn model. Only models with nonzero probability at the
// active intensity are kept loaded. Without context information the engine
// assumes the peak threat level (the vector it was built from should then be
// the strong attacker's; alpha defaults to the top of the grid).
class StrategyEngine {
 public:
  using ModelProvider =
      std::function<std::shared_ptr<const CandidateModel>(const std::string&)>;

  StrategyEngine(StrategyVector z, ModelProvider provider, std::uint64_t seed);

  void set_alpha(double alpha);  // must be on the grid
  double alpha() const { return alpha_; }
  void reseed(std::uint64_t seed);

  Prediction predict(const FeatureVector& x);

  const std::vector<std::string>& audit_log() const { return audit_; }
  void clear_audit() { audit_.clear(); }
  std::vector<std::string> loaded_ids() const;
  std::size_t loaded_param_count() const;

  const StrategyVector& strategy() const { return z_; }
  EvalTarget as_target(const std::string& id);

 private:
  std::size_t alpha_index(double alpha) const;
  void load_row();

  StrategyVector z_;
  ModelProvider provider_;
  Rng rng_;
  double alpha_ = 1.0;
  std::size_t row_ = 0;
  std::vector<std::shared_ptr<const CandidateModel>> loaded_;  // per model slot
  std::vector<std::string> audit_;
};

}  // namespace stratdef
