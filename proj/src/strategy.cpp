#include "stratdef/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "stratdef/error.hpp"
#include "stratdef/textio.hpp"

namespace stratdef {

std::string selection_name(SelectionMethod m) {
  return m == SelectionMethod::Best ? "Best" : "Variety";
}

std::vector<ConsiderationScore> score_models(
    const ModelZoo& zoo, const std::string& gamma,
    const std::vector<AlphaDataset>& datasets, const ScoreCombiner& combiner) {
  if (datasets.empty()) throw ConfigError("score_models: no alpha datasets");

  std::vector<ConsiderationScore> out;
  for (const CandidateModel& model : zoo) {
    std::vector<ConsiderationScore> rows;
    for (const AlphaDataset& ds : datasets) {
      const MetricReport r = compute_metrics(
          [&](const FeatureVector& x) { return model.predict(x); }, ds);
      ConsiderationScore s;
      s.model = model.id;
      s.gamma = gamma;
      s.alpha = ds.alpha;
      s.metrics = r.metrics;
      rows.push_back(s);
    }
    // AUC and FPR are undefined on single-class rows (alpha = 1): use the
    // model's average of the metric across the other intensities.
    auto substitute = [&](double MetricSet::*field) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& row : rows) {
        const double v = row.metrics.*field;
        if (!std::isnan(v)) {
          sum += v;
          ++n;
        }
      }
      const double fallback = n > 0 ? sum / static_cast<double>(n) : 0.0;
      for (auto& row : rows) {
        if (std::isnan(row.metrics.*field)) row.metrics.*field = fallback;
      }
    };
    substitute(&MetricSet::auc);
    substitute(&MetricSet::fpr);
    for (auto& row : rows) {
      row.value = combiner.combine(row.metrics);
      out.push_back(std::move(row));
    }
  }
  return out;
}

namespace {

struct ScoredModel {
  std::string id;
  double value;
};

// Descending by score, ties by lexicographic id.
void sort_descending(std::vector<ScoredModel>& v) {
  std::sort(v.begin(), v.end(), [](const ScoredModel& a, const ScoredModel& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.id < b.id;
  });
}

std::vector<double> alpha_grid_of(const std::vector<ConsiderationScore>& scores) {
  std::set<double> grid;
  for (const auto& s : scores) grid.insert(s.alpha);
  return {grid.begin(), grid.end()};
}

std::vector<ScoredModel> scores_at(
    const std::vector<ConsiderationScore>& scores, double alpha) {
  std::vector<ScoredModel> v;
  for (const auto& s : scores) {
    if (s.alpha == alpha) v.push_back({s.model, s.value});
  }
  sort_descending(v);
  return v;
}

void finish_selection(ModelSelection& sel) {
  std::set<std::string> pooled;
  for (const auto& models : sel.per_alpha) {
    pooled.insert(models.begin(), models.end());
  }
  sel.pooled.assign(pooled.begin(), pooled.end());
}

}  // namespace

ModelSelection select_best(const std::vector<ConsiderationScore>& scores,
                           const ModelZoo& zoo, int k) {
  if (k <= 0) throw ConfigError("select_best: k must be positive");
  if (scores.empty()) throw ConfigError("select_best: no scores");

  ModelSelection sel;
  sel.gamma = scores.front().gamma;
  sel.method = SelectionMethod::Best;
  sel.k = k;
  sel.alpha_grid = alpha_grid_of(scores);
  for (double alpha : sel.alpha_grid) {
    auto ranked = scores_at(scores, alpha);
    std::vector<std::string> chosen;
    for (std::size_t i = 0;
         i < ranked.size() && i < static_cast<std::size_t>(k); ++i) {
      chosen.push_back(ranked[i].id);
    }
    sel.per_alpha.push_back(std::move(chosen));
  }
  finish_selection(sel);
  (void)zoo;
  return sel;
}

ModelSelection select_variety(const std::vector<ConsiderationScore>& scores,
                              const ModelZoo& zoo) {
  if (scores.empty()) throw ConfigError("select_variety: no scores");
  ModelSelection sel;
  sel.gamma = scores.front().gamma;
  sel.method = SelectionMethod::Variety;
  sel.alpha_grid = alpha_grid_of(scores);
  for (double alpha : sel.alpha_grid) {
    auto ranked = scores_at(scores, alpha);
    // highest-scoring model of each family present in the zoo
    std::vector<std::string> chosen;
    std::set<ModelFamily> taken;
    for (const auto& sm : ranked) {
      const ModelFamily fam = find_model(zoo, sm.id).family;
      if (taken.insert(fam).second) chosen.push_back(sm.id);
    }
    std::sort(chosen.begin(), chosen.end());
    sel.per_alpha.push_back(std::move(chosen));
  }
  finish_selection(sel);
  return sel;
}

void save_selection(const std::filesystem::path& path,
                    const ModelSelection& sel) {
  std::ostringstream out;
  out << "gamma " << sel.gamma << '\n';
  out << "method " << selection_name(sel.method) << '\n';
  out << "k " << sel.k << '\n';
  for (std::size_t i = 0; i < sel.alpha_grid.size(); ++i) {
    out << "alpha " << fmt_double(sel.alpha_grid[i]);
    for (const auto& id : sel.per_alpha[i]) out << ' ' << id;
    out << '\n';
  }
  out << "pooled";
  for (const auto& id : sel.pooled) out << ' ' << id;
  out << '\n';
  write_text_file(path, out.str());
}

ModelSelection load_selection(const std::filesystem::path& path) {
  ModelSelection sel;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "gamma") {
      sel.gamma = toks.at(1);
    } else if (toks[0] == "method") {
      sel.method = toks.at(1) == "Best" ? SelectionMethod::Best
                                        : SelectionMethod::Variety;
    } else if (toks[0] == "k") {
      sel.k = static_cast<int>(parse_int(toks.at(1), "selection k"));
    } else if (toks[0] == "alpha") {
      sel.alpha_grid.push_back(parse_double(toks.at(1), "selection alpha"));
      sel.per_alpha.emplace_back(toks.begin() + 2, toks.end());
    } else if (toks[0] == "pooled") {
      sel.pooled.assign(toks.begin() + 1, toks.end());
    }
  }
  return sel;
}

const std::vector<double>& StrategyVector::row_for(double alpha) const {
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    if (std::abs(alpha_grid[i] - alpha) < 1e-9) return rows[i];
  }
  throw ContractError("alpha " + fmt_double(alpha) + " is not on the grid");
}

namespace {

// Pure row on the most accurate model (ties by lexicographic id), restricted
// to `candidates`.
std::vector<double> pure_most_accurate(
    const std::vector<std::string>& row_models,
    const std::vector<std::string>& candidates,
    const std::map<std::string, double>& clean_accuracy) {
  std::string best;
  double best_acc = -1.0;
  for (const std::string& id : candidates) {
    auto it = clean_accuracy.find(id);
    if (it == clean_accuracy.end()) {
      throw ConfigError("missing clean accuracy for " + id);
    }
    if (it->second > best_acc ||
        (it->second == best_acc && (best.empty() || id < best))) {
      best_acc = it->second;
      best = id;
    }
  }
  std::vector<double> row(row_models.size(), 0.0);
  for (std::size_t i = 0; i < row_models.size(); ++i) {
    if (row_models[i] == best) row[i] = 1.0;
  }
  return row;
}

}  // namespace

StrategyVector optimize_gt(
    const ModelSelection& selection,
    const std::vector<AttackerMove>& attacker_moves, const RateTable& rates,
    const std::map<std::string, double>& clean_accuracy,
    const std::function<void(double, const GameInstance&,
                             const GameSolution&)>& dump_game) {
  if (selection.pooled.empty()) throw ConfigError("optimize_gt: empty pool");
  StrategyVector z;
  z.gamma = selection.gamma;
  z.optimizer = "GT";
  z.alpha_grid = selection.alpha_grid;
  z.models = selection.pooled;

  for (double alpha : z.alpha_grid) {
    if (alpha == 0.0) {
      // only legitimate traffic: pure strategy on the most accurate model
      z.rows.push_back(
          pure_most_accurate(z.models, selection.pooled, clean_accuracy));
      continue;
    }
    GameInstance g =
        build_game(selection.pooled, attacker_moves, rates, clean_accuracy,
                   alpha);
    GameSolution s = solve_stackelberg(g);
    if (dump_game) dump_game(alpha, g, s);
    z.rows.push_back(s.leader_strategy);
  }
  return z;
}

StrategyVector optimize_ranked(
    const ModelSelection& selection,
    const std::vector<ConsiderationScore>& scores,
    const std::map<std::string, double>& clean_accuracy) {
  if (selection.pooled.empty()) throw ConfigError("optimize_ranked: empty pool");
  StrategyVector z;
  z.gamma = selection.gamma;
  z.optimizer = "Ranked";
  z.alpha_grid = selection.alpha_grid;
  z.models = selection.pooled;

  for (std::size_t ai = 0; ai < z.alpha_grid.size(); ++ai) {
    const double alpha = z.alpha_grid[ai];
    const auto& sigma = selection.per_alpha[ai];
    if (alpha == 0.0) {
      z.rows.push_back(pure_most_accurate(z.models, sigma, clean_accuracy));
      continue;
    }
    // Ranks come from the same descending sort the selection used, so tied
    // scores get distinct consecutive ranks and sum(r) = n(n+1)/2.
    std::vector<ScoredModel> ranked;
    for (const auto& s : scores) {
      if (s.alpha == alpha &&
          std::find(sigma.begin(), sigma.end(), s.model) != sigma.end()) {
        ranked.push_back({s.model, s.value});
      }
    }
    if (ranked.size() != sigma.size()) {
      throw ConfigError("optimize_ranked: scores missing for some of Sigma");
    }
    sort_descending(ranked);
    const std::size_t n = ranked.size();
    const double rank_sum = static_cast<double>(n * (n + 1)) / 2.0;
    std::vector<double> row(z.models.size(), 0.0);
    for (std::size_t pos = 0; pos < n; ++pos) {
      const double rank = static_cast<double>(n - pos);  // best gets rank n
      const auto slot = std::find(z.models.begin(), z.models.end(),
                                  ranked[pos].id);
      row[static_cast<std::size_t>(slot - z.models.begin())] =
          rank / rank_sum;
    }
    z.rows.push_back(std::move(row));
  }
  return z;
}

StrategyVector optimize_urs(const ModelSelection& selection) {
  if (selection.pooled.empty()) throw ConfigError("optimize_urs: empty pool");
  StrategyVector z;
  z.gamma = selection.gamma;
  z.optimizer = "URS";
  z.alpha_grid = selection.alpha_grid;
  z.models = selection.pooled;
  const double p = 1.0 / static_cast<double>(selection.pooled.size());
  for (std::size_t i = 0; i < z.alpha_grid.size(); ++i) {
    z.rows.push_back(std::vector<double>(z.models.size(), p));
  }
  return z;
}

void save_strategy(const std::filesystem::path& path,
                   const StrategyVector& z) {
  std::ostringstream out;
  out << "model";
  for (double a : z.alpha_grid) out << ' ' << fmt_double(a);
  out << '\n';
  for (std::size_t m = 0; m < z.models.size(); ++m) {
    out << z.models[m];
    for (std::size_t ai = 0; ai < z.alpha_grid.size(); ++ai) {
      out << ' ' << fmt_fixed(z.rows[ai][m], 6);
    }
    out << '\n';
  }
  write_text_file(path, out.str());
}

StrategyVector load_strategy(const std::filesystem::path& path,
                             const std::string& gamma,
                             const std::string& optimizer) {
  StrategyVector z;
  z.gamma = gamma;
  z.optimizer = optimizer;
  std::istringstream in(read_text_file(path));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (header) {
      if (toks[0] != "model") {
        throw ParseError(path.string() + ": missing strategy header");
      }
      for (std::size_t i = 1; i < toks.size(); ++i) {
        z.alpha_grid.push_back(parse_double(toks[i], "strategy alpha"));
      }
      z.rows.assign(z.alpha_grid.size(), {});
      header = false;
      continue;
    }
    if (toks.size() != z.alpha_grid.size() + 1) {
      throw ParseError(path.string() + ": ragged strategy row");
    }
    z.models.push_back(toks[0]);
    for (std::size_t i = 1; i < toks.size(); ++i) {
      z.rows[i - 1].push_back(parse_double(toks[i], "strategy probability"));
    }
  }
  if (header) throw ParseError(path.string() + ": empty strategy file");
  return z;
}

// ---------------------------------------------------------------------------

StrategyEngine::StrategyEngine(StrategyVector z, ModelProvider provider,
                               std::uint64_t seed)
    : z_(std::move(z)), provider_(std::move(provider)), rng_(seed) {
  if (z_.alpha_grid.empty() || z_.models.empty()) {
    throw ConfigError("strategy engine: empty strategy vector");
  }
  // absent threat information: peak intensity
  alpha_ = z_.alpha_grid.back();
  row_ = z_.alpha_grid.size() - 1;
  loaded_.assign(z_.models.size(), nullptr);
  load_row();
}

std::size_t StrategyEngine::alpha_index(double alpha) const {
  for (std::size_t i = 0; i < z_.alpha_grid.size(); ++i) {
    if (std::abs(z_.alpha_grid[i] - alpha) < 1e-9) return i;
  }
  throw ContractError("engine: alpha " + fmt_double(alpha) +
                      " is not on the strategy grid");
}

void StrategyEngine::set_alpha(double alpha) {
  row_ = alpha_index(alpha);
  alpha_ = z_.alpha_grid[row_];
  load_row();
}

void StrategyEngine::reseed(std::uint64_t seed) { rng_ = Rng(seed); }

void StrategyEngine::load_row() {
  // Loading contract: exactly the nonzero-probability models of the active
  // row stay resident.
  const auto& row = z_.rows[row_];
  for (std::size_t m = 0; m < z_.models.size(); ++m) {
    if (row[m] > 0.0) {
      if (!loaded_[m]) {
        loaded_[m] = provider_(z_.models[m]);
        if (!loaded_[m]) {
          throw EngineError("model provider returned null for " + z_.models[m]);
        }
      }
    } else {
      loaded_[m] = nullptr;
    }
  }
}

Prediction StrategyEngine::predict(const FeatureVector& x) {
  const auto& row = z_.rows[row_];
  double total = 0.0;
  for (double p : row) total += p;
  if (total <= 0.0) throw EngineError("engine: all-zero strategy row");

  const double ticket = rng_.uniform() * total;
  double acc = 0.0;
  std::size_t chosen = row.size() - 1;
  for (std::size_t m = 0; m < row.size(); ++m) {
    acc += row[m];
    if (ticket < acc) {
      chosen = m;
      break;
    }
  }
  // the residual bucket from rounding must still be a loaded model
  while (chosen > 0 && row[chosen] <= 0.0) --chosen;
  if (!loaded_[chosen]) {
    throw EngineError("engine: drew unloaded model " + z_.models[chosen]);
  }
  audit_.push_back(z_.models[chosen]);
  return loaded_[chosen]->predict(x);
}

std::vector<std::string> StrategyEngine::loaded_ids() const {
  std::vector<std::string> ids;
  for (std::size_t m = 0; m < loaded_.size(); ++m) {
    if (loaded_[m]) ids.push_back(z_.models[m]);
  }
  return ids;
}

std::size_t StrategyEngine::loaded_param_count() const {
  std::size_t n = 0;
  for (const auto& m : loaded_) {
    if (m) n += m->param_count();
  }
  return n;
}

EvalTarget StrategyEngine::as_target(const std::string& id) {
  EvalTarget t;
  t.id = id;
  t.stochastic = true;
  t.predict = [this](const FeatureVector& x) { return predict(x); };
  t.set_alpha = [this](double alpha) { set_alpha(alpha); };
  t.reseed = [this](std::uint64_t seed) { reseed(seed); };
  t.loaded_params = [this] { return loaded_param_count(); };
  return t;
}

}  // namespace stratdef
