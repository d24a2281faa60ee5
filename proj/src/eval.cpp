#include "stratdef/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "stratdef/error.hpp"

namespace stratdef {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

EvalTarget target_of(const CandidateModel& model) {
  EvalTarget t;
  t.id = model.id;
  const CandidateModel* m = &model;
  t.predict = [m](const FeatureVector& x) { return m->predict(x); };
  t.stochastic = false;
  t.loaded_params = [m] { return m->param_count(); };
  return t;
}

double auc_rank(const std::vector<double>& scores,
                const std::vector<int>& labels) {
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y == kMalware ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) return kNan;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // average ranks within tie groups
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == kMalware) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricReport compute_metrics(
    const std::function<Prediction(const FeatureVector&)>& predict,
    const AlphaDataset& ds) {
  if (ds.entries.empty()) throw ContractError("compute_metrics: empty dataset");

  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t adv_total = 0, adv_benign = 0;
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(ds.entries.size());
  for (const AlphaEntry& e : ds.entries) {
    const Prediction p = predict(e.vector);
    scores.push_back(p.score);
    labels.push_back(e.true_label);
    if (e.true_label == kMalware) {
      (p.label == kMalware ? tp : fn)++;
    } else {
      (p.label == kBenign ? tn : fp)++;
    }
    if (e.is_adversarial) {
      ++adv_total;
      adv_benign += p.label == kBenign;
    }
  }

  MetricReport r;
  r.alpha = ds.alpha;
  const double total = static_cast<double>(tp + tn + fp + fn);
  r.metrics.acc = static_cast<double>(tp + tn) / total;
  r.metrics.f1 = (2 * tp + fp + fn) == 0
                     ? kNan
                     : 2.0 * static_cast<double>(tp) /
                           static_cast<double>(2 * tp + fp + fn);
  r.metrics.fpr = (fp + tn) == 0 ? kNan
                                 : static_cast<double>(fp) /
                                       static_cast<double>(fp + tn);
  r.metrics.fnr = (fn + tp) == 0 ? kNan
                                 : static_cast<double>(fn) /
                                       static_cast<double>(fn + tp);
  r.metrics.auc = auc_rank(scores, labels);
  r.evasion_rate = adv_total == 0 ? kNan
                                  : static_cast<double>(adv_benign) /
                                        static_cast<double>(adv_total);
  return r;
}

namespace {

// NaN-aware mean across repetition reports: a metric undefined in every
// repetition stays undefined.
double mean_defined(const std::vector<double>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  }
  return n == 0 ? kNan : sum / static_cast<double>(n);
}

}  // namespace

std::vector<MetricReport> evaluate_defense(
    EvalTarget& target, const std::string& gamma,
    const std::vector<AlphaDataset>& datasets, int repetitions,
    std::uint64_t seed) {
  std::vector<MetricReport> out;
  const int runs = target.stochastic ? std::max(1, repetitions) : 1;
  for (const AlphaDataset& ds : datasets) {
    if (target.set_alpha) target.set_alpha(ds.alpha);
    std::vector<MetricReport> reps;
    for (int rep = 0; rep < runs; ++rep) {
      if (target.reseed) {
        target.reseed(derive_seed(seed, target.id + "/" + gamma + "/rep" +
                                            std::to_string(rep)));
      }
      reps.push_back(compute_metrics(target.predict, ds));
    }
    MetricReport merged = reps.front();
    if (reps.size() > 1) {
      auto collect = [&](auto member) {
        std::vector<double> vals;
        for (const auto& r : reps) vals.push_back(member(r));
        return mean_defined(vals);
      };
      merged.metrics.acc =
          collect([](const MetricReport& r) { return r.metrics.acc; });
      merged.metrics.f1 =
          collect([](const MetricReport& r) { return r.metrics.f1; });
      merged.metrics.auc =
          collect([](const MetricReport& r) { return r.metrics.auc; });
      merged.metrics.fpr =
          collect([](const MetricReport& r) { return r.metrics.fpr; });
      merged.metrics.fnr =
          collect([](const MetricReport& r) { return r.metrics.fnr; });
      merged.evasion_rate =
          collect([](const MetricReport& r) { return r.evasion_rate; });
    }
    merged.target = target.id;
    merged.gamma = gamma;
    merged.alpha = ds.alpha;
    out.push_back(std::move(merged));
  }
  return out;
}

// ---------------------------------------------------------------------------

Prediction VotingDefense::vote(const FeatureVector& x) const {
  if (ensemble.empty()) throw ConfigError("voting: empty ensemble");
  std::size_t malware_votes = 0;
  double score_sum = 0.0;
  for (const CandidateModel* m : ensemble) {
    const Prediction p = m->predict(x);
    malware_votes += p.label == kMalware;
    score_sum += p.score;
  }
  bool malware;
  if (mode == VoteMode::Veto) {
    malware = malware_votes > 0;
  } else {
    malware = 2 * malware_votes >= ensemble.size();  // even tie -> malware
  }
  // score is the mean constituent score, reported for ranking only; the
  // label comes from the voting rule
  return {malware ? kMalware : kBenign,
          score_sum / static_cast<double>(ensemble.size())};
}

std::size_t VotingDefense::param_count() const {
  std::size_t n = 0;
  for (const CandidateModel* m : ensemble) n += m->param_count();
  return n;
}

EvalTarget target_of(const VotingDefense& voting) {
  EvalTarget t;
  t.id = voting.id;
  const VotingDefense* v = &voting;
  t.predict = [v](const FeatureVector& x) { return v->vote(x); };
  t.stochastic = false;
  t.loaded_params = [v] { return v->param_count(); };
  return t;
}

// ---------------------------------------------------------------------------

EfficiencyReport measure_efficiency(const EvalTarget& target,
                                    const std::vector<FeatureVector>& queries,
                                    int repetitions) {
  if (repetitions < 1000) {
    throw ContractError("measure_efficiency: need >= 1000 repetitions");
  }
  if (queries.empty()) throw ContractError("measure_efficiency: no queries");

  // warm-up pass so first-touch costs stay out of the measurement
  const int warmup = std::min(repetitions / 10, 200);
  for (int i = 0; i < warmup; ++i) {
    (void)target.predict(queries[static_cast<std::size_t>(i) % queries.size()]);
  }
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < repetitions; ++i) {
    (void)target.predict(queries[static_cast<std::size_t>(i) % queries.size()]);
  }
  const auto stop = std::chrono::steady_clock::now();
  const double seconds =
      std::chrono::duration<double>(stop - start).count() /
      static_cast<double>(repetitions);

  EfficiencyReport r;
  r.target = target.id;
  r.seconds_per_prediction = seconds;
  r.memory_proxy = target.loaded_params ? target.loaded_params() : 0;
  return r;
}

// ---------------------------------------------------------------------------

BlackboxRun blackbox_attack(EvalTarget& target, const Dataset& clean_test,
                            const PerturbationPolicy& policy,
                            const BlackboxSettings& settings,
                            std::uint64_t seed) {
  BlackboxRun run;
  run.target = target.id;
  run.budgets = settings.budgets;

  std::vector<std::size_t> benign_idx, malware_idx;
  for (std::size_t i = 0; i < clean_test.size(); ++i) {
    (clean_test.samples[i].label == kBenign ? benign_idx : malware_idx)
        .push_back(i);
  }
  if (benign_idx.empty() || malware_idx.empty()) {
    throw ConfigError("blackbox_attack: test set needs both classes");
  }

  for (std::size_t budget : settings.budgets) {
    if (budget < 2) throw ConfigError("blackbox budget must be >= 2");
    Rng rng(derive_seed(seed, target.id + "/budget" + std::to_string(budget)));
    if (target.reseed) {
      target.reseed(derive_seed(seed, target.id + "/oracle" +
                                          std::to_string(budget)));
    }

    // Balanced oracle queries; the recorded labels are the target's answers,
    // not ground truth.
    const std::size_t per_class = budget / 2;
    Dataset observed;
    observed.phi = clean_test.phi;
    std::size_t next_id = 0;
    auto query_class = [&](const std::vector<std::size_t>& cls,
                           std::size_t want) {
      for (std::size_t k : rng.sample_without_replacement(
               cls.size(), std::min(want, cls.size()))) {
        const Sample& s = clean_test.samples[cls[k]];
        const Prediction p = target.predict(s.vector);
        observed.samples.push_back(
            {s.vector, p.label, "q" + std::to_string(next_id++)});
      }
    };
    query_class(benign_idx, per_class);
    query_class(malware_idx, budget - per_class);

    const bool single_class = observed.count_label(kBenign) == 0 ||
                              observed.count_label(kMalware) == 0;
    run.degenerate[budget] = single_class;
    if (single_class) {
      run.evasion_by_budget[budget] = 0.0;
      run.agreement_by_budget[budget] = 0.0;
      continue;
    }

    NeuralNet substitute = NeuralNet::train(
        observed, settings.substitute_hyper,
        derive_seed(seed, "substitute" + std::to_string(budget)));

    // Substitute/target agreement over the full clean test split.
    if (target.reseed) {
      target.reseed(derive_seed(seed, target.id + "/agree" +
                                          std::to_string(budget)));
    }
    std::size_t agree = 0;
    for (const Sample& s : clean_test.samples) {
      agree += substitute.predict(s.vector).label ==
               target.predict(s.vector).label;
    }
    run.agreement_by_budget[budget] =
        static_cast<double>(agree) / static_cast<double>(clean_test.size());

    // White-box attacks against the substitute; only substitute-evading
    // candidates count, and transfer means the target also says benign.
    if (target.reseed) {
      target.reseed(derive_seed(seed, target.id + "/transfer" +
                                          std::to_string(budget)));
    }
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_attack;
    std::size_t union_total = 0, union_transfer = 0;
    std::unordered_set<std::uint64_t> seen;
    for (const std::size_t mi : malware_idx) {
      const Sample& s = clean_test.samples[mi];
      if (substitute.predict(s.vector).label != kMalware) continue;
      for (const char* attack : {"SALIENCY", "ITER_SIGN"}) {
        FeatureVector candidate =
            std::string(attack) == "SALIENCY"
                ? attack_saliency(substitute, s.vector, policy,
                                  settings.max_flips)
                : attack_iter_sign(substitute, s.vector, policy,
                                   settings.iterations, settings.max_flips);
        candidate = apply_policy(policy, s.vector, candidate);
        if (candidate == s.vector) continue;
        if (substitute.predict(candidate).label != kBenign) continue;
        const bool transfers = target.predict(candidate).label == kBenign;
        auto& [total, transferred] = per_attack[attack];
        ++total;
        transferred += transfers;
        if (seen.insert(candidate.hash()).second) {
          ++union_total;
          union_transfer += transfers;
        }
      }
    }
    for (const auto& [attack, counts] : per_attack) {
      run.evasion_by_attack[budget][attack] =
          counts.first == 0 ? 0.0
                            : static_cast<double>(counts.second) /
                                  static_cast<double>(counts.first);
    }
    run.evasion_by_budget[budget] =
        union_total == 0 ? 0.0
                         : static_cast<double>(union_transfer) /
                               static_cast<double>(union_total);
  }
  return run;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ContractError("spearman: need two equal-length series");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

namespace {

// Regularized incomplete gamma Q(a,x) by series / continued fraction.
double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw ContractError("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    // lower series for P, Q = 1 - P
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
  }
  // continued fraction for Q (modified Lentz)
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

}  // namespace

double chi_squared_pvalue(double statistic, int df) {
  if (df <= 0) throw ContractError("chi_squared_pvalue: df must be positive");
  if (statistic <= 0.0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * statistic);
}

}  // namespace stratdef
