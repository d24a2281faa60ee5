#include "stratdef/threat.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "stratdef/error.hpp"
#include "stratdef/textio.hpp"

namespace stratdef {

NormalizedEvasionRate normalized_evasion_rate(const AdversarialSet& set,
                                              const CandidateModel& target,
                                              std::size_t pool_max) {
  NormalizedEvasionRate r;
  r.attack = set.attack;
  r.substitute = set.substitute;
  r.target = target.id;
  if (set.examples.empty() || pool_max == 0) {
    r.value = 0.0;
    return r;
  }
  if (pool_max < set.examples.size()) {
    throw ContractError("pool_max smaller than |set|; normalization broken");
  }
  std::size_t evading = 0;
  for (const AdversarialExample& ex : set.examples) {
    evading += target.predict(ex.vector).label == kBenign;
  }
  const double evasion_rate = static_cast<double>(evading) /
                              static_cast<double>(set.examples.size());
  r.value = 100.0 * (static_cast<double>(set.examples.size()) * evasion_rate) /
            static_cast<double>(pool_max);
  return r;
}

namespace {

std::string rate_key(AttackTag attack, const std::string& substitute,
                     const std::string& target) {
  return attack_name(attack) + '\x1f' + substitute + '\x1f' + target;
}

}  // namespace

void RateTable::put(const NormalizedEvasionRate& r) {
  entries_.push_back(r);
  index_[rate_key(r.attack, r.substitute, r.target)] = r.value;
}

bool RateTable::has(AttackTag attack, const std::string& substitute,
                    const std::string& target) const {
  return index_.count(rate_key(attack, substitute, target)) > 0;
}

double RateTable::get(AttackTag attack, const std::string& substitute,
                      const std::string& target) const {
  auto it = index_.find(rate_key(attack, substitute, target));
  if (it == index_.end()) {
    throw ConfigError("missing evasion rate for (" + attack_name(attack) +
                      ", " + substitute + ") vs " + target);
  }
  return it->second;
}

double RateTable::max_over(AttackTag attack, const std::string& substitute,
                           const std::vector<std::string>& targets) const {
  double best = 0.0;
  bool any = false;
  for (const std::string& t : targets) {
    const double v = get(attack, substitute, t);
    if (!any || v > best) best = v;
    any = true;
  }
  if (!any) throw ContractError("max_over: empty target list");
  return best;
}

std::vector<AttackerProfile> standard_profiles() {
  return {
      {"weak", 0.0, 40.0, false, PoolingRule::Random, false},
      {"medium", 40.0, 80.0, true, PoolingRule::Random, false},
      {"strong", 80.0, 100.0, true, PoolingRule::Weighted, false},
      {"random", 0.0, 100.0, true, PoolingRule::Random, false},
      {"universal", 0.0, 100.0, true, PoolingRule::Random, true},
  };
}

const AttackerProfile& profile_by_name(
    const std::vector<AttackerProfile>& profiles, const std::string& name) {
  for (const auto& p : profiles) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown attacker profile: " + name);
}

std::map<std::string, AttackerPool> assign_sets(
    const std::vector<AttackerProfile>& profiles,
    const std::vector<AdversarialSet>& all_sets,
    const std::vector<std::string>& targets, const RateTable& rates,
    const std::vector<UAPRecord>& uaps) {
  // Qualifying rate per set, per observability mode.
  struct SetInfo {
    const AdversarialSet* set;
    double rate_transfer;  // max over targets
    double rate_own;       // against the set's own substitute
  };
  std::vector<SetInfo> infos;
  for (const AdversarialSet& set : all_sets) {
    SetInfo info{&set, 0.0, 0.0};
    info.rate_transfer = rates.max_over(set.attack, set.substitute, targets);
    info.rate_own = rates.get(set.attack, set.substitute, set.substitute);
    infos.push_back(info);
  }
  // Higher-rate sets first so deduplication keeps the most evasive
  // provenance; ties by set name for determinism.
  std::sort(infos.begin(), infos.end(), [](const SetInfo& a, const SetInfo& b) {
    if (a.rate_transfer != b.rate_transfer) {
      return a.rate_transfer > b.rate_transfer;
    }
    return a.set->name() < b.set->name();
  });

  // UAP-generated example keys: "set-name/original-id".
  std::unordered_set<std::string> uap_examples;
  for (const UAPRecord& rec : uaps) {
    for (const std::string& id : rec.example_ids) uap_examples.insert(id);
  }

  std::map<std::string, AttackerPool> pools;
  for (const AttackerProfile& profile : profiles) {
    AttackerPool pool;
    pool.gamma = profile.name;
    std::unordered_set<std::uint64_t> seen;
    for (const SetInfo& info : infos) {
      const double rate =
          profile.observes_transferability ? info.rate_transfer : info.rate_own;
      if (!profile.uaps_only &&
          (rate < profile.strength_lo || rate > profile.strength_hi)) {
        continue;
      }
      std::size_t taken = 0;
      for (const AdversarialExample& ex : info.set->examples) {
        if (profile.uaps_only &&
            !uap_examples.count(info.set->name() + "/" + ex.original_id)) {
          continue;
        }
        ++taken;
        if (!seen.insert(ex.vector.hash()).second) continue;
        pool.entries.push_back(
            {ex.vector, ex.original_id, info.set->name(), rate});
      }
      if (taken > 0) {
        pool.qualified.push_back({info.set->attack, info.set->substitute});
      }
    }
    pools[profile.name] = std::move(pool);
  }
  return pools;
}

namespace {

// k draws without replacement, probability proportional to weight.
std::vector<std::size_t> weighted_sample_without_replacement(
    const std::vector<double>& weights, std::size_t k, Rng& rng) {
  std::vector<std::size_t> alive(weights.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
  std::vector<double> w = weights;
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t draw = 0; draw < k && !alive.empty(); ++draw) {
    double total = 0.0;
    for (std::size_t i : alive) total += w[i];
    std::size_t chosen_pos = alive.size() - 1;
    if (total <= 0.0) {
      chosen_pos = static_cast<std::size_t>(rng.below(alive.size()));
    } else {
      const double ticket = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t pos = 0; pos < alive.size(); ++pos) {
        acc += w[alive[pos]];
        if (ticket < acc) {
          chosen_pos = pos;
          break;
        }
      }
    }
    out.push_back(alive[chosen_pos]);
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(chosen_pos));
  }
  return out;
}

}  // namespace

std::vector<AlphaDataset> build_alpha_datasets(
    const AttackerPool& pool, PoolingRule pooling, const Dataset& clean_test,
    const std::vector<double>& alpha_grid, std::size_t total_size,
    std::uint64_t seed) {
  if (clean_test.count_label(kBenign) == 0 ||
      clean_test.count_label(kMalware) == 0) {
    throw ConfigError("alpha datasets need both classes in the clean test set");
  }
  std::vector<std::size_t> benign_idx, malware_idx;
  for (std::size_t i = 0; i < clean_test.size(); ++i) {
    (clean_test.samples[i].label == kBenign ? benign_idx : malware_idx)
        .push_back(i);
  }

  std::vector<double> weights;
  for (const PoolEntry& e : pool.entries) weights.push_back(e.source_rate);

  std::vector<AlphaDataset> out;
  for (double alpha : alpha_grid) {
    AlphaDataset ds;
    ds.alpha = alpha;
    Rng rng(derive_seed(seed, pool.gamma + "/alpha=" + fmt_double(alpha)));

    const auto n_adv = static_cast<std::size_t>(
        std::llround(alpha * static_cast<double>(total_size)));
    if (n_adv > 0 && pool.entries.empty()) {
      throw ConfigError("attacker '" + pool.gamma +
                        "' has an empty pool but alpha > 0");
    }

    // Adversarial entries per the pooling rule.
    std::vector<std::size_t> picks;
    if (n_adv > 0) {
      if (n_adv <= pool.entries.size()) {
        picks = pooling == PoolingRule::Weighted
                    ? weighted_sample_without_replacement(weights, n_adv, rng)
                    : rng.sample_without_replacement(pool.entries.size(), n_adv);
      } else {
        ds.drew_with_replacement = true;
        for (std::size_t i = 0; i < n_adv; ++i) {
          if (pooling == PoolingRule::Weighted) {
            double total = 0.0;
            for (double w : weights) total += w;
            const double ticket = rng.uniform() * std::max(total, 1e-300);
            double acc = 0.0;
            std::size_t chosen = weights.size() - 1;
            for (std::size_t j = 0; j < weights.size(); ++j) {
              acc += weights[j];
              if (ticket < acc) {
                chosen = j;
                break;
              }
            }
            picks.push_back(chosen);
          } else {
            picks.push_back(
                static_cast<std::size_t>(rng.below(pool.entries.size())));
          }
        }
      }
    }
    for (std::size_t p : picks) {
      const PoolEntry& e = pool.entries[p];
      ds.entries.push_back(
          {e.vector, kMalware, true, e.source_set + "/" + e.original_id});
    }

    // Clean remainder: equal benign / non-adversarial malware split.
    const std::size_t n_rest = total_size - std::min(n_adv, total_size);
    const std::size_t n_ben = n_rest / 2;
    const std::size_t n_mal = n_rest - n_ben;
    auto draw_clean = [&](const std::vector<std::size_t>& cls,
                          std::size_t want) {
      std::vector<std::size_t> chosen;
      if (want <= cls.size()) {
        for (std::size_t k : rng.sample_without_replacement(cls.size(), want)) {
          chosen.push_back(cls[k]);
        }
      } else {
        ds.drew_with_replacement = true;
        for (std::size_t i = 0; i < want; ++i) {
          chosen.push_back(cls[rng.below(cls.size())]);
        }
      }
      for (std::size_t i : chosen) {
        const Sample& s = clean_test.samples[i];
        ds.entries.push_back({s.vector, s.label, false, "test/" + s.id});
      }
    };
    draw_clean(benign_idx, n_ben);
    draw_clean(malware_idx, n_mal);

    rng.shuffle(ds.entries);
    out.push_back(std::move(ds));
  }
  return out;
}

void save_alpha_manifest(const std::filesystem::path& path,
                         const AlphaDataset& ds) {
  std::ostringstream out;
  out << "#alpha " << fmt_double(ds.alpha) << '\n';
  out << "#entries " << ds.entries.size() << '\n';
  out << "#with_replacement " << (ds.drew_with_replacement ? 1 : 0) << '\n';
  for (std::size_t i = 0; i < ds.entries.size(); ++i) {
    const AlphaEntry& e = ds.entries[i];
    out << i << ' ' << (e.is_adversarial ? "adv" : (e.true_label ? "mal" : "ben"))
        << ' ' << e.source << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace stratdef
