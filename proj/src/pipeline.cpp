#include "stratdef/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "stratdef/error.hpp"
#include "stratdef/textio.hpp"

namespace stratdef {

namespace fs = std::filesystem;

std::string role_name(Role role) {
  return role == Role::Defender ? "defender" : "attacker";
}

std::string StrategyKey::defense_id() const {
  return "StratDef-" + selection_name(method) + "-" + optimizer;
}

std::string StrategyKey::file_name() const {
  return defense_id() + "_" + gamma;
}

const std::vector<std::string>& Pipeline::stage_order() {
  // Attack precedes train: adversarially trained zoo members consume the
  // defender's generated examples.
  static const std::vector<std::string> order = {
      "data",   "attack",     "train",    "profile",  "select",
      "strategize", "evaluate", "blackbox", "report"};
  return order;
}

Pipeline::Pipeline(ExperimentConfig cfg)
    : cfg_(std::move(cfg)), state_(std::make_unique<State>()) {
  cfg_.validate();
  fs::create_directories(cfg_.out_dir);
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// NaN-tolerant CSV field
std::string csv_num(double v) { return fmt_double(v); }

std::vector<std::string> nonempty_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) out.emplace_back(trim(line));
  }
  return out;
}

}  // namespace

std::string Pipeline::stage_hash(const std::string& stage) const {
  // Canonical description of exactly the inputs this stage consumes, chained
  // through the upstream hashes so invalidation propagates.
  std::string desc = "stage:" + stage + ";";
  const auto& c = cfg_;
  auto add = [&desc](const std::string& s) { desc += s + ";"; };

  const auto& order = stage_order();
  const auto pos = std::find(order.begin(), order.end(), stage);
  if (pos == order.end()) throw ContractError("unknown stage: " + stage);
  if (pos != order.begin()) add("up=" + stage_hash(*(pos - 1)));

  if (stage == "data") {
    if (c.dataset.synth) {
      add("synth=" + std::to_string(c.dataset.synth->phi) + "," +
          std::to_string(c.dataset.synth->n_per_class) + "," +
          fmt_double(c.dataset.synth->class_separation));
    } else {
      add("path=" + c.dataset.path.string());
      add("format=" + std::to_string(static_cast<int>(c.dataset.format)));
    }
    add("policy=" + c.policy_path.string());
    add("seed=" + std::to_string(c.stage_seed("data")));
  } else if (stage == "attack") {
    for (const auto& a : c.attacks) {
      add(attack_name(a.tag) + "," + std::to_string(a.max_flips) + "," +
          std::to_string(a.iterations));
    }
    for (auto f : c.zoo.families) add("fam=" + family_name(f));
    add("nn_epochs=" + std::to_string(c.zoo.hypers.nn.epochs));
    add("seed=" + std::to_string(c.stage_seed("attack")));
    add("train_seed=" + std::to_string(c.stage_seed("train")));
  } else if (stage == "train") {
    for (auto f : c.zoo.families) add("fam=" + family_name(f));
    for (double r : c.zoo.at_ratios) add("at=" + fmt_double(r));
    add("rfn=" + std::to_string(c.zoo.rfn) + "," + fmt_double(c.zoo.rfn_rate));
    add("dd=" + std::to_string(c.zoo.dd) + "," +
        fmt_double(c.zoo.dd_temperature));
    add("sec=" + std::to_string(c.zoo.sec) + "," + fmt_double(c.zoo.sec_bound) +
        "," + std::to_string(c.zoo.sec_at));
    add("seed=" + std::to_string(c.stage_seed("train")));
  } else if (stage == "profile") {
    for (const auto& g : c.attackers) add("gamma=" + g);
    for (double a : c.alpha_grid) add("a=" + fmt_double(a));
    add("size=" + std::to_string(c.alpha_dataset_size));
    add("seed=" + std::to_string(c.stage_seed("profile")));
  } else if (stage == "select") {
    for (auto m : c.selection_methods) add("m=" + selection_name(m));
    add("k=" + std::to_string(c.selection_k));
    add("w=" + fmt_double(c.combiner.w_acc) + "," + fmt_double(c.combiner.w_f1) +
        "," + fmt_double(c.combiner.w_auc) + "," +
        fmt_double(c.combiner.w_fpr) + "," + fmt_double(c.combiner.w_fnr));
  } else if (stage == "strategize") {
    for (const auto& o : c.optimizers) add("opt=" + o);
  } else if (stage == "evaluate") {
    add("reps=" + std::to_string(c.evaluate.repetitions));
    add("effq=" + std::to_string(c.evaluate.efficiency_queries));
    for (const auto& t : c.evaluate.efficiency_targets) add("efft=" + t);
    add("seed=" + std::to_string(c.stage_seed("evaluate")));
  } else if (stage == "blackbox") {
    for (auto b : c.blackbox.budgets) add("budget=" + std::to_string(b));
    for (const auto& t : c.blackbox.targets) add("t=" + t);
    add("seed=" + std::to_string(c.stage_seed("blackbox")));
  } else if (stage == "report") {
    // pure function of upstream artifacts
  }
  return hex64(fnv1a64(desc));
}

bool Pipeline::stage_fresh(const std::string& stage,
                           const std::string& hash) const {
  const fs::path stamp = cfg_.out_dir / "stamps" / (stage + ".stamp");
  if (!fs::exists(stamp)) return false;
  return trim(read_text_file(stamp)) == hash;
}

void Pipeline::write_stamp(const std::string& stage, const std::string& hash) {
  write_text_file(cfg_.out_dir / "stamps" / (stage + ".stamp"), hash + "\n");
}

void Pipeline::require_upstream(const std::string& stage) const {
  const std::string hash = stage_hash(stage);
  const fs::path stamp = cfg_.out_dir / "stamps" / (stage + ".stamp");
  if (!fs::exists(stamp)) {
    throw ConfigError("missing artifacts for stage '" + stage +
                      "'; run that stage first");
  }
  if (trim(read_text_file(stamp)) != hash) {
    throw ConfigError("artifacts for stage '" + stage +
                      "' are out of date; rerun that stage first");
  }
}

void Pipeline::run(const std::vector<std::string>& stages) {
  std::set<std::string> requested;
  for (const std::string& s : stages) {
    if (s == "all") {
      for (const auto& st : stage_order()) requested.insert(st);
    } else if (std::find(stage_order().begin(), stage_order().end(), s) ==
               stage_order().end()) {
      throw ConfigError("unknown stage '" + s + "'");
    } else {
      requested.insert(s);
    }
  }
  if (requested.empty()) throw ConfigError("no stages requested");

  // position of the last requested stage
  std::size_t last = 0;
  for (std::size_t i = 0; i < stage_order().size(); ++i) {
    if (requested.count(stage_order()[i])) last = i;
  }

  for (std::size_t i = 0; i <= last; ++i) {
    const std::string& stage = stage_order()[i];
    const std::string hash = stage_hash(stage);
    const bool fresh = stage_fresh(stage, hash);
    if (!requested.count(stage)) {
      require_upstream(stage);
    } else if (!fresh) {
      std::cerr << "[stratdef] running stage " << stage << "\n";
    } else {
      std::cerr << "[stratdef] stage " << stage << " cached\n";
    }
    const bool cached = fresh || !requested.count(stage);

    if (stage == "data") run_data(cached);
    else if (stage == "attack") run_attack(cached);
    else if (stage == "train") run_train(cached);
    else if (stage == "profile") run_profile(cached);
    else if (stage == "select") run_select(cached);
    else if (stage == "strategize") run_strategize(cached);
    else if (stage == "evaluate") run_evaluate(cached);
    else if (stage == "blackbox") run_blackbox(cached);
    else if (stage == "report") run_report(cached);

    if (!cached) write_stamp(stage, hash);
    state_->loaded_stages.insert(stage);
  }
}

// ---------------------------------------------------------------------------
// data

namespace {

std::vector<std::string> striped_families(std::size_t phi) {
  std::vector<std::string> fam(phi);
  for (std::size_t i = 0; i < phi; ++i) {
    fam[i] = "S" + std::to_string(1 + (i % 8));
  }
  return fam;
}

void save_splits(const fs::path& path, const SplitSpec& s) {
  std::ostringstream out;
  out << "seed " << s.seed << '\n';
  auto dump = [&out](const char* name, const std::vector<std::size_t>& v) {
    out << name;
    for (std::size_t i : v) out << ' ' << i;
    out << '\n';
  };
  dump("train", s.train);
  dump("validation", s.validation);
  dump("test", s.test);
  write_text_file(path, out.str());
}

SplitSpec load_splits(const fs::path& path) {
  SplitSpec s;
  for (const std::string& line : nonempty_lines(read_text_file(path))) {
    auto toks = split_ws(line);
    if (toks[0] == "seed") {
      s.seed = static_cast<std::uint64_t>(parse_int(toks.at(1), "splits seed"));
      continue;
    }
    std::vector<std::size_t>* dst = nullptr;
    if (toks[0] == "train") dst = &s.train;
    else if (toks[0] == "validation") dst = &s.validation;
    else if (toks[0] == "test") dst = &s.test;
    else throw ParseError(path.string() + ": unknown splits key " + toks[0]);
    for (std::size_t i = 1; i < toks.size(); ++i) {
      dst->push_back(
          static_cast<std::size_t>(parse_int(toks[i], "split index")));
    }
  }
  return s;
}

}  // namespace

void Pipeline::run_data(bool cached) {
  State& st = *state_;
  const fs::path ds_path = cfg_.out_dir / "dataset.txt";
  const fs::path splits_path = cfg_.out_dir / "splits.txt";
  const fs::path policy_path = cfg_.out_dir / "policy.txt";

  if (cached) {
    st.balanced = load_dataset(ds_path, DatasetFormat::SparseIndex);
    st.splits = load_splits(splits_path);
    st.families = striped_families(st.balanced.phi);
    st.balanced.family_of = st.families;
    st.policy = load_policy(policy_path, st.balanced.phi);
  } else {
    Dataset raw;
    if (cfg_.dataset.synth) {
      const SynthSpec& s = *cfg_.dataset.synth;
      raw = synth_dataset(s.phi, s.n_per_class, s.class_separation,
                          cfg_.stage_seed("data"));
    } else {
      raw = load_dataset(cfg_.dataset.path, cfg_.dataset.format);
    }
    auto [balanced, splits] = balance_and_split(raw, cfg_.stage_seed("data"));
    st.balanced = std::move(balanced);
    st.splits = std::move(splits);
    st.families = striped_families(st.balanced.phi);
    st.balanced.family_of = st.families;
    st.policy = cfg_.policy_path.empty()
                    ? PerturbationPolicy::from_families(st.families)
                    : load_policy(cfg_.policy_path, st.balanced.phi);

    write_dataset(ds_path, st.balanced, DatasetFormat::SparseIndex);
    save_splits(splits_path, st.splits);
    write_policy(policy_path, st.policy, st.families);
  }

  st.train_split = st.balanced.subset(st.splits.train);
  st.validation_split = st.balanced.subset(st.splits.validation);
  st.test_split = st.balanced.subset(st.splits.test);
}

// ---------------------------------------------------------------------------
// attack

namespace {

void save_uaps(const fs::path& path, const std::vector<UAPRecord>& uaps) {
  std::string out = "reuse_count,n_flips,flips\n";
  for (const UAPRecord& u : uaps) {
    out += std::to_string(u.reuse_count) + ',' +
           std::to_string(u.perturbation.size()) + ',';
    for (std::size_t i = 0; i < u.perturbation.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(u.perturbation[i].index);
      out += u.perturbation[i].add ? '+' : '-';
    }
    out += '\n';
  }
  write_text_file(path, out);
}

std::string advset_file(const AdversarialSet& set) {
  return attack_name(set.attack) + "__" + set.substitute + ".advset";
}

}  // namespace

void Pipeline::run_attack(bool cached) {
  State& st = *state_;
  std::vector<Sample> malware;
  for (const Sample& s : st.test_split.samples) {
    if (s.label == kMalware) malware.push_back(s);
  }

  // Defender substitutes are the zoo's vanilla models (trained here with the
  // train-stage seeds so the train stage reuses the archives bit-identically).
  // The attacker trains its own substitutes on the same training data.
  ModelZoo defender_subs, attacker_subs;
  const fs::path models_dir = cfg_.out_dir / "models";
  for (ModelFamily family : cfg_.zoo.families) {
    const std::string id = family_name(family);
    const fs::path def_path = models_dir / (id + ".model");
    const fs::path sub_path = models_dir / ("SUB-" + id + ".model");
    if (cached) {
      defender_subs.push_back(load_model(def_path));
      attacker_subs.push_back(load_model(sub_path));
    } else {
      CandidateModel vanilla =
          train_model(family, st.train_split, cfg_.zoo.hypers,
                      derive_seed(cfg_.stage_seed("train"), "model/" + id),
                      &st.validation_split);
      save_model(def_path, vanilla);
      defender_subs.push_back(std::move(vanilla));

      CandidateModel sub = train_model(
          family, st.train_split, cfg_.zoo.hypers,
          derive_seed(cfg_.stage_seed("attack"), "substitute/" + id),
          &st.validation_split);
      sub.id = "SUB-" + id;
      save_model(sub_path, sub);
      attacker_subs.push_back(std::move(sub));
    }
  }

  for (Role role : {Role::Defender, Role::Attacker}) {
    const ModelZoo& subs =
        role == Role::Defender ? defender_subs : attacker_subs;
    const fs::path dir = cfg_.out_dir / "adv" / role_name(role);
    std::vector<AdversarialSet>& sets = st.sets[role];
    sets.clear();
    for (const AttackSpec& spec : cfg_.attacks) {
      for (const CandidateModel& sub : subs) {
        if (!attack_applicable(spec.tag, sub.family)) continue;
        AttackSpec seeded = spec;
        seeded.seed = derive_seed(cfg_.stage_seed("attack"),
                                  role_name(role) + "/" +
                                      attack_name(spec.tag) + "/" + sub.id);
        AdversarialSet set;
        if (cached) {
          set = load_adversarial_set(dir / advset_file({spec.tag, sub.id, {}}),
                                     st.test_split);
        } else {
          set = generate(seeded, sub, malware, st.policy);
          save_adversarial_set(dir / advset_file(set), set, st.policy);
        }
        sets.push_back(std::move(set));
      }
    }
    st.uaps[role] = extract_uaps(sets);
    if (!cached) {
      save_uaps(cfg_.out_dir / ("uaps_" + role_name(role) + ".csv"),
                st.uaps[role]);
    }
  }

  // stash substitutes for downstream stages
  st.zoo = std::move(defender_subs);
  for (auto& m : attacker_subs) st.zoo.push_back(std::move(m));
}

// ---------------------------------------------------------------------------
// train

void Pipeline::run_train(bool cached) {
  State& st = *state_;
  const fs::path models_dir = cfg_.out_dir / "models";
  const std::uint64_t seed = cfg_.stage_seed("train");

  // vanilla models carried over from the attack stage
  ModelZoo carried = std::move(st.zoo);
  st.zoo.clear();
  st.zoo_ids.clear();
  auto take_or_load = [&](const std::string& id) -> CandidateModel {
    if (const CandidateModel* m = find_model_ptr(carried, id)) return *m;
    return load_model(models_dir / (id + ".model"));
  };

  // Defender adversarial pool: every defender-generated vector, first-seen
  // order, deduplicated.
  std::vector<FeatureVector> adv_pool;
  {
    std::unordered_set<std::uint64_t> seen;
    for (const AdversarialSet& set : st.sets[Role::Defender]) {
      for (const AdversarialExample& ex : set.examples) {
        if (seen.insert(ex.vector.hash()).second) adv_pool.push_back(ex.vector);
      }
    }
  }
  const std::size_t test_size = st.test_split.size();

  struct Planned {
    std::string id;
    std::function<CandidateModel()> build;
  };
  std::vector<Planned> plan;
  for (ModelFamily family : cfg_.zoo.families) {
    plan.push_back({family_name(family), [&, family] {
                      return take_or_load(family_name(family));
                    }});
  }
  const bool has_lsvm =
      std::find(cfg_.zoo.families.begin(), cfg_.zoo.families.end(),
                ModelFamily::LSVM) != cfg_.zoo.families.end();
  if (cfg_.zoo.sec && has_lsvm) {
    plan.push_back({"SECSVM", [&] {
                      return train_sec_linear(
                          st.train_split, cfg_.zoo.sec_bound, cfg_.zoo.hypers,
                          derive_seed(seed, "model/SECSVM"),
                          &st.validation_split);
                    }});
  }
  for (ModelFamily family : cfg_.zoo.families) {
    for (double ratio : cfg_.zoo.at_ratios) {
      const std::string id =
          family_name(family) + "-AT-" + format_ratio(ratio);
      plan.push_back({id, [&, family, ratio, id] {
                        return adversarial_train(
                            family, st.train_split, adv_pool, ratio, test_size,
                            cfg_.zoo.hypers, derive_seed(seed, "model/" + id),
                            &st.validation_split);
                      }});
    }
  }
  if (cfg_.zoo.sec && cfg_.zoo.sec_at && has_lsvm) {
    for (double ratio : cfg_.zoo.at_ratios) {
      const std::string id = "SECSVM-AT-" + format_ratio(ratio);
      plan.push_back({id, [&, ratio, id] {
                        return adversarial_train(
                            ModelFamily::LSVM, st.train_split, adv_pool, ratio,
                            test_size, cfg_.zoo.hypers,
                            derive_seed(seed, "model/" + id),
                            &st.validation_split, cfg_.zoo.sec_bound);
                      }});
    }
  }
  if (cfg_.zoo.rfn) {
    for (ModelFamily family : cfg_.zoo.families) {
      const std::string id = family_name(family) + "-RFN";
      plan.push_back({id, [&, family, id] {
                        return nullify_features(
                            family, st.train_split, cfg_.zoo.rfn_rate,
                            cfg_.zoo.hypers, derive_seed(seed, "model/" + id),
                            &st.validation_split);
                      }});
    }
  }
  const bool has_nn = std::find(cfg_.zoo.families.begin(),
                                cfg_.zoo.families.end(),
                                ModelFamily::NN) != cfg_.zoo.families.end();
  if (cfg_.zoo.dd && has_nn) {
    plan.push_back({"NN-DD", [&] {
                      return distill(st.train_split, cfg_.zoo.dd_temperature,
                                     cfg_.zoo.hypers,
                                     derive_seed(seed, "model/NN-DD"));
                    }});
  }

  for (const Planned& p : plan) {
    CandidateModel m = cached ? load_model(models_dir / (p.id + ".model"))
                              : p.build();
    if (m.id != p.id) throw ContractError("zoo id mismatch: " + m.id);
    if (!cached) save_model(models_dir / (p.id + ".model"), m);
    st.zoo_ids.push_back(p.id);
    st.zoo.push_back(std::move(m));
  }
  // attacker substitutes ride along in the zoo vector but outside U
  for (ModelFamily family : cfg_.zoo.families) {
    const std::string id = "SUB-" + family_name(family);
    if (const CandidateModel* m = find_model_ptr(carried, id)) {
      st.zoo.push_back(*m);
    } else {
      st.zoo.push_back(load_model(models_dir / (id + ".model")));
    }
  }

  // clean accuracies on the test split
  const fs::path acc_path = cfg_.out_dir / "clean_accuracy.csv";
  st.clean_accuracy.clear();
  if (cached) {
    const auto lines = nonempty_lines(read_text_file(acc_path));
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto cols = split_on(lines[i], ',');
      st.clean_accuracy[cols.at(0)] =
          parse_double(cols.at(1), "clean accuracy");
    }
  } else {
    std::string csv = "model,accuracy\n";
    for (const std::string& id : st.zoo_ids) {
      const CandidateModel& m = find_model(st.zoo, id);
      std::size_t correct = 0;
      for (const Sample& s : st.test_split.samples) {
        correct += m.predict(s.vector).label == s.label;
      }
      const double acc = static_cast<double>(correct) /
                         static_cast<double>(st.test_split.size());
      st.clean_accuracy[id] = acc;
      csv += id + ',' + fmt_double(acc) + '\n';
    }
    write_text_file(acc_path, csv);
  }
}

// ---------------------------------------------------------------------------
// profile

namespace {

void save_rates(const fs::path& path, const RateTable& rates,
                std::size_t pool_max) {
  std::string out = "#pool_max " + std::to_string(pool_max) + "\n";
  out += "attack,substitute,target,value\n";
  for (const NormalizedEvasionRate& r : rates.entries()) {
    out += attack_name(r.attack) + ',' + r.substitute + ',' + r.target + ',' +
           fmt_double(r.value) + '\n';
  }
  write_text_file(path, out);
}

std::pair<RateTable, std::size_t> load_rates(const fs::path& path) {
  RateTable rates;
  std::size_t pool_max = 0;
  bool header_seen = false;
  for (const std::string& line : nonempty_lines(read_text_file(path))) {
    if (line.rfind("#pool_max", 0) == 0) {
      pool_max = static_cast<std::size_t>(
          parse_int(split_ws(line).at(1), "pool_max"));
      continue;
    }
    if (!header_seen) {
      header_seen = true;  // column header
      continue;
    }
    auto cols = split_on(line, ',');
    NormalizedEvasionRate r;
    r.attack = attack_from_name(cols.at(0));
    r.substitute = cols.at(1);
    r.target = cols.at(2);
    r.value = parse_double(cols.at(3), "rate value");
    rates.put(r);
  }
  return {std::move(rates), pool_max};
}

}  // namespace

void Pipeline::run_profile(bool cached) {
  State& st = *state_;
  for (Role role : {Role::Defender, Role::Attacker}) {
    const std::vector<AdversarialSet>& sets = st.sets[role];
    const fs::path rates_path =
        cfg_.out_dir / ("rates_" + role_name(role) + ".csv");

    std::size_t pool_max = 0;
    for (const AdversarialSet& set : sets) {
      pool_max = std::max(pool_max, set.examples.size());
    }
    st.pool_max[role] = pool_max;

    if (cached) {
      auto [rates, pm] = load_rates(rates_path);
      st.rates[role] = std::move(rates);
      st.pool_max[role] = pm;
    } else {
      RateTable rates;
      for (const AdversarialSet& set : sets) {
        // rate against every candidate model, plus the set's own substitute
        // (needed by non-transferability profiles); defender substitutes are
        // already inside U.
        std::vector<std::string> targets = st.zoo_ids;
        if (!find_model_ptr(st.zoo, set.substitute)) {
          throw ContractError("substitute model missing: " + set.substitute);
        }
        if (std::find(targets.begin(), targets.end(), set.substitute) ==
            targets.end()) {
          targets.push_back(set.substitute);
        }
        for (const std::string& target : targets) {
          rates.put(normalized_evasion_rate(set, find_model(st.zoo, target),
                                            pool_max));
        }
      }
      st.rates[role] = std::move(rates);
      save_rates(rates_path, st.rates[role], pool_max);
    }

    // Pools and alpha datasets are deterministic given sets + rates, so they
    // are rebuilt in memory; the manifests are audit artifacts.
    std::vector<AttackerProfile> profiles;
    for (const std::string& name : cfg_.attackers) {
      profiles.push_back(profile_by_name(standard_profiles(), name));
    }
    st.pools[role] = assign_sets(profiles, sets, st.zoo_ids, st.rates[role],
                                 st.uaps[role]);

    const std::size_t total = cfg_.alpha_dataset_size > 0
                                  ? cfg_.alpha_dataset_size
                                  : st.test_split.size();
    st.alpha_sets[role].clear();
    for (const AttackerProfile& profile : profiles) {
      const AttackerPool& pool = st.pools[role][profile.name];
      if (pool.entries.empty()) {
        std::cerr << "[stratdef] warning: " << role_name(role) << " pool for '"
                  << profile.name << "' is empty; attacker skipped\n";
        continue;
      }
      auto datasets = build_alpha_datasets(
          pool, profile.pooling, st.test_split, cfg_.alpha_grid, total,
          derive_seed(cfg_.stage_seed("profile"),
                      role_name(role) + "/" + profile.name));
      if (!cached) {
        for (const AlphaDataset& ds : datasets) {
          save_alpha_manifest(cfg_.out_dir / "profiles" / role_name(role) /
                                  profile.name /
                                  ("alpha_" + fmt_double(ds.alpha) +
                                   ".manifest"),
                              ds);
        }
      }
      st.alpha_sets[role][profile.name] = std::move(datasets);
    }
  }
}

// ---------------------------------------------------------------------------
// select

namespace {

void save_scores(const fs::path& path,
                 const std::vector<ConsiderationScore>& scores) {
  std::string out = "model,alpha,acc,f1,auc,fpr,fnr,value\n";
  for (const ConsiderationScore& s : scores) {
    out += s.model + ',' + fmt_double(s.alpha) + ',' + csv_num(s.metrics.acc) +
           ',' + csv_num(s.metrics.f1) + ',' + csv_num(s.metrics.auc) + ',' +
           csv_num(s.metrics.fpr) + ',' + csv_num(s.metrics.fnr) + ',' +
           csv_num(s.value) + '\n';
  }
  write_text_file(path, out);
}

std::vector<ConsiderationScore> load_scores(const fs::path& path,
                                            const std::string& gamma) {
  std::vector<ConsiderationScore> out;
  const auto lines = nonempty_lines(read_text_file(path));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cols = split_on(lines[i], ',');
    ConsiderationScore s;
    s.model = cols.at(0);
    s.gamma = gamma;
    s.alpha = parse_double(cols.at(1), "score alpha");
    s.metrics.acc = parse_double(cols.at(2), "acc");
    s.metrics.f1 = parse_double(cols.at(3), "f1");
    s.metrics.auc = parse_double(cols.at(4), "auc");
    s.metrics.fpr = parse_double(cols.at(5), "fpr");
    s.metrics.fnr = parse_double(cols.at(6), "fnr");
    s.value = parse_double(cols.at(7), "value");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void Pipeline::run_select(bool cached) {
  State& st = *state_;
  st.scores.clear();
  st.selections.clear();
  for (const std::string& gamma : cfg_.attackers) {
    if (!st.alpha_sets[Role::Defender].count(gamma)) continue;  // skipped
    const fs::path score_path =
        cfg_.out_dir / "scores" / (gamma + ".csv");
    ModelZoo candidates;
    for (const std::string& id : st.zoo_ids) {
      candidates.push_back(find_model(st.zoo, id));
    }
    if (cached) {
      st.scores[gamma] = load_scores(score_path, gamma);
    } else {
      st.scores[gamma] =
          score_models(candidates, gamma,
                       st.alpha_sets[Role::Defender][gamma], cfg_.combiner);
      save_scores(score_path, st.scores[gamma]);
    }

    for (SelectionMethod method : cfg_.selection_methods) {
      const fs::path sel_path =
          cfg_.out_dir / "selections" /
          (selection_name(method) + "_" + gamma + ".txt");
      ModelSelection sel;
      if (cached) {
        sel = load_selection(sel_path);
      } else {
        sel = method == SelectionMethod::Best
                  ? select_best(st.scores[gamma], candidates, cfg_.selection_k)
                  : select_variety(st.scores[gamma], candidates);
        save_selection(sel_path, sel);
      }
      st.selections[{method, gamma}] = std::move(sel);
    }
  }
}

// ---------------------------------------------------------------------------
// strategize

void Pipeline::run_strategize(bool cached) {
  State& st = *state_;
  st.strategies.clear();
  for (const auto& [key, selection] : st.selections) {
    const auto& [method, gamma] = key;
    for (const std::string& optimizer : cfg_.optimizers) {
      StrategyKey skey{method, optimizer, gamma};
      const fs::path path =
          cfg_.out_dir / "strategies" / (skey.file_name() + ".strategy");
      if (cached) {
        st.strategies[skey] = load_strategy(path, gamma, optimizer);
        continue;
      }
      StrategyVector z;
      if (optimizer == "URS") {
        z = optimize_urs(selection);
      } else if (optimizer == "Ranked") {
        z = optimize_ranked(selection, st.scores[gamma], st.clean_accuracy);
      } else {  // GT
        std::vector<AttackerMove> moves;
        for (const auto& [tag, sub] :
             st.pools[Role::Defender][gamma].qualified) {
          moves.push_back({tag, sub});
        }
        if (moves.empty()) {
          std::cerr << "[stratdef] warning: no qualified sets for '" << gamma
                    << "'; GT strategy skipped\n";
          continue;
        }
        const fs::path games_dir = cfg_.out_dir / "games";
        z = optimize_gt(
            selection, moves, st.rates[Role::Defender], st.clean_accuracy,
            [&](double alpha, const GameInstance& g, const GameSolution& s) {
              save_game_dump(games_dir / (skey.file_name() + "_alpha_" +
                                          fmt_double(alpha) + ".game"),
                             g, s);
            });
      }
      save_strategy(path, z);
      st.strategies[skey] = std::move(z);
    }
  }
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

std::string csv_row(const MetricReport& r, double time_s, double mem_proxy) {
  return r.target + ',' + r.gamma + ',' + fmt_double(r.alpha) + ',' +
         csv_num(r.metrics.acc) + ',' + csv_num(r.metrics.f1) + ',' +
         csv_num(r.metrics.auc) + ',' + csv_num(r.metrics.fpr) + ',' +
         csv_num(r.metrics.fnr) + ',' + csv_num(r.evasion_rate) + ',' +
         csv_num(time_s) + ',' + csv_num(mem_proxy) + '\n';
}

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

void Pipeline::run_evaluate(bool cached) {
  if (cached) return;  // consumers read the CSV from disk
  State& st = *state_;

  // model provider over the trained zoo
  auto provider = [&st](const std::string& id) {
    return std::make_shared<const CandidateModel>(find_model(st.zoo, id));
  };

  std::string csv =
      "target,attacker,alpha,acc,f1,auc,fpr,fnr,evasion_rate,time_s,"
      "mem_proxy\n";

  // Default efficiency targets: every StratDef config and voting ensemble,
  // plus the strongest adversarially trained model per family.
  std::set<std::string> eff_targets(cfg_.evaluate.efficiency_targets.begin(),
                                    cfg_.evaluate.efficiency_targets.end());
  if (eff_targets.empty()) {
    for (const auto& [skey, z] : st.strategies) {
      eff_targets.insert(skey.defense_id());
    }
    for (SelectionMethod m : cfg_.selection_methods) {
      eff_targets.insert("Voting-" + selection_name(m) + "-Majority");
      eff_targets.insert("Voting-" + selection_name(m) + "-Veto");
    }
    if (!cfg_.zoo.at_ratios.empty()) {
      const double top = *std::max_element(cfg_.zoo.at_ratios.begin(),
                                           cfg_.zoo.at_ratios.end());
      for (ModelFamily f : cfg_.zoo.families) {
        eff_targets.insert(family_name(f) + "-AT-" + format_ratio(top));
      }
    }
  }
  const std::string efficiency_gamma =
      std::find(cfg_.attackers.begin(), cfg_.attackers.end(), "strong") !=
              cfg_.attackers.end()
          ? "strong"
          : cfg_.attackers.front();

  for (const std::string& gamma : cfg_.attackers) {
    auto it = st.alpha_sets[Role::Attacker].find(gamma);
    if (it == st.alpha_sets[Role::Attacker].end()) {
      std::cerr << "[stratdef] warning: no evaluation datasets for '" << gamma
                << "'\n";
      continue;
    }
    const std::vector<AlphaDataset>& datasets = it->second;

    struct Entry {
      EvalTarget target;
      std::unique_ptr<StrategyEngine> engine;      // engines own their RNG
      std::unique_ptr<VotingDefense> voting;       // keep ensembles alive
    };
    std::vector<Entry> entries;
    for (const std::string& id : st.zoo_ids) {
      Entry e;
      e.target = target_of(find_model(st.zoo, id));
      entries.push_back(std::move(e));
    }
    for (const auto& [skey, z] : st.strategies) {
      if (skey.gamma != gamma) continue;
      Entry e;
      // serve path: evaluation consumes the strategy file
      StrategyVector loaded = load_strategy(
          cfg_.out_dir / "strategies" / (skey.file_name() + ".strategy"),
          gamma, skey.optimizer);
      e.engine = std::make_unique<StrategyEngine>(
          std::move(loaded), provider,
          derive_seed(cfg_.stage_seed("evaluate"), skey.file_name()));
      e.target = e.engine->as_target(skey.defense_id());
      entries.push_back(std::move(e));
    }
    for (SelectionMethod method : cfg_.selection_methods) {
      auto sit = st.selections.find({method, gamma});
      if (sit == st.selections.end()) continue;
      for (VoteMode mode : {VoteMode::Majority, VoteMode::Veto}) {
        Entry e;
        e.voting = std::make_unique<VotingDefense>();
        e.voting->id = "Voting-" + selection_name(method) + "-" +
                       (mode == VoteMode::Majority ? "Majority" : "Veto");
        e.voting->mode = mode;
        for (const std::string& id : sit->second.pooled) {
          e.voting->ensemble.push_back(&find_model(st.zoo, id));
        }
        e.target = target_of(*e.voting);
        entries.push_back(std::move(e));
      }
    }

    for (Entry& e : entries) {
      auto reports =
          evaluate_defense(e.target, gamma, datasets,
                           cfg_.evaluate.repetitions,
                           cfg_.stage_seed("evaluate"));
      for (std::size_t ai = 0; ai < reports.size(); ++ai) {
        double time_s = kNan;
        double mem = kNan;
        if (e.target.set_alpha) e.target.set_alpha(datasets[ai].alpha);
        if (e.target.loaded_params) {
          mem = static_cast<double>(e.target.loaded_params());
        }
        if (gamma == efficiency_gamma && eff_targets.count(e.target.id)) {
          std::vector<FeatureVector> queries;
          for (const AlphaEntry& entry : datasets[ai].entries) {
            queries.push_back(entry.vector);
          }
          if (e.target.reseed) {
            e.target.reseed(derive_seed(cfg_.stage_seed("evaluate"),
                                        "efficiency/" + e.target.id));
          }
          time_s = measure_efficiency(e.target, queries,
                                      cfg_.evaluate.efficiency_queries)
                       .seconds_per_prediction;
        }
        csv += csv_row(reports[ai], time_s, mem);
      }
    }
  }
  write_text_file(cfg_.out_dir / "evaluate.csv", csv);
}

// ---------------------------------------------------------------------------
// blackbox

void Pipeline::run_blackbox(bool cached) {
  if (cached) return;
  State& st = *state_;

  auto provider = [&st](const std::string& id) {
    return std::make_shared<const CandidateModel>(find_model(st.zoo, id));
  };

  // default target list: one StratDef config, the strongest NN-AT model, one
  // voting ensemble (whatever exists)
  std::vector<std::string> targets = cfg_.blackbox.targets;
  if (targets.empty()) {
    for (const auto& [skey, z] : st.strategies) {
      if (skey.gamma == "strong" && skey.optimizer == "GT") {
        targets.push_back(skey.defense_id());
        break;
      }
    }
    if (!cfg_.zoo.at_ratios.empty()) {
      const double top = *std::max_element(cfg_.zoo.at_ratios.begin(),
                                           cfg_.zoo.at_ratios.end());
      const std::string id = "NN-AT-" + format_ratio(top);
      if (find_model_ptr(st.zoo, id)) targets.push_back(id);
    }
    if (st.selections.count({SelectionMethod::Variety, "strong"})) {
      targets.push_back("Voting-Variety-Majority");
    }
  }

  BlackboxSettings settings;
  settings.budgets = cfg_.blackbox.budgets;
  settings.substitute_hyper = cfg_.zoo.hypers.nn;

  std::string csv = "target,budget,evasion_rate\n";
  std::string detail =
      "target,budget,attack,evasion_rate,agreement,degenerate\n";

  for (const std::string& target_id : targets) {
    EvalTarget target;
    std::unique_ptr<StrategyEngine> engine;
    std::unique_ptr<VotingDefense> voting;
    if (target_id.rfind("StratDef-", 0) == 0) {
      // deployment default: strong attacker, peak intensity
      StrategyKey skey;
      bool found = false;
      for (const auto& [k, z] : st.strategies) {
        if (k.defense_id() == target_id && k.gamma == "strong") {
          skey = k;
          found = true;
          break;
        }
      }
      if (!found) {
        throw ConfigError("blackbox: no strong-attacker strategy for " +
                          target_id);
      }
      engine = std::make_unique<StrategyEngine>(
          st.strategies[skey], provider,
          derive_seed(cfg_.stage_seed("blackbox"), target_id));
      target = engine->as_target(target_id);
    } else if (target_id.rfind("Voting-", 0) == 0) {
      auto parts = split_on(target_id, '-');
      const SelectionMethod method = parts.at(1) == "Best"
                                         ? SelectionMethod::Best
                                         : SelectionMethod::Variety;
      auto sit = st.selections.find({method, "strong"});
      if (sit == st.selections.end()) {
        throw ConfigError("blackbox: no strong-attacker selection for " +
                          target_id);
      }
      voting = std::make_unique<VotingDefense>();
      voting->id = target_id;
      voting->mode =
          parts.at(2) == "Veto" ? VoteMode::Veto : VoteMode::Majority;
      for (const std::string& id : sit->second.pooled) {
        voting->ensemble.push_back(&find_model(st.zoo, id));
      }
      target = target_of(*voting);
    } else {
      target = target_of(find_model(st.zoo, target_id));
    }

    BlackboxRun run = blackbox_attack(target, st.test_split, st.policy,
                                      settings, cfg_.stage_seed("blackbox"));
    for (std::size_t budget : run.budgets) {
      csv += target_id + ',' + std::to_string(budget) + ',' +
             csv_num(run.evasion_by_budget[budget]) + '\n';
      detail += target_id + ',' + std::to_string(budget) + ",union," +
                csv_num(run.evasion_by_budget[budget]) + ',' +
                csv_num(run.agreement_by_budget[budget]) + ',' +
                (run.degenerate[budget] ? "1" : "0") + '\n';
      for (const auto& [attack, rate] : run.evasion_by_attack[budget]) {
        detail += target_id + ',' + std::to_string(budget) + ',' + attack +
                  ',' + csv_num(rate) + ',' +
                  csv_num(run.agreement_by_budget[budget]) + ',' +
                  (run.degenerate[budget] ? "1" : "0") + '\n';
      }
    }
  }
  write_text_file(cfg_.out_dir / "blackbox.csv", csv);
  write_text_file(cfg_.out_dir / "blackbox_detail.csv", detail);
}

// ---------------------------------------------------------------------------
// report

void Pipeline::run_report(bool cached) {
  if (cached) return;
  const fs::path dir = cfg_.out_dir / "report";
  fs::create_directories(dir);

  // Report is a pure function of the artifact CSVs; missing artifacts
  // produce empty-but-valid outputs.
  std::vector<std::vector<std::string>> eval_rows;
  const fs::path eval_path = cfg_.out_dir / "evaluate.csv";
  if (fs::exists(eval_path)) {
    const auto lines = nonempty_lines(read_text_file(eval_path));
    for (std::size_t i = 1; i < lines.size(); ++i) {
      eval_rows.push_back(split_on(lines[i], ','));
    }
  }

  {  // accuracy vs alpha, one row per (defense, attacker, alpha)
    std::string csv = "defense,attacker,alpha,accuracy\n";
    for (const auto& r : eval_rows) {
      csv += r[0] + ',' + r[1] + ',' + r[2] + ',' + r[3] + '\n';
    }
    write_text_file(dir / "fig3_accuracy_vs_alpha.csv", csv);
  }

  {  // metric averages across intensities
    struct Acc {
      double acc = 0, f1 = 0, auc = 0, fpr = 0;
      std::size_t n_acc = 0, n_f1 = 0, n_auc = 0, n_fpr = 0;
    };
    std::map<std::pair<std::string, std::string>, Acc> agg;
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto& r : eval_rows) {
      const auto key = std::make_pair(r[0], r[1]);
      if (!agg.count(key)) order.push_back(key);
      Acc& a = agg[key];
      auto take = [&](const std::string& field, double& sum, std::size_t& n) {
        const double v = parse_double(field, "report metric");
        if (!std::isnan(v)) {
          sum += v;
          ++n;
        }
      };
      take(r[3], a.acc, a.n_acc);
      take(r[4], a.f1, a.n_f1);
      take(r[5], a.auc, a.n_auc);
      take(r[6], a.fpr, a.n_fpr);
    }
    std::string csv = "defense,attacker,acc,f1,auc,fpr\n";
    for (const auto& key : order) {
      const Acc& a = agg[key];
      auto avg = [](double sum, std::size_t n) {
        return n == 0 ? kNan : sum / static_cast<double>(n);
      };
      csv += key.first + ',' + key.second + ',' +
             csv_num(avg(a.acc, a.n_acc)) + ',' + csv_num(avg(a.f1, a.n_f1)) +
             ',' + csv_num(avg(a.auc, a.n_auc)) + ',' +
             csv_num(avg(a.fpr, a.n_fpr)) + '\n';
    }
    write_text_file(dir / "fig4_avg_metrics.csv", csv);
  }

  {  // efficiency: measured rows only
    std::string time_csv = "defense,alpha,time_s\n";
    std::string mem_csv = "defense,alpha,mem_proxy\n";
    for (const auto& r : eval_rows) {
      if (r[9] != "nan") {
        time_csv += r[0] + ',' + r[2] + ',' + r[9] + '\n';
      }
      if (r[10] != "nan") {
        mem_csv += r[0] + ',' + r[2] + ',' + r[10] + '\n';
      }
    }
    write_text_file(dir / "fig5_time.csv", time_csv);
    write_text_file(dir / "fig6_memory.csv", mem_csv);
  }

  {  // black-box transfer results
    std::string csv = "target,budget,evasion_rate\n";
    const fs::path bb = cfg_.out_dir / "blackbox.csv";
    if (fs::exists(bb)) {
      const auto lines = nonempty_lines(read_text_file(bb));
      for (std::size_t i = 1; i < lines.size(); ++i) csv += lines[i] + '\n';
    }
    write_text_file(dir / "fig7_blackbox.csv", csv);
  }

  {  // universal-attacker accuracy + UAP inventory
    std::string csv = "defense,alpha,accuracy\n";
    for (const auto& r : eval_rows) {
      if (r[1] == "universal") csv += r[0] + ',' + r[2] + ',' + r[3] + '\n';
    }
    write_text_file(dir / "fig8_uap_accuracy.csv", csv);

    std::string uap_csv = "role,reuse_count,n_flips\n";
    for (const char* role : {"defender", "attacker"}) {
      const fs::path p = cfg_.out_dir / ("uaps_" + std::string(role) + ".csv");
      if (!fs::exists(p)) continue;
      const auto lines = nonempty_lines(read_text_file(p));
      for (std::size_t i = 1; i < lines.size(); ++i) {
        auto cols = split_on(lines[i], ',');
        uap_csv += std::string(role) + ',' + cols.at(0) + ',' + cols.at(1) +
                   '\n';
      }
    }
    write_text_file(dir / "uap_records.csv", uap_csv);
  }
}

}  // namespace stratdef
