#include "stratdef/config.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "stratdef/error.hpp"
#include "stratdef/textio.hpp"

namespace stratdef {

using nlohmann::json;

const std::vector<std::string> kStageOrder = {
    "data",       "train",    "attack", "profile", "select",
    "strategize", "evaluate", "blackbox", "report"};

std::uint64_t ExperimentConfig::stage_seed(const std::string& stage) const {
  auto it = seeds.find(stage);
  if (it == seeds.end()) {
    throw ConfigError("no seed for stage '" + stage + "'");
  }
  return it->second;
}

void ExperimentConfig::validate() const {
  if (!dataset.synth && dataset.path.empty()) {
    throw ConfigError("config: dataset needs either synth parameters or a path");
  }
  if (attacks.empty()) throw ConfigError("config: no attacks configured");
  if (alpha_grid.empty()) throw ConfigError("config: empty alpha grid");
  for (double a : alpha_grid) {
    if (a < 0.0 || a > 1.0) throw ConfigError("config: alpha outside [0,1]");
  }
  if (!std::is_sorted(alpha_grid.begin(), alpha_grid.end())) {
    throw ConfigError("config: alpha grid must be ascending");
  }
  if (selection_k <= 0) throw ConfigError("config: selection k must be > 0");
  if (selection_methods.empty()) {
    throw ConfigError("config: no selection methods");
  }
  if (optimizers.empty()) throw ConfigError("config: no optimizers");
  for (const std::string& opt : optimizers) {
    if (opt != "GT" && opt != "Ranked" && opt != "URS") {
      throw ConfigError("config: unknown optimizer '" + opt + "'");
    }
  }
  const auto known = standard_profiles();
  for (const std::string& name : attackers) {
    profile_by_name(known, name);  // throws on unknown profile
  }
  for (const AttackSpec& a : attacks) {
    if (a.max_flips < 1) throw ConfigError("config: attack max_flips must be >= 1");
  }
  if (evaluate.repetitions < 1) {
    throw ConfigError("config: evaluate repetitions must be >= 1");
  }
  for (const std::string& stage : kStageOrder) {
    if (stage == "report") continue;  // pure function of artifacts
    if (!seeds.count(stage)) {
      throw ConfigError("config: missing seed for stage '" + stage + "'");
    }
  }
}

namespace {

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

void parse_zoo(const json& j, ZooSpec& zoo) {
  if (j.contains("families")) {
    zoo.families.clear();
    for (const auto& f : j["families"]) {
      zoo.families.push_back(family_from_name(f.get<std::string>()));
    }
  }
  if (j.contains("at_ratios")) {
    zoo.at_ratios = j["at_ratios"].get<std::vector<double>>();
  }
  zoo.rfn = j.value("rfn", zoo.rfn);
  zoo.rfn_rate = j.value("rfn_rate", zoo.rfn_rate);
  zoo.dd = j.value("dd", zoo.dd);
  zoo.dd_temperature = j.value("dd_temperature", zoo.dd_temperature);
  zoo.sec = j.value("sec", zoo.sec);
  zoo.sec_bound = j.value("sec_bound", zoo.sec_bound);
  zoo.sec_at = j.value("sec_at", zoo.sec_at);
  if (j.contains("nn")) {
    const auto& n = j["nn"];
    zoo.hypers.nn.epochs = n.value("epochs", zoo.hypers.nn.epochs);
    zoo.hypers.nn.batch_size = n.value("batch_size", zoo.hypers.nn.batch_size);
    zoo.hypers.nn.learning_rate =
        n.value("learning_rate", zoo.hypers.nn.learning_rate);
    if (n.contains("hidden")) {
      zoo.hypers.nn.hidden = n["hidden"].get<std::vector<int>>();
    }
  }
  if (j.contains("forest")) {
    const auto& f = j["forest"];
    zoo.hypers.forest.n_trees = f.value("n_trees", zoo.hypers.forest.n_trees);
    zoo.hypers.forest.max_depth =
        f.value("max_depth", zoo.hypers.forest.max_depth);
  }
  if (j.contains("tree")) {
    const auto& t = j["tree"];
    zoo.hypers.tree.max_depth = t.value("max_depth", zoo.hypers.tree.max_depth);
    zoo.hypers.tree.min_samples_leaf =
        t.value("min_samples_leaf", zoo.hypers.tree.min_samples_leaf);
  }
  if (j.contains("linear")) {
    const auto& l = j["linear"];
    zoo.hypers.linear.epochs = l.value("epochs", zoo.hypers.linear.epochs);
    zoo.hypers.linear.learning_rate =
        l.value("learning_rate", zoo.hypers.linear.learning_rate);
    zoo.hypers.linear.l2 = l.value("l2", zoo.hypers.linear.l2);
  }
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& json_text,
                                   const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  cfg.alpha_grid = default_alpha_grid();
  try {
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("out")) {
      std::filesystem::path p = j["out"].get<std::string>();
      cfg.out_dir = p.is_absolute() ? p : base_dir / p;
    }

    if (!j.contains("dataset")) throw ConfigError("config: missing dataset");
    const auto& d = j["dataset"];
    if (d.contains("synth")) {
      SynthSpec s;
      const auto& sj = d["synth"];
      s.phi = sj.value("phi", s.phi);
      s.n_per_class = sj.value("n_per_class", s.n_per_class);
      s.class_separation = sj.value("class_separation", s.class_separation);
      cfg.dataset.synth = s;
    } else if (d.contains("path")) {
      std::filesystem::path p = d["path"].get<std::string>();
      cfg.dataset.path = p.is_absolute() ? p : base_dir / p;
      const std::string fmt = d.value("format", std::string("sparse-index"));
      if (fmt == "sparse-index") {
        cfg.dataset.format = DatasetFormat::SparseIndex;
      } else if (fmt == "dense-csv") {
        cfg.dataset.format = DatasetFormat::DenseCsv;
      } else {
        throw ConfigError("config: unknown dataset format '" + fmt + "'");
      }
    }

    if (j.contains("policy") && j["policy"].contains("path")) {
      std::filesystem::path p = j["policy"]["path"].get<std::string>();
      cfg.policy_path = p.is_absolute() ? p : base_dir / p;
    }

    if (j.contains("zoo")) parse_zoo(j["zoo"], cfg.zoo);

    if (j.contains("attacks")) {
      cfg.attacks.clear();
      for (const auto& a : j["attacks"]) {
        AttackSpec spec;
        spec.tag = attack_from_name(a.at("tag").get<std::string>());
        spec.max_flips = a.value("max_flips", spec.max_flips);
        spec.iterations = a.value("iterations", spec.iterations);
        cfg.attacks.push_back(spec);
      }
    } else {
      cfg.attacks = {{AttackTag::Saliency, 20, 5, 0},
                     {AttackTag::IterSign, 20, 5, 0},
                     {AttackTag::TreePath, 20, 5, 0},
                     {AttackTag::GreedyBlackbox, 20, 5, 0}};
    }

    if (j.contains("attackers")) {
      cfg.attackers = j["attackers"].get<std::vector<std::string>>();
    }

    if (j.contains("selection")) {
      const auto& s = j["selection"];
      if (s.contains("methods")) {
        cfg.selection_methods.clear();
        for (const auto& m : s["methods"]) {
          const std::string name = m.get<std::string>();
          if (name == "Best") {
            cfg.selection_methods.push_back(SelectionMethod::Best);
          } else if (name == "Variety") {
            cfg.selection_methods.push_back(SelectionMethod::Variety);
          } else {
            throw ConfigError("config: unknown selection method '" + name +
                              "'");
          }
        }
      }
      cfg.selection_k = s.value("k", cfg.selection_k);
    }

    if (j.contains("optimizers")) {
      cfg.optimizers = j["optimizers"].get<std::vector<std::string>>();
    }
    if (j.contains("alpha_grid")) {
      cfg.alpha_grid = j["alpha_grid"].get<std::vector<double>>();
    }
    cfg.alpha_dataset_size =
        j.value("alpha_dataset_size", cfg.alpha_dataset_size);

    if (j.contains("combiner")) {
      const auto& c = j["combiner"];
      cfg.combiner.w_acc = c.value("acc", cfg.combiner.w_acc);
      cfg.combiner.w_f1 = c.value("f1", cfg.combiner.w_f1);
      cfg.combiner.w_auc = c.value("auc", cfg.combiner.w_auc);
      cfg.combiner.w_fpr = c.value("fpr", cfg.combiner.w_fpr);
      cfg.combiner.w_fnr = c.value("fnr", cfg.combiner.w_fnr);
    }

    if (j.contains("evaluate")) {
      const auto& e = j["evaluate"];
      cfg.evaluate.repetitions =
          e.value("repetitions", cfg.evaluate.repetitions);
      cfg.evaluate.efficiency_queries =
          e.value("efficiency_queries", cfg.evaluate.efficiency_queries);
      if (e.contains("efficiency_targets")) {
        cfg.evaluate.efficiency_targets =
            e["efficiency_targets"].get<std::vector<std::string>>();
      }
    }

    if (j.contains("blackbox")) {
      const auto& b = j["blackbox"];
      if (b.contains("budgets")) {
        cfg.blackbox.budgets = b["budgets"].get<std::vector<std::size_t>>();
      }
      if (b.contains("targets")) {
        cfg.blackbox.targets = b["targets"].get<std::vector<std::string>>();
      }
    }

    if (j.contains("seeds")) {
      for (const auto& [key, value] : j["seeds"].items()) {
        cfg.seeds[key] = value.get<std::uint64_t>();
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  // derive any missing stage seed from the master seed
  for (const std::string& stage : kStageOrder) {
    if (!cfg.seeds.count(stage)) {
      cfg.seeds[stage] = derive_seed(cfg.seed, "stage/" + stage);
    }
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config_json(read_text_file(path),
                           path.has_parent_path()
                               ? path.parent_path()
                               : std::filesystem::path("."));
}

}  // namespace stratdef
