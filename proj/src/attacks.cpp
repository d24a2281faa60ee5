#include "stratdef/attacks.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "stratdef/error.hpp"
#include "stratdef/textio.hpp"

namespace stratdef {

std::string attack_name(AttackTag tag) {
  switch (tag) {
    case AttackTag::Saliency: return "SALIENCY";
    case AttackTag::IterSign: return "ITER_SIGN";
    case AttackTag::TreePath: return "TREE_PATH";
    case AttackTag::GreedyBlackbox: return "GREEDY_BLACKBOX";
  }
  throw ContractError("unknown attack tag");
}

AttackTag attack_from_name(const std::string& name) {
  if (name == "SALIENCY") return AttackTag::Saliency;
  if (name == "ITER_SIGN") return AttackTag::IterSign;
  if (name == "TREE_PATH") return AttackTag::TreePath;
  if (name == "GREEDY_BLACKBOX") return AttackTag::GreedyBlackbox;
  throw ConfigError("unknown attack: " + name);
}

bool attack_applicable(AttackTag tag, ModelFamily family) {
  switch (tag) {
    case AttackTag::Saliency:
    case AttackTag::IterSign:
      // gradient-based; exact saliency exists for these two families
      return family == ModelFamily::NN || family == ModelFamily::LSVM;
    case AttackTag::TreePath:
      return family == ModelFamily::DT;
    case AttackTag::GreedyBlackbox:
      return true;  // needs predictions only
  }
  return false;
}

std::vector<Flip> diff_flips(const FeatureVector& original,
                             const FeatureVector& perturbed) {
  if (original.size() != perturbed.size()) {
    throw ContractError("diff_flips: length mismatch");
  }
  std::vector<Flip> flips;
  for (std::size_t i = 0; i < original.size(); ++i) {
    if (original[i] != perturbed[i]) {
      flips.push_back({static_cast<std::uint32_t>(i), original[i] == 0});
    }
  }
  return flips;
}

namespace {

// Whether flipping position i of x is allowed by the policy.
bool flip_permitted(const PerturbationPolicy& policy, const FeatureVector& x,
                    std::size_t i) {
  return x[i] ? policy.may_remove[i] != 0 : policy.may_add[i] != 0;
}

}  // namespace

FeatureVector attack_saliency(const Classifier& substitute,
                              const FeatureVector& x,
                              const PerturbationPolicy& policy,
                              int max_flips) {
  FeatureVector cur = x;
  for (int flip = 0; flip < max_flips; ++flip) {
    if (substitute.predict(cur).label == kBenign) break;
    const auto s = substitute.saliency(cur);
    // Benign-direction gain of flipping bit i: +s[i] when adding the
    // feature, -s[i] when removing it.
    double best_gain = 0.0;
    std::size_t best = cur.size();
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (!flip_permitted(policy, cur, i)) continue;
      const double gain = cur[i] ? -s[i] : s[i];
      if (gain > best_gain + 1e-15) {
        best_gain = gain;
        best = i;
      }
    }
    if (best == cur.size()) break;  // no helpful permitted flip
    cur.set(best, !cur[best]);
  }
  return cur;
}

FeatureVector attack_iter_sign(const Classifier& substitute,
                               const FeatureVector& x,
                               const PerturbationPolicy& policy,
                               int iterations, int max_flips) {
  if (iterations < 1) iterations = 1;
  const int per_iter = (max_flips + iterations - 1) / iterations;
  FeatureVector cur = x;
  int used = 0;
  for (int iter = 0; iter < iterations && used < max_flips; ++iter) {
    if (substitute.predict(cur).label == kBenign) break;
    const auto s = substitute.saliency(cur);
    // Permitted flips whose saliency sign favors benign, by descending
    // magnitude; ties by lowest feature index.
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (!flip_permitted(policy, cur, i)) continue;
      const double gain = cur[i] ? -s[i] : s[i];
      if (gain > 1e-15) ranked.push_back({gain, i});
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    if (ranked.empty()) break;
    const int budget = std::min(per_iter, max_flips - used);
    for (int k = 0; k < budget && k < static_cast<int>(ranked.size()); ++k) {
      const std::size_t i = ranked[static_cast<std::size_t>(k)].second;
      cur.set(i, !cur[i]);
      ++used;
      if (substitute.predict(cur).label == kBenign) return cur;
    }
  }
  return cur;
}

FeatureVector attack_tree_path(const DecisionTree& substitute,
                               const FeatureVector& x,
                               const PerturbationPolicy& policy,
                               int max_flips) {
  const auto& nodes = substitute.nodes();
  if (nodes.empty()) return x;

  // Collect, per benign leaf, the path condition (feature -> required bit).
  // The candidate flip-set is the set of conditions conflicting with x whose
  // flip direction is permitted; a leaf is unreachable if any conflicting
  // condition is frozen.
  struct Candidate {
    std::vector<Flip> flips;
  };
  std::vector<Candidate> reachable;

  struct Frame {
    int node;
    std::vector<std::pair<std::size_t, bool>> conditions;
  };
  std::vector<Frame> stack;
  stack.push_back({0, {}});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    const TreeNode& n = nodes[static_cast<std::size_t>(f.node)];
    if (n.feature < 0) {
      if (n.malware_fraction >= 0.5) continue;  // malware leaf
      Candidate c;
      bool ok = true;
      for (const auto& [feat, required] : f.conditions) {
        if ((x[feat] != 0) == required) continue;
        if (!flip_permitted(policy, x, feat)) {
          ok = false;
          break;
        }
        c.flips.push_back({static_cast<std::uint32_t>(feat), x[feat] == 0});
      }
      if (ok && static_cast<int>(c.flips.size()) <= max_flips) {
        std::sort(c.flips.begin(), c.flips.end());
        reachable.push_back(std::move(c));
      }
      continue;
    }
    const auto feat = static_cast<std::size_t>(n.feature);
    // Later conditions on the same feature supersede earlier ones; on a
    // root-to-leaf path a feature can repeat but consistently.
    Frame left{n.left, f.conditions};
    left.conditions.push_back({feat, false});
    Frame right{n.right, std::move(f.conditions)};
    right.conditions.push_back({feat, true});
    stack.push_back(std::move(left));
    stack.push_back(std::move(right));
  }
  if (reachable.empty()) return x;

  // Nearest benign leaf; ties resolved by lexicographic flip order.
  const Candidate* best = &reachable[0];
  for (const Candidate& c : reachable) {
    if (c.flips.size() < best->flips.size() ||
        (c.flips.size() == best->flips.size() && c.flips < best->flips)) {
      best = &c;
    }
  }
  FeatureVector out = x;
  for (const Flip& f : best->flips) out.set(f.index, f.add);
  return out;
}

FeatureVector attack_greedy_blackbox(const Classifier& substitute,
                                     const FeatureVector& x,
                                     const PerturbationPolicy& policy,
                                     int max_flips) {
  FeatureVector cur = x;
  double cur_score = substitute.predict(cur).score;
  for (int flip = 0; flip < max_flips; ++flip) {
    if (cur_score < 0.5) break;  // already predicted benign
    double best_score = cur_score;
    std::size_t best = cur.size();
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (!flip_permitted(policy, cur, i)) continue;
      FeatureVector probe = cur;
      probe.set(i, !probe[i]);
      const double score = substitute.predict(probe).score;
      if (score < best_score - 1e-15) {  // ties keep the lowest index
        best_score = score;
        best = i;
      }
    }
    if (best == cur.size()) break;  // no flip lowers the malware score
    cur.set(best, !cur[best]);
    cur_score = best_score;
  }
  return cur;
}

AdversarialSet generate(const AttackSpec& attack,
                        const CandidateModel& substitute,
                        const std::vector<Sample>& malware,
                        const PerturbationPolicy& policy) {
  if (!attack_applicable(attack.tag, substitute.family)) {
    throw ConfigError("attack " + attack_name(attack.tag) +
                      " is not applicable to family " +
                      family_name(substitute.family));
  }
  for (const Sample& s : malware) {
    if (s.label != kMalware) {
      throw ContractError("generate: sample " + s.id + " is not malware");
    }
  }

  AdversarialSet set;
  set.attack = attack.tag;
  set.substitute = substitute.id;
  std::unordered_set<std::uint64_t> seen;

  for (const Sample& s : malware) {
    if (substitute.predict(s.vector).label != kMalware) continue;

    FeatureVector candidate;
    switch (attack.tag) {
      case AttackTag::Saliency:
        candidate = attack_saliency(*substitute.impl, s.vector, policy,
                                    attack.max_flips);
        break;
      case AttackTag::IterSign:
        candidate = attack_iter_sign(*substitute.impl, s.vector, policy,
                                     attack.iterations, attack.max_flips);
        break;
      case AttackTag::TreePath: {
        const auto* tree =
            dynamic_cast<const DecisionTree*>(substitute.impl.get());
        if (!tree) {
          throw ConfigError("TREE_PATH requires a single decision tree");
        }
        candidate = attack_tree_path(*tree, s.vector, policy, attack.max_flips);
        break;
      }
      case AttackTag::GreedyBlackbox:
        candidate = attack_greedy_blackbox(*substitute.impl, s.vector, policy,
                                           attack.max_flips);
        break;
    }

    // Verification pipeline. Binarity is structural (attacks work on bits)
    // but asserted anyway; prohibited perturbations are reverted; the
    // candidate must still cross the decision boundary afterwards.
    for (std::uint8_t b : candidate.bits()) {
      if (b != 0 && b != 1) throw ContractError("attack produced non-bit");
    }
    candidate = apply_policy(policy, s.vector, candidate);
    if (candidate == s.vector) continue;
    if (substitute.predict(candidate).label != kBenign) continue;

    if (!seen.insert(candidate.hash()).second) continue;  // unique by vector
    AdversarialExample ex;
    ex.original_id = s.id;
    ex.flips = diff_flips(s.vector, candidate);
    ex.vector = std::move(candidate);
    ex.attack = attack.tag;
    ex.substitute = substitute.id;
    set.examples.push_back(std::move(ex));
  }
  return set;
}

std::vector<UAPRecord> extract_uaps(const std::vector<AdversarialSet>& sets) {
  // Key: canonical flip-set encoding.
  auto key_of = [](const std::vector<Flip>& flips) {
    std::string key;
    for (const Flip& f : flips) {
      key += std::to_string(f.index);
      key += f.add ? '+' : '-';
    }
    return key;
  };

  struct Group {
    std::vector<Flip> perturbation;
    std::vector<std::string> example_ids;
    std::unordered_set<std::string> originals;
  };
  std::map<std::string, Group> groups;
  for (const AdversarialSet& set : sets) {
    for (const AdversarialExample& ex : set.examples) {
      Group& g = groups[key_of(ex.flips)];
      if (g.example_ids.empty()) g.perturbation = ex.flips;
      g.example_ids.push_back(set.name() + "/" + ex.original_id);
      g.originals.insert(ex.original_id);
    }
  }

  std::vector<UAPRecord> out;
  for (auto& [key, g] : groups) {
    if (g.originals.size() < 2) continue;
    UAPRecord rec;
    rec.perturbation = std::move(g.perturbation);
    rec.reuse_count = g.originals.size();
    rec.example_ids = std::move(g.example_ids);
    out.push_back(std::move(rec));
  }
  std::sort(out.begin(), out.end(), [](const UAPRecord& a, const UAPRecord& b) {
    if (a.reuse_count != b.reuse_count) return a.reuse_count > b.reuse_count;
    return a.perturbation < b.perturbation;
  });
  return out;
}

void save_adversarial_set(const std::filesystem::path& path,
                          const AdversarialSet& set,
                          const PerturbationPolicy& policy) {
  std::ostringstream out;
  out << "#attack " << attack_name(set.attack) << '\n';
  out << "#substitute " << set.substitute << '\n';
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(policy.content_hash()));
  out << "#policy " << hash << '\n';
  for (const AdversarialExample& ex : set.examples) {
    out << ex.original_id;
    for (const Flip& f : ex.flips) {
      out << ' ' << f.index << (f.add ? '+' : '-');
    }
    out << '\n';
  }
  write_text_file(path, out.str());
}

AdversarialSet load_adversarial_set(const std::filesystem::path& path,
                                    const Dataset& source) {
  std::unordered_map<std::string, const Sample*> by_id;
  for (const Sample& s : source.samples) by_id[s.id] = &s;

  AdversarialSet set;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    const std::string ctx = path.string() + ":" + std::to_string(lineno);
    if (sv[0] == '#') {
      auto toks = split_ws(sv.substr(1));
      if (toks.size() >= 2 && toks[0] == "attack") {
        set.attack = attack_from_name(toks[1]);
      } else if (toks.size() >= 2 && toks[0] == "substitute") {
        set.substitute = toks[1];
      }
      continue;
    }
    auto toks = split_ws(sv);
    auto it = by_id.find(toks[0]);
    if (it == by_id.end()) {
      throw ParseError(ctx + ": unknown original id " + toks[0]);
    }
    AdversarialExample ex;
    ex.original_id = toks[0];
    ex.vector = it->second->vector;
    ex.attack = set.attack;
    ex.substitute = set.substitute;
    for (std::size_t t = 1; t < toks.size(); ++t) {
      const std::string& tok = toks[t];
      if (tok.size() < 2 || (tok.back() != '+' && tok.back() != '-')) {
        throw ParseError(ctx + ": malformed flip '" + tok + "'");
      }
      const bool add = tok.back() == '+';
      long long idx =
          parse_int(std::string_view(tok).substr(0, tok.size() - 1), ctx);
      if (idx < 0 || static_cast<std::size_t>(idx) >= source.phi) {
        throw BoundsError(ctx + ": flip index out of range");
      }
      ex.flips.push_back({static_cast<std::uint32_t>(idx), add});
      ex.vector.set(static_cast<std::size_t>(idx), add);
    }
    set.examples.push_back(std::move(ex));
  }
  return set;
}

}  // namespace stratdef
