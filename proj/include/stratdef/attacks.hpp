#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stratdef/data.hpp"
#include "stratdef/zoo.hpp"

namespace stratdef {

enum class AttackTag { Saliency, IterSign, TreePath, GreedyBlackbox };

std::string attack_name(AttackTag tag);
AttackTag attack_from_name(const std::string& name);

struct AttackSpec {
  AttackTag tag = AttackTag::Saliency;
  int max_flips = 20;
  int iterations = 5;  // IterSign only
  std::uint64_t seed = 0;
};

// One bit flip: add (0 -> 1) or remove (1 -> 0) at `index`.
struct Flip {
  std::uint32_t index = 0;
  bool add = true;

  auto operator<=>(const Flip&) const = default;
};

std::vector<Flip> diff_flips(const FeatureVector& original,
                             const FeatureVector& perturbed);

struct AdversarialExample {
  std::string original_id;
  FeatureVector vector;
  std::vector<Flip> flips;  // sorted by index
  AttackTag attack = AttackTag::Saliency;
  std::string substitute;
};

struct AdversarialSet {
  AttackTag attack = AttackTag::Saliency;
  std::string substitute;
  std::vector<AdversarialExample> examples;

  std::string name() const { return attack_name(attack) + ":" + substitute; }
};

// A flip-set reused verbatim across >= 2 distinct originals.
struct UAPRecord {
  std::vector<Flip> perturbation;
  std::size_t reuse_count = 0;
  std::vector<std::string> example_ids;
};

bool attack_applicable(AttackTag tag, ModelFamily family);

// Runs the attack on every malware sample, then the verification pipeline:
// binarity check, policy reversion, and re-verification that the substitute
// still predicts benign (and predicted the original as malware). Failing
// candidates are dropped; surviving vectors are deduplicated.
AdversarialSet generate(const AttackSpec& attack,
                        const CandidateModel& substitute,
                        const std::vector<Sample>& malware,
                        const PerturbationPolicy& policy);

// Single-sample attack primitives. Each returns a candidate vector; it may
// be non-adversarial (generate() filters).
FeatureVector attack_saliency(const Classifier& substitute,
                              const FeatureVector& x,
                              const PerturbationPolicy& policy, int max_flips);
FeatureVector attack_iter_sign(const Classifier& substitute,
                               const FeatureVector& x,
                               const PerturbationPolicy& policy,
                               int iterations, int max_flips);
FeatureVector attack_tree_path(const DecisionTree& substitute,
                               const FeatureVector& x,
                               const PerturbationPolicy& policy,
                               int max_flips);
FeatureVector attack_greedy_blackbox(const Classifier& substitute,
                                     const FeatureVector& x,
                                     const PerturbationPolicy& policy,
                                     int max_flips);

// Groups examples by exact flip-set equality; keeps groups covering >= 2
// distinct originals, sorted by reuse count descending.
std::vector<UAPRecord> extract_uaps(const std::vector<AdversarialSet>& sets);

void save_adversarial_set(const std::filesystem::path& path,
                          const AdversarialSet& set,
                          const PerturbationPolicy& policy);
// Originals are resolved against `source` by sample id.
AdversarialSet load_adversarial_set(const std::filesystem::path& path,
                                    const Dataset& source);

}  // namespace stratdef
