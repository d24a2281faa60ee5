#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stratdef/attacks.hpp"

namespace stratdef {

// R(tau, S, F): set size times evasion fraction, scaled to [0, 100] by the
// largest set size in the experiment.
struct NormalizedEvasionRate {
  AttackTag attack = AttackTag::Saliency;
  std::string substitute;
  std::string target;
  double value = 0.0;
};

NormalizedEvasionRate normalized_evasion_rate(const AdversarialSet& set,
                                              const CandidateModel& target,
                                              std::size_t pool_max);

// Keyed rate lookup: (attack, substitute) x target.
class RateTable {
 public:
  void put(const NormalizedEvasionRate& r);
  double get(AttackTag attack, const std::string& substitute,
             const std::string& target) const;  // throws if missing
  bool has(AttackTag attack, const std::string& substitute,
           const std::string& target) const;
  // Highest rate of the set across the given targets.
  double max_over(AttackTag attack, const std::string& substitute,
                  const std::vector<std::string>& targets) const;
  const std::vector<NormalizedEvasionRate>& entries() const {
    return entries_;
  }

 private:
  std::vector<NormalizedEvasionRate> entries_;
  std::map<std::string, double> index_;
};

enum class PoolingRule { Random, Weighted };

struct AttackerProfile {
  std::string name;  // weak | medium | strong | random | universal
  double strength_lo = 0.0;
  double strength_hi = 100.0;
  bool observes_transferability = false;
  PoolingRule pooling = PoolingRule::Random;
  bool uaps_only = false;
};

// The five gray-box profiles. Boundary rates belong to both adjacent
// profiles (the table uses overlapping inequalities).
std::vector<AttackerProfile> standard_profiles();
const AttackerProfile& profile_by_name(
    const std::vector<AttackerProfile>& profiles, const std::string& name);

struct PoolEntry {
  FeatureVector vector;
  std::string original_id;
  std::string source_set;  // "ATTACK:substitute"
  double source_rate = 0.0;
};

struct AttackerPool {
  std::string gamma;
  std::vector<PoolEntry> entries;
  // (attack, substitute) of every set that qualified for this profile, in
  // aggregation order; the game-theoretic optimizer's attacker move set.
  std::vector<std::pair<AttackTag, std::string>> qualified;
};

// Assigns adversarial sets to each profile: transfer-observing profiles
// qualify a set on its max rate across `targets`; others consult only the
// rate against the set's own substitute. Universal receives the UAP-backed
// examples. Profiles with empty pools are returned empty (callers warn and
// skip them).
std::map<std::string, AttackerPool> assign_sets(
    const std::vector<AttackerProfile>& profiles,
    const std::vector<AdversarialSet>& all_sets,
    const std::vector<std::string>& targets, const RateTable& rates,
    const std::vector<UAPRecord>& uaps);

struct AlphaEntry {
  FeatureVector vector;
  int true_label = kBenign;
  bool is_adversarial = false;
  std::string source;  // test sample id or adversarial provenance
};

struct AlphaDataset {
  double alpha = 0.0;
  std::vector<AlphaEntry> entries;
  bool drew_with_replacement = false;
};

// One dataset per grid value. Adversarial entries are drawn per the pooling
// rule (uniform, or probability proportional to the source set's rate); the
// clean remainder is an even benign/malware draw from the test set.
std::vector<AlphaDataset> build_alpha_datasets(
    const AttackerPool& pool, PoolingRule pooling, const Dataset& clean_test,
    const std::vector<double>& alpha_grid, std::size_t total_size,
    std::uint64_t seed);

void save_alpha_manifest(const std::filesystem::path& path,
                         const AlphaDataset& ds);

}  // namespace stratdef
