#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stratdef/rng.hpp"

namespace stratdef {

// Fixed-length binary feature vector. Elements are exactly 0 or 1.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::size_t phi) : bits_(phi, 0) {}
  static FeatureVector from_bits(std::vector<std::uint8_t> bits);

  std::size_t size() const { return bits_.size(); }
  std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  std::uint64_t hash() const;
  bool operator==(const FeatureVector&) const = default;
  auto operator<=>(const FeatureVector&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

constexpr int kBenign = 0;
constexpr int kMalware = 1;

struct Sample {
  FeatureVector vector;
  int label = kBenign;  // 0 benign, 1 malware
  std::string id;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t phi = 0;
  std::vector<std::string> feature_names;  // optional, empty or length phi
  std::vector<std::string> family_of;      // optional, empty or length phi

  std::size_t size() const { return samples.size(); }
  std::size_t count_label(int label) const;
  Dataset subset(const std::vector<std::size_t>& indices) const;
  void validate() const;  // throws on broken invariants
};

// Disjoint train/validation/test index sets over one dataset.
struct SplitSpec {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

// Per-feature flip permissions (feature-space functionality preservation).
struct PerturbationPolicy {
  std::vector<std::uint8_t> may_add;
  std::vector<std::uint8_t> may_remove;

  std::size_t phi() const { return may_add.size(); }
  static PerturbationPolicy allow_all(std::size_t phi);
  static PerturbationPolicy deny_all(std::size_t phi);

  // Permissions per family name following the DREBIN feature-family table:
  // S1/S2/S4 add-only, S3/S5/S7/S8 add+remove, S6 frozen. Unknown family
  // names are frozen.
  static PerturbationPolicy from_families(
      const std::vector<std::string>& family_of);

  std::uint64_t content_hash() const;
};

enum class DatasetFormat { SparseIndex, DenseCsv };

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
void write_dataset(const std::filesystem::path& path, const Dataset& d,
                   DatasetFormat format);

PerturbationPolicy load_policy(const std::filesystem::path& path,
                               std::size_t phi);
void write_policy(const std::filesystem::path& path,
                  const PerturbationPolicy& policy,
                  const std::vector<std::string>& family_of);

// Down-samples the majority class to the minority count (seeded, without
// replacement) and produces a stratified 64:16:20 split.
std::pair<Dataset, SplitSpec> balance_and_split(const Dataset& d,
                                                std::uint64_t seed);

// Two-class Bernoulli mixture. A `class_separation` fraction of features is
// informative (on-probability 0.7 for one class vs 0.1 for the other); the
// rest are class-independent.
Dataset synth_dataset(std::size_t phi, std::size_t n_per_class,
                      double class_separation, std::uint64_t seed);

// Reverts prohibited flips in `perturbed` back to `original`.
FeatureVector apply_policy(const PerturbationPolicy& policy,
                           const FeatureVector& original,
                           const FeatureVector& perturbed);

}  // namespace stratdef
