#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stratdef/models.hpp"

namespace stratdef {

// Single-model defense applied on top of a base family.
struct DefenseSpec {
  enum class Kind { Vanilla, AT, RFN, DD, SEC, SecAT };
  Kind kind = Kind::Vanilla;
  double param = 0.0;  // AT/SecAT ratio, RFN rate, DD temperature, SEC bound

  std::string suffix() const;  // "", "-AT-0.05", "-RFN", "-DD", ...
};

// A trained member of the candidate set U. Immutable once built.
struct CandidateModel {
  std::string id;
  ModelFamily family = ModelFamily::DT;
  DefenseSpec defense;
  std::size_t phi = 0;
  std::uint64_t seed = 0;
  std::shared_ptr<const Classifier> impl;

  Prediction predict(const FeatureVector& x) const { return impl->predict(x); }
  std::vector<double> saliency(const FeatureVector& x) const {
    return impl->saliency(x);
  }
  std::size_t param_count() const { return impl->param_count(); }
};

// Formats a defense ratio the way model ids spell it (no trailing zeros).
std::string format_ratio(double ratio);

struct ModelHypers {
  TreeHyper tree;
  ForestHyper forest;
  NnHyper nn;
  LinearHyper linear;
};

// Vanilla training entry point; per-family defaults are the ModelHypers
// defaults. `calibration` feeds the linear model's sigmoid fit when given.
CandidateModel train_model(ModelFamily family, const Dataset& train_data,
                           const ModelHypers& hyper, std::uint64_t seed,
                           const Dataset* calibration = nullptr);

// Retrains `family` from scratch on train_data plus `count` adversarial
// vectors drawn from adv_pool (seeded, without replacement), labeled
// malware. count = round(ratio * test_set_size / 2).
CandidateModel adversarial_train(ModelFamily family, const Dataset& train_data,
                                 const std::vector<FeatureVector>& adv_pool,
                                 double ratio, std::size_t test_set_size,
                                 const ModelHypers& hyper, std::uint64_t seed,
                                 const Dataset* calibration = nullptr,
                                 double sec_bound = 0.0);

std::size_t adversarial_count(double ratio, std::size_t test_set_size);

// Random feature nullification on top of a vanilla family.
CandidateModel nullify_features(ModelFamily family, const Dataset& train_data,
                                double rate, const ModelHypers& hyper,
                                std::uint64_t seed,
                                const Dataset* calibration = nullptr);

// Defensive distillation (NN only): temperature-scaled teacher, student of
// the same architecture trained on the teacher's soft labels.
CandidateModel distill(const Dataset& train_data, double temperature,
                       const ModelHypers& hyper, std::uint64_t seed);

// Bounded-weight linear model (SecSVM-style).
CandidateModel train_sec_linear(const Dataset& train_data, double weight_bound,
                                const ModelHypers& hyper, std::uint64_t seed,
                                const Dataset* calibration = nullptr);

// Plain-text model archive: header (id, family, defense, phi, seed) plus the
// parameter blob.
void save_model(const std::filesystem::path& path, const CandidateModel& m);
CandidateModel load_model(const std::filesystem::path& path);

using ModelZoo = std::vector<CandidateModel>;

const CandidateModel& find_model(const ModelZoo& zoo, const std::string& id);
const CandidateModel* find_model_ptr(const ModelZoo& zoo,
                                     const std::string& id);

}  // namespace stratdef
