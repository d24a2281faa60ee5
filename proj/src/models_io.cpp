#include <algorithm>
#include <istream>
#include <ostream>

#include "stratdef/error.hpp"
#include "stratdef/models.hpp"

namespace stratdef {

std::string family_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::DT: return "DT";
    case ModelFamily::RF: return "RF";
    case ModelFamily::NN: return "NN";
    case ModelFamily::LSVM: return "LSVM";
  }
  throw ContractError("unknown model family");
}

ModelFamily family_from_name(const std::string& name) {
  if (name == "DT") return ModelFamily::DT;
  if (name == "RF") return ModelFamily::RF;
  if (name == "NN") return ModelFamily::NN;
  if (name == "LSVM") return ModelFamily::LSVM;
  throw ConfigError("unknown model family: " + name);
}

void Classifier::check_input(const FeatureVector& x) const {
  if (x.size() != phi()) {
    throw ContractError("input has " + std::to_string(x.size()) +
                        " features, model expects " + std::to_string(phi()));
  }
}

std::unique_ptr<Classifier> load_classifier(std::istream& in) {
  std::string kind;
  in >> kind;
  if (!in) throw ParseError("empty classifier archive");
  if (kind == "tree") {
    return std::make_unique<DecisionTree>(DecisionTree::load(in));
  }
  if (kind == "forest") {
    return std::make_unique<RandomForest>(RandomForest::load(in));
  }
  if (kind == "nn") return std::make_unique<NeuralNet>(NeuralNet::load(in));
  if (kind == "linear") {
    return std::make_unique<LinearSvm>(LinearSvm::load(in));
  }
  if (kind == "nullified") {
    return std::make_unique<NullifiedModel>(NullifiedModel::load(in));
  }
  throw ParseError("unknown classifier kind: " + kind);
}

// ---------------------------------------------------------------------------

NullifiedModel::NullifiedModel(std::vector<std::uint8_t> mask,
                               std::unique_ptr<Classifier> base)
    : mask_(std::move(mask)), base_(std::move(base)) {
  if (mask_.size() != base_->phi()) {
    throw ContractError("nullification mask length mismatch");
  }
}

std::vector<std::uint8_t> NullifiedModel::draw_mask(std::size_t phi,
                                                    double rate,
                                                    std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) {
    throw ConfigError("nullification rate must be in [0,1]");
  }
  const auto n_zeroed = static_cast<std::size_t>(
      std::llround(rate * static_cast<double>(phi)));
  std::vector<std::uint8_t> mask(phi, 0);
  Rng rng(derive_seed(seed, "rfn_mask"));
  for (std::size_t i : rng.sample_without_replacement(phi, n_zeroed)) {
    mask[i] = 1;
  }
  return mask;
}

Dataset NullifiedModel::mask_dataset(const Dataset& data,
                                     const std::vector<std::uint8_t>& mask) {
  Dataset out = data;
  for (Sample& s : out.samples) {
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) s.vector.set(i, false);
    }
  }
  return out;
}

FeatureVector NullifiedModel::masked(const FeatureVector& x) const {
  FeatureVector out = x;
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    if (mask_[i]) out.set(i, false);
  }
  return out;
}

Prediction NullifiedModel::predict(const FeatureVector& x) const {
  check_input(x);
  return base_->predict(masked(x));
}

std::vector<double> NullifiedModel::saliency(const FeatureVector& x) const {
  check_input(x);
  auto s = base_->saliency(masked(x));
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    if (mask_[i]) s[i] = 0.0;  // nullified features carry no influence
  }
  return s;
}

std::size_t NullifiedModel::param_count() const {
  return base_->param_count() + mask_.size();
}

void NullifiedModel::save(std::ostream& out) const {
  out << "nullified " << mask_.size() << '\n';
  for (std::size_t i = 0; i < mask_.size(); ++i) {
    out << (i ? " " : "") << static_cast<int>(mask_[i]);
  }
  out << '\n';
  base_->save(out);
}

NullifiedModel NullifiedModel::load(std::istream& in) {
  std::size_t phi = 0;
  in >> phi;
  std::vector<std::uint8_t> mask(phi);
  for (std::size_t i = 0; i < phi; ++i) {
    int v = 0;
    in >> v;
    mask[i] = static_cast<std::uint8_t>(v);
  }
  auto base = load_classifier(in);
  return NullifiedModel(std::move(mask), std::move(base));
}

}  // namespace stratdef
