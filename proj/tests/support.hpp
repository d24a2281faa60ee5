#pragma once

// Shared helpers for the test suites.

#include <filesystem>
#include <string>
#include <vector>

#include "stratdef/data.hpp"
#include "stratdef/models.hpp"

namespace stratdef::test {

inline FeatureVector bits(std::initializer_list<int> values) {
  std::vector<std::uint8_t> b;
  for (int v : values) b.push_back(static_cast<std::uint8_t>(v));
  return FeatureVector::from_bits(std::move(b));
}

// Hand-specified linear model with sigmoid(margin) scores, for enumeration
// oracles. Positive weights push toward malware.
class FixedLinear : public Classifier {
 public:
  FixedLinear(std::vector<double> w, double b)
      : w_(std::move(w)), b_(b) {}

  Prediction predict(const FeatureVector& x) const override {
    check_input(x);
    double m = b_;
    for (std::size_t i = 0; i < w_.size(); ++i) {
      if (x[i]) m += w_[i];
    }
    const double score = 1.0 / (1.0 + std::exp(-m));
    return make_prediction(score);
  }

  std::vector<double> saliency(const FeatureVector& x) const override {
    check_input(x);
    std::vector<double> s(w_.size());
    for (std::size_t i = 0; i < w_.size(); ++i) s[i] = -w_[i];
    return s;
  }

  std::size_t phi() const override { return w_.size(); }
  std::size_t param_count() const override { return w_.size() + 1; }
  std::string kind() const override { return "fixed-linear"; }
  void save(std::ostream&) const override {}

 private:
  std::vector<double> w_;
  double b_;
};

// Scratch directory unique to a test binary; wiped on construction.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("stratdef_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace stratdef::test
