#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stratdef/data.hpp"

namespace stratdef {

enum class ModelFamily { DT, RF, NN, LSVM };

std::string family_name(ModelFamily f);
ModelFamily family_from_name(const std::string& name);

struct Prediction {
  int label = kBenign;
  double score = 0.0;  // probability of the malware class
};

// Decision threshold is fixed at 0.5: label == 1 iff score >= 0.5.
inline Prediction make_prediction(double score) {
  return {score >= 0.5 ? kMalware : kBenign, score};
}

// Uniform prediction interface over all trained models. Implementations are
// immutable once trained; predict/saliency are pure functions of
// (parameters, input).
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual Prediction predict(const FeatureVector& x) const = 0;

  // Signed per-feature influence toward the benign class: positive means
  // raising the feature pushes the model toward predicting benign.
  virtual std::vector<double> saliency(const FeatureVector& x) const = 0;

  virtual std::size_t phi() const = 0;
  virtual std::size_t param_count() const = 0;

  virtual std::string kind() const = 0;
  virtual void save(std::ostream& out) const = 0;

  void check_input(const FeatureVector& x) const;
};

std::unique_ptr<Classifier> load_classifier(std::istream& in);

// ---------------------------------------------------------------------------
// Decision tree (CART, gini impurity, binary-feature splits)

struct TreeHyper {
  int max_depth = 5;
  int min_samples_leaf = 1;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  int left = -1;     // child for feature == 0
  int right = -1;    // child for feature == 1
  double malware_fraction = 0.0;
  std::size_t n_samples = 0;
};

class DecisionTree : public Classifier {
 public:
  static DecisionTree train(const Dataset& data, const TreeHyper& hyper,
                            std::uint64_t seed);
  // Training restricted to the given rows, optionally sampling
  // `features_per_split` candidate features per node (random forests).
  static DecisionTree train_on_rows(const Dataset& data,
                                    const std::vector<std::size_t>& rows,
                                    const TreeHyper& hyper,
                                    std::size_t features_per_split, Rng& rng);

  Prediction predict(const FeatureVector& x) const override;
  std::vector<double> saliency(const FeatureVector& x) const override;
  std::size_t phi() const override { return phi_; }
  std::size_t param_count() const override;
  std::string kind() const override { return "tree"; }
  void save(std::ostream& out) const override;
  static DecisionTree load(std::istream& in);

  const std::vector<TreeNode>& nodes() const { return nodes_; }

 private:
  std::vector<TreeNode> nodes_;
  std::size_t phi_ = 0;
};

// ---------------------------------------------------------------------------
// Random forest (bagged trees, sqrt(phi) features per split)

struct ForestHyper {
  int n_trees = 100;
  int max_depth = 100;
  int min_samples_leaf = 1;
};

class RandomForest : public Classifier {
 public:
  static RandomForest train(const Dataset& data, const ForestHyper& hyper,
                            std::uint64_t seed);

  Prediction predict(const FeatureVector& x) const override;
  std::vector<double> saliency(const FeatureVector& x) const override;
  std::size_t phi() const override { return phi_; }
  std::size_t param_count() const override;
  std::string kind() const override { return "forest"; }
  void save(std::ostream& out) const override;
  static RandomForest load(std::istream& in);

  const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  std::vector<DecisionTree> trees_;
  std::size_t phi_ = 0;
};

// ---------------------------------------------------------------------------
// Fully-connected network, rectifier hidden layers, two-way softmax output

struct NnHyper {
  std::vector<int> hidden = {128, 64, 32};
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0.01;
  double temperature = 1.0;  // softmax temperature during training
};

struct SoftLabel {
  double p_benign = 0.0;
  double p_malware = 0.0;
};

class NeuralNet : public Classifier {
 public:
  static NeuralNet train(const Dataset& data, const NnHyper& hyper,
                         std::uint64_t seed);
  // Distillation: fit to soft targets at the hyper's temperature.
  static NeuralNet train_soft(const Dataset& data,
                              const std::vector<SoftLabel>& targets,
                              const NnHyper& hyper, std::uint64_t seed);

  Prediction predict(const FeatureVector& x) const override;
  std::vector<double> saliency(const FeatureVector& x) const override;
  std::size_t phi() const override { return phi_; }
  std::size_t param_count() const override;
  std::string kind() const override { return "nn"; }
  void save(std::ostream& out) const override;
  static NeuralNet load(std::istream& in);

  // Underlying real-valued network, exposed for gradient checks and the
  // distillation pipeline.
  std::pair<double, double> forward_scores(const std::vector<double>& x,
                                           double temperature) const;
  std::vector<double> input_gradient(const std::vector<double>& x) const;
  SoftLabel soft_label(const FeatureVector& x, double temperature) const;

  void zero_output_layer();  // degenerate constant model, used in tests

 private:
  struct Layer {
    std::vector<double> weights;  // row-major [out][in]
    std::vector<double> bias;
    int in = 0, out = 0;
  };
  std::vector<Layer> layers_;
  std::size_t phi_ = 0;

  static NeuralNet fit(const Dataset& data, const std::vector<SoftLabel>* soft,
                       const NnHyper& hyper, std::uint64_t seed);
};

// ---------------------------------------------------------------------------
// Linear max-margin model with a calibrated sigmoid probability output

struct LinearHyper {
  int epochs = 50;
  double learning_rate = 0.05;
  double l2 = 1e-4;
  double weight_bound = 0.0;  // > 0: clamp |w_i| after every step
};

class LinearSvm : public Classifier {
 public:
  // `calibration`: held-out data for fitting the sigmoid over the raw
  // margin; falls back to the training data when null.
  static LinearSvm train(const Dataset& data, const LinearHyper& hyper,
                         std::uint64_t seed,
                         const Dataset* calibration = nullptr);

  Prediction predict(const FeatureVector& x) const override;
  std::vector<double> saliency(const FeatureVector& x) const override;
  std::size_t phi() const override { return weights_.size(); }
  std::size_t param_count() const override { return weights_.size() + 3; }
  std::string kind() const override { return "linear"; }
  void save(std::ostream& out) const override;
  static LinearSvm load(std::istream& in);

  double margin(const FeatureVector& x) const;
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
  double platt_a_ = 1.0;
  double platt_b_ = 0.0;
};

// ---------------------------------------------------------------------------
// Feature nullification wrapper: a fixed seeded mask zeroes a fraction of
// the input features for both training and prediction.

class NullifiedModel : public Classifier {
 public:
  NullifiedModel(std::vector<std::uint8_t> mask,
                 std::unique_ptr<Classifier> base);
  static std::vector<std::uint8_t> draw_mask(std::size_t phi, double rate,
                                             std::uint64_t seed);
  static Dataset mask_dataset(const Dataset& data,
                              const std::vector<std::uint8_t>& mask);

  Prediction predict(const FeatureVector& x) const override;
  std::vector<double> saliency(const FeatureVector& x) const override;
  std::size_t phi() const override { return mask_.size(); }
  std::size_t param_count() const override;
  std::string kind() const override { return "nullified"; }
  void save(std::ostream& out) const override;
  static NullifiedModel load(std::istream& in);

  const std::vector<std::uint8_t>& mask() const { return mask_; }
  const Classifier& base() const { return *base_; }

 private:
  FeatureVector masked(const FeatureVector& x) const;
  std::vector<std::uint8_t> mask_;
  std::unique_ptr<Classifier> base_;
};

}  // namespace stratdef
