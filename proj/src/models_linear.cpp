#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "stratdef/error.hpp"
#include "stratdef/models.hpp"
#include "stratdef/textio.hpp"

namespace stratdef {

namespace {

double sigmoid(double z) {
  if (z >= 0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Platt scaling: fit p(malware | margin) = sigmoid(a*m + b) by Newton
// iterations on the regularized log-loss. Targets use Platt's smoothing so
// separable data cannot push `a` to infinity.
std::pair<double, double> fit_platt(const std::vector<double>& margins,
                                    const std::vector<int>& labels) {
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y == kMalware ? n_pos : n_neg)++;
  const double t_pos = (static_cast<double>(n_pos) + 1.0) /
                       (static_cast<double>(n_pos) + 2.0);
  const double t_neg = 1.0 / (static_cast<double>(n_neg) + 2.0);

  double a = 1.0, b = 0.0;
  for (int iter = 0; iter < 100; ++iter) {
    double ga = 0.0, gb = 0.0, haa = 1e-9, hab = 0.0, hbb = 1e-9;
    for (std::size_t i = 0; i < margins.size(); ++i) {
      const double m = margins[i];
      const double p = sigmoid(a * m + b);
      const double t = labels[i] == kMalware ? t_pos : t_neg;
      const double d = p - t;
      ga += d * m;
      gb += d;
      const double w = p * (1.0 - p);
      haa += w * m * m;
      hab += w * m;
      hbb += w;
    }
    const double det = haa * hbb - hab * hab;
    if (std::abs(det) < 1e-15) break;
    const double da = (hbb * ga - hab * gb) / det;
    const double db = (haa * gb - hab * ga) / det;
    a -= da;
    b -= db;
    if (std::abs(da) < 1e-10 && std::abs(db) < 1e-10) break;
  }
  return {a, b};
}

}  // namespace

LinearSvm LinearSvm::train(const Dataset& data, const LinearHyper& hyper,
                           std::uint64_t seed, const Dataset* calibration) {
  if (data.samples.empty()) throw TrainError("linear svm: empty dataset");
  if (data.count_label(kBenign) == 0 || data.count_label(kMalware) == 0) {
    throw TrainError("linear svm: training data has a single class");
  }
  LinearSvm model;
  model.weights_.assign(data.phi, 0.0);
  model.bias_ = 0.0;

  Rng rng(derive_seed(seed, "lsvm"));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto clamp_weights = [&] {
    if (hyper.weight_bound <= 0.0) return;
    for (double& w : model.weights_) {
      w = std::clamp(w, -hyper.weight_bound, hyper.weight_bound);
    }
  };
  clamp_weights();  // bound 0 collapses to the zero vector from the start

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      const Sample& s = data.samples[i];
      const double y = s.label == kMalware ? 1.0 : -1.0;
      double m = model.bias_;
      for (std::size_t f = 0; f < data.phi; ++f) {
        if (s.vector[f]) m += model.weights_[f];
      }
      const double decay = 1.0 - hyper.learning_rate * hyper.l2;
      for (double& w : model.weights_) w *= decay;
      if (y * m < 1.0) {  // hinge-loss subgradient step
        for (std::size_t f = 0; f < data.phi; ++f) {
          if (s.vector[f]) model.weights_[f] += hyper.learning_rate * y;
        }
        model.bias_ += hyper.learning_rate * y;
      }
      clamp_weights();
    }
  }

  const Dataset& calib = calibration ? *calibration : data;
  std::vector<double> margins;
  std::vector<int> labels;
  margins.reserve(calib.size());
  for (const Sample& s : calib.samples) {
    margins.push_back(model.margin(s.vector));
    labels.push_back(s.label);
  }
  std::tie(model.platt_a_, model.platt_b_) = fit_platt(margins, labels);
  return model;
}

double LinearSvm::margin(const FeatureVector& x) const {
  check_input(x);
  double m = bias_;
  for (std::size_t f = 0; f < weights_.size(); ++f) {
    if (x[f]) m += weights_[f];
  }
  return m;
}

Prediction LinearSvm::predict(const FeatureVector& x) const {
  return make_prediction(sigmoid(platt_a_ * margin(x) + platt_b_));
}

std::vector<double> LinearSvm::saliency(const FeatureVector& x) const {
  check_input(x);
  std::vector<double> s(weights_.size());
  for (std::size_t i = 0; i < weights_.size(); ++i) s[i] = -weights_[i];
  return s;
}

void LinearSvm::save(std::ostream& out) const {
  out << "linear " << weights_.size() << '\n';
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out << (i ? " " : "") << fmt_double(weights_[i]);
  }
  out << '\n'
      << fmt_double(bias_) << ' ' << fmt_double(platt_a_) << ' '
      << fmt_double(platt_b_) << '\n';
}

LinearSvm LinearSvm::load(std::istream& in) {
  LinearSvm model;
  std::size_t phi = 0;
  in >> phi;
  model.weights_.resize(phi);
  std::string tok;
  for (double& w : model.weights_) {
    in >> tok;
    w = parse_double(tok, "svm weight");
  }
  in >> tok;
  model.bias_ = parse_double(tok, "svm bias");
  in >> tok;
  model.platt_a_ = parse_double(tok, "svm platt a");
  in >> tok;
  model.platt_b_ = parse_double(tok, "svm platt b");
  if (!in) throw ParseError("truncated linear archive");
  return model;
}

}  // namespace stratdef
