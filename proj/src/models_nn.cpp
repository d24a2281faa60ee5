#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <Eigen/Dense>

#include "stratdef/error.hpp"
#include "stratdef/models.hpp"
#include "stratdef/textio.hpp"

namespace stratdef {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using WMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstWMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                 Eigen::Dynamic, Eigen::RowMajor>>;

VectorXd to_vec(const std::vector<double>& x) {
  return Eigen::Map<const VectorXd>(x.data(),
                                    static_cast<Eigen::Index>(x.size()));
}

VectorXd bits_to_vec(const FeatureVector& x) {
  VectorXd v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) v[static_cast<Eigen::Index>(i)] = x[i];
  return v;
}

// softmax over two logits at the given temperature
std::pair<double, double> softmax2(double z0, double z1, double temperature) {
  const double a = z0 / temperature;
  const double b = z1 / temperature;
  const double m = std::max(a, b);
  const double e0 = std::exp(a - m);
  const double e1 = std::exp(b - m);
  const double sum = e0 + e1;
  return {e0 / sum, e1 / sum};
}

}  // namespace

NeuralNet NeuralNet::train(const Dataset& data, const NnHyper& hyper,
                           std::uint64_t seed) {
  if (data.count_label(kBenign) == 0 || data.count_label(kMalware) == 0) {
    throw TrainError("neural net: training data has a single class");
  }
  return fit(data, nullptr, hyper, seed);
}

NeuralNet NeuralNet::train_soft(const Dataset& data,
                                const std::vector<SoftLabel>& targets,
                                const NnHyper& hyper, std::uint64_t seed) {
  if (targets.size() != data.size()) {
    throw ContractError("train_soft: one target per sample required");
  }
  return fit(data, &targets, hyper, seed);
}

NeuralNet NeuralNet::fit(const Dataset& data,
                         const std::vector<SoftLabel>* soft,
                         const NnHyper& hyper, std::uint64_t seed) {
  if (data.samples.empty()) throw TrainError("neural net: empty dataset");
  NeuralNet net;
  net.phi_ = data.phi;

  std::vector<int> dims;
  dims.push_back(static_cast<int>(data.phi));
  for (int h : hyper.hidden) dims.push_back(h);
  dims.push_back(2);

  Rng rng(derive_seed(seed, "nn"));
  net.layers_.resize(dims.size() - 1);
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    Layer& layer = net.layers_[l];
    layer.in = dims[l];
    layer.out = dims[l + 1];
    layer.weights.resize(static_cast<std::size_t>(layer.in) *
                         static_cast<std::size_t>(layer.out));
    layer.bias.assign(static_cast<std::size_t>(layer.out), 0.0);
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.in));
    for (double& w : layer.weights) w = rng.normal() * scale;
  }

  const std::size_t n = data.size();
  std::vector<MatrixXd> w(net.layers_.size());
  std::vector<VectorXd> b(net.layers_.size());
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    w[l] = ConstWMap(net.layers_[l].weights.data(), net.layers_[l].out,
                     net.layers_[l].in);
    b[l] = to_vec(net.layers_[l].bias);
  }

  std::vector<VectorXd> inputs(n);
  std::vector<std::pair<double, double>> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    inputs[i] = bits_to_vec(data.samples[i].vector);
    if (soft) {
      targets[i] = {(*soft)[i].p_benign, (*soft)[i].p_malware};
    } else {
      targets[i] = data.samples[i].label == kMalware
                       ? std::make_pair(0.0, 1.0)
                       : std::make_pair(1.0, 0.0);
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const std::size_t n_layers = net.layers_.size();
  std::vector<VectorXd> acts(n_layers + 1), pre(n_layers);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end =
          std::min(n, start + static_cast<std::size_t>(hyper.batch_size));
      std::vector<MatrixXd> gw(n_layers);
      std::vector<VectorXd> gb(n_layers);
      for (std::size_t l = 0; l < n_layers; ++l) {
        gw[l] = MatrixXd::Zero(w[l].rows(), w[l].cols());
        gb[l] = VectorXd::Zero(b[l].size());
      }
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        acts[0] = inputs[i];
        for (std::size_t l = 0; l < n_layers; ++l) {
          pre[l] = w[l] * acts[l] + b[l];
          if (l + 1 < n_layers) {
            acts[l + 1] = pre[l].cwiseMax(0.0);
          } else {
            acts[l + 1] = pre[l];
          }
        }
        auto [p0, p1] = softmax2(acts[n_layers][0], acts[n_layers][1],
                                 hyper.temperature);
        // d(cross-entropy)/d(logits) is (p - t)/T; the usual T^2 factor
        // compensates the shrinking gradient magnitude at high temperature
        VectorXd delta(2);
        delta[0] = (p0 - targets[i].first) * hyper.temperature;
        delta[1] = (p1 - targets[i].second) * hyper.temperature;
        for (std::size_t l = n_layers; l-- > 0;) {
          gw[l].noalias() += delta * acts[l].transpose();
          gb[l] += delta;
          if (l > 0) {
            VectorXd back = w[l].transpose() * delta;
            delta = (pre[l - 1].array() > 0.0)
                        .select(back.array(), 0.0)
                        .matrix();
          }
        }
      }
      const double step =
          hyper.learning_rate / static_cast<double>(end - start);
      for (std::size_t l = 0; l < n_layers; ++l) {
        w[l] -= step * gw[l];
        b[l] -= step * gb[l];
      }
    }
  }

  for (std::size_t l = 0; l < n_layers; ++l) {
    WMap(net.layers_[l].weights.data(), net.layers_[l].out,
         net.layers_[l].in) = w[l];
    Eigen::Map<VectorXd>(net.layers_[l].bias.data(),
                         static_cast<Eigen::Index>(net.layers_[l].bias.size())) =
        b[l];
  }
  return net;
}

std::pair<double, double> NeuralNet::forward_scores(
    const std::vector<double>& x, double temperature) const {
  if (x.size() != phi_) throw ContractError("neural net: dimension mismatch");
  VectorXd a = to_vec(x);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    VectorXd z = ConstWMap(layer.weights.data(), layer.out, layer.in) * a +
                 to_vec(layer.bias);
    a = (l + 1 < layers_.size()) ? z.cwiseMax(0.0).eval() : z;
  }
  return softmax2(a[0], a[1], temperature);
}

Prediction NeuralNet::predict(const FeatureVector& x) const {
  check_input(x);
  std::vector<double> real(x.bits().begin(), x.bits().end());
  auto [p0, p1] = forward_scores(real, 1.0);
  return make_prediction(p1);
}

SoftLabel NeuralNet::soft_label(const FeatureVector& x,
                                double temperature) const {
  check_input(x);
  std::vector<double> real(x.bits().begin(), x.bits().end());
  auto [p0, p1] = forward_scores(real, temperature);
  return {p0, p1};
}

std::vector<double> NeuralNet::input_gradient(
    const std::vector<double>& x) const {
  if (x.size() != phi_) throw ContractError("neural net: dimension mismatch");
  const std::size_t n_layers = layers_.size();
  std::vector<VectorXd> acts(n_layers + 1), pre(n_layers);
  acts[0] = to_vec(x);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Layer& layer = layers_[l];
    pre[l] = ConstWMap(layer.weights.data(), layer.out, layer.in) * acts[l] +
             to_vec(layer.bias);
    acts[l + 1] = (l + 1 < n_layers) ? pre[l].cwiseMax(0.0).eval() : pre[l];
  }
  auto [p0, p1] = softmax2(acts[n_layers][0], acts[n_layers][1], 1.0);
  // gradient of the benign-class probability w.r.t. the logits
  VectorXd delta(2);
  delta[0] = p0 * (1.0 - p0);
  delta[1] = -p0 * p1;
  for (std::size_t l = n_layers; l-- > 0;) {
    const Layer& layer = layers_[l];
    VectorXd back =
        ConstWMap(layer.weights.data(), layer.out, layer.in).transpose() *
        delta;
    if (l > 0) {
      delta = (pre[l - 1].array() > 0.0).select(back.array(), 0.0).matrix();
    } else {
      std::vector<double> grad(phi_);
      for (std::size_t i = 0; i < phi_; ++i) {
        grad[i] = back[static_cast<Eigen::Index>(i)];
      }
      return grad;
    }
  }
  return std::vector<double>(phi_, 0.0);  // zero-layer net
}

std::vector<double> NeuralNet::saliency(const FeatureVector& x) const {
  check_input(x);
  std::vector<double> real(x.bits().begin(), x.bits().end());
  return input_gradient(real);
}

std::size_t NeuralNet::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

void NeuralNet::zero_output_layer() {
  Layer& last = layers_.back();
  std::fill(last.weights.begin(), last.weights.end(), 0.0);
  std::fill(last.bias.begin(), last.bias.end(), 0.0);
}

void NeuralNet::save(std::ostream& out) const {
  out << "nn " << phi_ << ' ' << layers_.size() << '\n';
  for (const Layer& l : layers_) {
    out << l.in << ' ' << l.out << '\n';
    for (std::size_t i = 0; i < l.weights.size(); ++i) {
      out << (i ? " " : "") << fmt_double(l.weights[i]);
    }
    out << '\n';
    for (std::size_t i = 0; i < l.bias.size(); ++i) {
      out << (i ? " " : "") << fmt_double(l.bias[i]);
    }
    out << '\n';
  }
}

NeuralNet NeuralNet::load(std::istream& in) {
  NeuralNet net;
  std::size_t n_layers = 0;
  in >> net.phi_ >> n_layers;
  net.layers_.resize(n_layers);
  for (Layer& l : net.layers_) {
    in >> l.in >> l.out;
    l.weights.resize(static_cast<std::size_t>(l.in) *
                     static_cast<std::size_t>(l.out));
    l.bias.resize(static_cast<std::size_t>(l.out));
    std::string tok;
    for (double& w : l.weights) {
      in >> tok;
      w = parse_double(tok, "nn weight");
    }
    for (double& b : l.bias) {
      in >> tok;
      b = parse_double(tok, "nn bias");
    }
  }
  if (!in) throw ParseError("truncated nn archive");
  return net;
}

}  // namespace stratdef
