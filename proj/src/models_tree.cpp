#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "stratdef/error.hpp"
#include "stratdef/models.hpp"
#include "stratdef/textio.hpp"

namespace stratdef {

namespace {

double gini(std::size_t malware, std::size_t total) {
  if (total == 0) return 0.0;
  const double p = static_cast<double>(malware) / static_cast<double>(total);
  return 2.0 * p * (1.0 - p);
}

struct SplitChoice {
  int feature = -1;
  double gain = 0.0;
};

}  // namespace

DecisionTree DecisionTree::train(const Dataset& data, const TreeHyper& hyper,
                                 std::uint64_t seed) {
  if (data.samples.empty()) throw TrainError("decision tree: empty dataset");
  if (data.count_label(kBenign) == 0 || data.count_label(kMalware) == 0) {
    throw TrainError("decision tree: training data has a single class");
  }
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  Rng rng(derive_seed(seed, "tree"));
  return train_on_rows(data, rows, hyper, 0, rng);
}

DecisionTree DecisionTree::train_on_rows(const Dataset& data,
                                         const std::vector<std::size_t>& rows,
                                         const TreeHyper& hyper,
                                         std::size_t features_per_split,
                                         Rng& rng) {
  DecisionTree tree;
  tree.phi_ = data.phi;

  // Iterative build; each work item owns its row subset.
  struct Item {
    int node;
    std::vector<std::size_t> rows;
    int depth;
  };
  auto make_node = [&](const std::vector<std::size_t>& r) {
    std::size_t malware = 0;
    for (std::size_t i : r) malware += data.samples[i].label == kMalware;
    TreeNode n;
    n.n_samples = r.size();
    n.malware_fraction =
        r.empty() ? 0.0
                  : static_cast<double>(malware) / static_cast<double>(r.size());
    tree.nodes_.push_back(n);
    return static_cast<int>(tree.nodes_.size() - 1);
  };

  std::vector<Item> stack;
  stack.push_back({make_node(rows), rows, 0});
  while (!stack.empty()) {
    Item item = std::move(stack.back());
    stack.pop_back();
    const std::size_t total = item.rows.size();
    std::size_t malware = 0;
    for (std::size_t i : item.rows) {
      malware += data.samples[i].label == kMalware;
    }
    const bool pure = malware == 0 || malware == total;
    if (pure || item.depth >= hyper.max_depth ||
        total < 2 * static_cast<std::size_t>(hyper.min_samples_leaf)) {
      continue;
    }

    std::vector<std::size_t> candidates;
    if (features_per_split > 0 && features_per_split < data.phi) {
      candidates = rng.sample_without_replacement(data.phi, features_per_split);
      std::sort(candidates.begin(), candidates.end());
    } else {
      candidates.resize(data.phi);
      for (std::size_t f = 0; f < data.phi; ++f) candidates[f] = f;
    }

    const double parent_impurity = gini(malware, total);
    SplitChoice best;
    for (std::size_t f : candidates) {
      std::size_t right_total = 0, right_malware = 0;
      for (std::size_t i : item.rows) {
        if (data.samples[i].vector[f]) {
          ++right_total;
          right_malware += data.samples[i].label == kMalware;
        }
      }
      const std::size_t left_total = total - right_total;
      const std::size_t left_malware = malware - right_malware;
      if (left_total < static_cast<std::size_t>(hyper.min_samples_leaf) ||
          right_total < static_cast<std::size_t>(hyper.min_samples_leaf)) {
        continue;
      }
      const double child_impurity =
          (static_cast<double>(left_total) * gini(left_malware, left_total) +
           static_cast<double>(right_total) * gini(right_malware, right_total)) /
          static_cast<double>(total);
      const double gain = parent_impurity - child_impurity;
      if (gain > best.gain + 1e-12) {  // ties keep the lowest feature index
        best.feature = static_cast<int>(f);
        best.gain = gain;
      }
    }
    if (best.feature < 0) continue;

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t i : item.rows) {
      (data.samples[i].vector[static_cast<std::size_t>(best.feature)]
           ? right_rows
           : left_rows)
          .push_back(i);
    }
    const int left = make_node(left_rows);
    const int right = make_node(right_rows);
    tree.nodes_[item.node].feature = best.feature;
    tree.nodes_[item.node].left = left;
    tree.nodes_[item.node].right = right;
    stack.push_back({right, std::move(right_rows), item.depth + 1});
    stack.push_back({left, std::move(left_rows), item.depth + 1});
  }
  return tree;
}

Prediction DecisionTree::predict(const FeatureVector& x) const {
  check_input(x);
  int node = 0;
  while (nodes_[node].feature >= 0) {
    node = x[static_cast<std::size_t>(nodes_[node].feature)]
               ? nodes_[node].right
               : nodes_[node].left;
  }
  return make_prediction(nodes_[node].malware_fraction);
}

std::vector<double> DecisionTree::saliency(const FeatureVector& x) const {
  check_input(x);
  // Path-signed surrogate: at each node on x's decision path, the benign
  // direction of the split feature is the side with the lower malware
  // fraction, weighted by the node's sample share.
  std::vector<double> s(phi_, 0.0);
  if (nodes_.empty()) return s;
  const double root_n = static_cast<double>(nodes_[0].n_samples);
  int node = 0;
  while (nodes_[node].feature >= 0) {
    const TreeNode& n = nodes_[node];
    const double delta = nodes_[n.left].malware_fraction -
                         nodes_[n.right].malware_fraction;
    const double weight =
        root_n > 0 ? static_cast<double>(n.n_samples) / root_n : 0.0;
    s[static_cast<std::size_t>(n.feature)] += delta * weight;
    node = x[static_cast<std::size_t>(n.feature)] ? n.right : n.left;
  }
  return s;
}

std::size_t DecisionTree::param_count() const {
  return nodes_.size() * 2;  // split-feature + leaf-score slots
}

void DecisionTree::save(std::ostream& out) const {
  out << "tree " << phi_ << ' ' << nodes_.size() << '\n';
  for (const TreeNode& n : nodes_) {
    out << n.feature << ' ' << n.left << ' ' << n.right << ' '
        << fmt_double(n.malware_fraction) << ' ' << n.n_samples << '\n';
  }
}

DecisionTree DecisionTree::load(std::istream& in) {
  DecisionTree tree;
  std::size_t n_nodes = 0;
  in >> tree.phi_ >> n_nodes;
  tree.nodes_.resize(n_nodes);
  for (TreeNode& n : tree.nodes_) {
    std::string frac;
    in >> n.feature >> n.left >> n.right >> frac >> n.n_samples;
    n.malware_fraction = parse_double(frac, "tree node");
  }
  if (!in) throw ParseError("truncated tree archive");
  return tree;
}

// ---------------------------------------------------------------------------

RandomForest RandomForest::train(const Dataset& data, const ForestHyper& hyper,
                                 std::uint64_t seed) {
  if (data.samples.empty()) throw TrainError("random forest: empty dataset");
  if (data.count_label(kBenign) == 0 || data.count_label(kMalware) == 0) {
    throw TrainError("random forest: training data has a single class");
  }
  RandomForest forest;
  forest.phi_ = data.phi;
  Rng rng(derive_seed(seed, "forest"));
  const auto features_per_split = static_cast<std::size_t>(
      std::max(1.0, std::ceil(std::sqrt(static_cast<double>(data.phi)))));
  TreeHyper tree_hyper{hyper.max_depth, hyper.min_samples_leaf};
  for (int t = 0; t < hyper.n_trees; ++t) {
    std::vector<std::size_t> bootstrap(data.size());
    for (auto& r : bootstrap) {
      r = static_cast<std::size_t>(rng.below(data.size()));
    }
    forest.trees_.push_back(DecisionTree::train_on_rows(
        data, bootstrap, tree_hyper, features_per_split, rng));
  }
  return forest;
}

Prediction RandomForest::predict(const FeatureVector& x) const {
  check_input(x);
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x).score;
  return make_prediction(sum / static_cast<double>(trees_.size()));
}

std::vector<double> RandomForest::saliency(const FeatureVector& x) const {
  check_input(x);
  std::vector<double> s(phi_, 0.0);
  for (const auto& t : trees_) {
    const auto ts = t.saliency(x);
    for (std::size_t i = 0; i < phi_; ++i) s[i] += ts[i];
  }
  for (double& v : s) v /= static_cast<double>(trees_.size());
  return s;
}

std::size_t RandomForest::param_count() const {
  std::size_t n = 0;
  for (const auto& t : trees_) n += t.param_count();
  return n;
}

void RandomForest::save(std::ostream& out) const {
  out << "forest " << phi_ << ' ' << trees_.size() << '\n';
  for (const auto& t : trees_) t.save(out);
}

RandomForest RandomForest::load(std::istream& in) {
  RandomForest forest;
  std::size_t n_trees = 0;
  in >> forest.phi_ >> n_trees;
  forest.trees_.reserve(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    std::string kind;
    in >> kind;
    if (kind != "tree") throw ParseError("forest archive: expected tree");
    forest.trees_.push_back(DecisionTree::load(in));
  }
  return forest;
}

}  // namespace stratdef
