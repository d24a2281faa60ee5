#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <unordered_map>

#include "stratdef/attacks.hpp"
#include "stratdef/error.hpp"
#include "support.hpp"

using namespace stratdef;

namespace {

// every vector of `phi` bits
std::vector<FeatureVector> all_vectors(std::size_t phi) {
  std::vector<FeatureVector> out;
  for (std::size_t v = 0; v < (std::size_t{1} << phi); ++v) {
    FeatureVector x(phi);
    for (std::size_t b = 0; b < phi; ++b) x.set(b, (v >> b) & 1);
    out.push_back(x);
  }
  return out;
}

// Brute force: smallest permitted flip-set that makes the model predict
// benign; returns -1 when none exists within the budget.
int minimal_adversarial_flips(const Classifier& model, const FeatureVector& x,
                              const PerturbationPolicy& policy,
                              int max_flips) {
  const std::size_t phi = x.size();
  std::vector<std::size_t> flippable;
  for (std::size_t i = 0; i < phi; ++i) {
    if (x[i] ? policy.may_remove[i] : policy.may_add[i]) flippable.push_back(i);
  }
  int best = -1;
  for (std::size_t mask = 0; mask < (std::size_t{1} << flippable.size());
       ++mask) {
    const int count = __builtin_popcountll(mask);
    if (count > max_flips) continue;
    FeatureVector candidate = x;
    for (std::size_t b = 0; b < flippable.size(); ++b) {
      if ((mask >> b) & 1) {
        candidate.set(flippable[b], !candidate[flippable[b]]);
      }
    }
    if (model.predict(candidate).label == kBenign) {
      if (best < 0 || count < best) best = count;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("saliency attack on a hand-built linear model") {
  // weights toward malware; features 1 and 3 strongly benign when added
  test::FixedLinear model({0.5, -2.0, 0.4, -1.5}, 1.2);
  auto policy = PerturbationPolicy::allow_all(4);

  SUBCASE("crosses the boundary whenever enumeration says it is possible") {
    for (const FeatureVector& x : all_vectors(4)) {
      if (model.predict(x).label != kMalware) continue;
      FeatureVector out = attack_saliency(model, x, policy, 4);
      const int oracle = minimal_adversarial_flips(model, x, policy, 4);
      if (oracle >= 0) {
        CHECK(model.predict(out).label == kBenign);
      }
    }
  }

  SUBCASE("largest benign weights flip first") {
    FeatureVector x(4);
    REQUIRE(model.predict(x).label == kMalware);
    FeatureVector one_flip = attack_saliency(model, x, policy, 1);
    CHECK(diff_flips(x, one_flip) == std::vector<Flip>{{1, true}});
    // margin 1.2 - 2.0 < 0: benign after a single flip
    FeatureVector after = attack_saliency(model, x, policy, 4);
    CHECK(diff_flips(x, after).size() == 1);
  }

  SUBCASE("already benign input returns unchanged") {
    FeatureVector x = test::bits({0, 1, 0, 0});
    REQUIRE(model.predict(x).label == kBenign);
    CHECK(attack_saliency(model, x, policy, 4) == x);
  }

  SUBCASE("all-zero saliency returns unchanged") {
    test::FixedLinear flat({0, 0, 0, 0}, 2.0);
    FeatureVector x = test::bits({1, 0, 0, 0});
    CHECK(attack_saliency(flat, x, policy, 4) == x);
  }

  SUBCASE("prohibitive policy returns unchanged") {
    FeatureVector x(4);
    CHECK(attack_saliency(model, x, PerturbationPolicy::deny_all(4), 4) == x);
  }
}

TEST_CASE("iterative sign attack") {
  test::FixedLinear model({0.8, -1.1, 0.6, -0.9, -0.3, 0.2}, 1.7);
  auto policy = PerturbationPolicy::allow_all(6);

  SUBCASE("one iteration equals the saliency attack on a linear model") {
    for (const FeatureVector& x : all_vectors(6)) {
      if (model.predict(x).label != kMalware) continue;
      CHECK(attack_iter_sign(model, x, policy, 1, 4) ==
            attack_saliency(model, x, policy, 4));
    }
  }

  SUBCASE("malware score strictly decreases across flips") {
    FeatureVector x = test::bits({1, 0, 1, 0, 0, 0});
    REQUIRE(model.predict(x).label == kMalware);
    FeatureVector cur = x;
    double prev = model.predict(cur).score;
    FeatureVector out = attack_iter_sign(model, x, policy, 3, 6);
    for (const Flip& f : diff_flips(x, out)) {
      cur.set(f.index, f.add);
      const double score = model.predict(cur).score;
      CHECK(score < prev);
      prev = score;
    }
  }

  SUBCASE("policy forbidding all flips leaves input unchanged") {
    FeatureVector x = test::bits({1, 0, 1, 0, 0, 0});
    CHECK(attack_iter_sign(model, x, PerturbationPolicy::deny_all(6), 3, 6) ==
          x);
  }
}

TEST_CASE("tree path attack") {
  auto policy = PerturbationPolicy::allow_all(4);

  SUBCASE("depth-1 stump forces the single split flip") {
    Dataset d;
    d.phi = 4;
    for (int i = 0; i < 10; ++i) {
      FeatureVector mal(4), ben(4);
      mal.set(2, true);
      ben.set(0, i % 2);
      mal.set(0, i % 2);
      d.samples.push_back({mal, kMalware, "m" + std::to_string(i)});
      d.samples.push_back({ben, kBenign, "b" + std::to_string(i)});
    }
    TreeHyper hyper{1, 1};
    DecisionTree tree = DecisionTree::train(d, hyper, 1);
    FeatureVector x(4);
    x.set(2, true);
    REQUIRE(tree.predict(x).label == kMalware);
    FeatureVector out = attack_tree_path(tree, x, policy, 4);
    CHECK(diff_flips(x, out) == std::vector<Flip>{{2, false}});
    CHECK(tree.predict(out).label == kBenign);
  }

  SUBCASE("benign leaf requiring a prohibited removal is unreachable") {
    Dataset d;
    d.phi = 4;
    for (int i = 0; i < 10; ++i) {
      FeatureVector mal(4), ben(4);
      mal.set(1, true);
      d.samples.push_back({mal, kMalware, "m" + std::to_string(i)});
      d.samples.push_back({ben, kBenign, "b" + std::to_string(i)});
    }
    TreeHyper hyper{1, 1};
    DecisionTree tree = DecisionTree::train(d, hyper, 1);
    // the only benign leaf removes feature 1, but the family is add-only
    PerturbationPolicy add_only = PerturbationPolicy::deny_all(4);
    for (std::size_t i = 0; i < 4; ++i) add_only.may_add[i] = 1;
    FeatureVector x(4);
    x.set(1, true);
    REQUIRE(tree.predict(x).label == kMalware);
    CHECK(attack_tree_path(tree, x, add_only, 4) == x);
  }

  SUBCASE("depth-3 tree matches brute force optimum") {
    Dataset d = synth_dataset(8, 60, 1.0, 9);
    TreeHyper hyper{3, 1};
    DecisionTree tree = DecisionTree::train(d, hyper, 2);
    auto p6 = PerturbationPolicy::allow_all(8);
    for (const FeatureVector& x : all_vectors(8)) {
      if (tree.predict(x).label != kMalware) continue;
      FeatureVector out = attack_tree_path(tree, x, p6, 3);
      const int oracle = minimal_adversarial_flips(tree, x, p6, 3);
      if (out != x) {
        CHECK(tree.predict(out).label == kBenign);
        REQUIRE(oracle >= 0);
        CHECK(static_cast<int>(diff_flips(x, out).size()) == oracle);
      } else {
        // the attack inspects every benign leaf, so returning unchanged
        // means no permitted flip-set within budget reaches one
        CHECK(oracle == -1);
      }
    }
  }
}

TEST_CASE("greedy black-box attack") {
  SUBCASE("matches the saliency attack on random linear models") {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<double> w(6);
      for (double& v : w) v = rng.normal();
      test::FixedLinear model(w, rng.normal() + 1.0);
      auto policy = PerturbationPolicy::allow_all(6);
      for (const FeatureVector& x : all_vectors(6)) {
        if (model.predict(x).label != kMalware) continue;
        CHECK(attack_greedy_blackbox(model, x, policy, 4) ==
              attack_saliency(model, x, policy, 4));
      }
    }
  }

  SUBCASE("returns unchanged when no flip lowers the score") {
    test::FixedLinear model({-1.0, -1.0}, 5.0);
    PerturbationPolicy policy = PerturbationPolicy::deny_all(2);
    policy.may_add = {1, 1};
    FeatureVector x = test::bits({1, 1});
    CHECK(attack_greedy_blackbox(model, x, policy, 3) == x);
  }
}

TEST_CASE("generate pipeline") {
  Dataset d = synth_dataset(12, 80, 1.0, 21);
  auto [balanced, spec] = balance_and_split(d, 3);
  Dataset train = balanced.subset(spec.train);
  Dataset test_split = balanced.subset(spec.test);
  ModelHypers hypers;
  hypers.nn.hidden = {12};
  hypers.nn.epochs = 10;
  CandidateModel nn = train_model(ModelFamily::NN, train, hypers, 5);
  CandidateModel svm = train_model(ModelFamily::LSVM, train, hypers, 5);

  std::vector<Sample> malware;
  for (const Sample& s : test_split.samples) {
    if (s.label == kMalware) malware.push_back(s);
  }
  std::vector<std::string> fam(12);
  for (std::size_t i = 0; i < 12; ++i) fam[i] = "S" + std::to_string(1 + i % 8);
  PerturbationPolicy policy = PerturbationPolicy::from_families(fam);

  SUBCASE("every emitted example satisfies the adversarial invariants") {
    std::unordered_map<std::string, FeatureVector> originals;
    for (const Sample& s : malware) originals.emplace(s.id, s.vector);
    for (const CandidateModel* sub : {&nn, &svm}) {
      AttackSpec saliency{AttackTag::Saliency, 6, 1, 1};
      AdversarialSet set = generate(saliency, *sub, malware, policy);
      CHECK(!set.examples.empty());
      std::set<std::vector<std::uint8_t>> seen;
      for (const AdversarialExample& ex : set.examples) {
        const FeatureVector& orig = originals.at(ex.original_id);
        CHECK(sub->predict(orig).label == kMalware);
        CHECK(sub->predict(ex.vector).label == kBenign);
        CHECK(diff_flips(orig, ex.vector) == ex.flips);
        CHECK(ex.flips.size() <= 6);
        for (const Flip& f : ex.flips) {
          CHECK((f.add ? policy.may_add[f.index]
                       : policy.may_remove[f.index]) == 1);
        }
        CHECK(seen.insert(ex.vector.bits()).second);  // unique by vector
      }
    }
  }

  SUBCASE("all-prohibited policy yields an empty set") {
    AttackSpec spec_{AttackTag::Saliency, 6, 1, 1};
    AdversarialSet set =
        generate(spec_, nn, malware, PerturbationPolicy::deny_all(12));
    CHECK(set.examples.empty());
  }

  SUBCASE("inapplicable attack/family is a configuration error") {
    CandidateModel rf = train_model(ModelFamily::RF, train, hypers, 5);
    AttackSpec spec_{AttackTag::Saliency, 6, 1, 1};
    CHECK_THROWS_AS(generate(spec_, rf, malware, policy), ConfigError);
    AttackSpec tree_spec{AttackTag::TreePath, 6, 1, 1};
    CHECK_THROWS_AS(generate(tree_spec, nn, malware, policy), ConfigError);
  }

  SUBCASE("non-malware input is a contract error") {
    std::vector<Sample> mixed = malware;
    mixed.push_back({FeatureVector(12), kBenign, "oops"});
    AttackSpec spec_{AttackTag::Saliency, 6, 1, 1};
    CHECK_THROWS_AS(generate(spec_, nn, mixed, policy), ContractError);
  }

  SUBCASE("deterministic under fixed seed") {
    AttackSpec spec_{AttackTag::GreedyBlackbox, 6, 1, 42};
    AdversarialSet a = generate(spec_, nn, malware, policy);
    AdversarialSet b = generate(spec_, nn, malware, policy);
    REQUIRE(a.examples.size() == b.examples.size());
    for (std::size_t i = 0; i < a.examples.size(); ++i) {
      CHECK(a.examples[i].vector == b.examples[i].vector);
    }
  }

  SUBCASE("attacks never claim an example brute force rules out") {
    test::FixedLinear tiny({0.9, -0.7, 0.3, -0.6, 0.1, -0.2}, 0.8);
    auto p6 = PerturbationPolicy::allow_all(6);
    for (const FeatureVector& x : all_vectors(6)) {
      if (tiny.predict(x).label != kMalware) continue;
      for (int max_flips : {1, 2, 3}) {
        const int oracle = minimal_adversarial_flips(tiny, x, p6, max_flips);
        for (auto attack : {AttackTag::Saliency, AttackTag::GreedyBlackbox}) {
          FeatureVector out =
              attack == AttackTag::Saliency
                  ? attack_saliency(tiny, x, p6, max_flips)
                  : attack_greedy_blackbox(tiny, x, p6, max_flips);
          if (tiny.predict(out).label == kBenign) {
            CHECK(oracle >= 0);
            CHECK(static_cast<int>(diff_flips(x, out).size()) >= oracle);
          }
        }
      }
    }
  }
}

TEST_CASE("uap extraction") {
  auto make_example = [](const std::string& id, std::vector<Flip> flips) {
    AdversarialExample ex;
    ex.original_id = id;
    ex.flips = std::move(flips);
    ex.vector = FeatureVector(8);
    for (const Flip& f : ex.flips) ex.vector.set(f.index, f.add);
    return ex;
  };

  SUBCASE("same flip-set on two originals counts as a UAP") {
    AdversarialSet set;
    set.attack = AttackTag::Saliency;
    set.substitute = "NN";
    set.examples.push_back(make_example("a", {{1, true}, {3, true}}));
    set.examples.push_back(make_example("b", {{1, true}, {3, true}}));
    set.examples.push_back(make_example("c", {{2, true}}));
    auto uaps = extract_uaps({set});
    REQUIRE(uaps.size() == 1);
    CHECK(uaps[0].reuse_count == 2);
    CHECK(uaps[0].perturbation == std::vector<Flip>{{1, true}, {3, true}});
    CHECK(uaps[0].example_ids.size() == 2);
  }

  SUBCASE("all distinct flip-sets yield no UAPs") {
    AdversarialSet set;
    set.attack = AttackTag::Saliency;
    set.substitute = "NN";
    set.examples.push_back(make_example("a", {{1, true}}));
    set.examples.push_back(make_example("b", {{2, true}}));
    CHECK(extract_uaps({set}).empty());
  }

  SUBCASE("sorted by reuse count descending") {
    AdversarialSet s1, s2;
    s1.attack = AttackTag::Saliency;
    s1.substitute = "NN";
    s2.attack = AttackTag::IterSign;
    s2.substitute = "LSVM";
    for (int i = 0; i < 3; ++i) {
      s1.examples.push_back(make_example("x" + std::to_string(i), {{5, true}}));
    }
    for (int i = 0; i < 2; ++i) {
      s2.examples.push_back(make_example("y" + std::to_string(i), {{6, true}}));
    }
    auto uaps = extract_uaps({s1, s2});
    REQUIRE(uaps.size() == 2);
    CHECK(uaps[0].reuse_count == 3);
    CHECK(uaps[1].reuse_count == 2);
  }
}

TEST_CASE("adversarial set files") {
  const auto dir = test::scratch_dir("attacks_io");
  Dataset d = synth_dataset(10, 40, 1.0, 31);
  CandidateModel svm = train_model(ModelFamily::LSVM, d, {}, 7);
  std::vector<Sample> malware;
  for (const Sample& s : d.samples) {
    if (s.label == kMalware) malware.push_back(s);
  }
  auto policy = PerturbationPolicy::allow_all(10);
  AttackSpec spec_{AttackTag::Saliency, 5, 1, 3};
  AdversarialSet set = generate(spec_, svm, malware, policy);
  REQUIRE(!set.examples.empty());

  save_adversarial_set(dir / "set.advset", set, policy);
  AdversarialSet back = load_adversarial_set(dir / "set.advset", d);
  CHECK(back.attack == set.attack);
  CHECK(back.substitute == set.substitute);
  REQUIRE(back.examples.size() == set.examples.size());
  for (std::size_t i = 0; i < set.examples.size(); ++i) {
    CHECK(back.examples[i].original_id == set.examples[i].original_id);
    CHECK(back.examples[i].vector == set.examples[i].vector);
    CHECK(back.examples[i].flips == set.examples[i].flips);
  }
}
