#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "stratdef/error.hpp"
#include "stratdef/zoo.hpp"
#include "support.hpp"

using namespace stratdef;

namespace {

Dataset separable(std::size_t phi = 32, std::size_t n = 200,
                  std::uint64_t seed = 1) {
  return synth_dataset(phi, n, 1.0, seed);
}

double accuracy(const Classifier& m, const Dataset& d) {
  std::size_t correct = 0;
  for (const Sample& s : d.samples) {
    correct += m.predict(s.vector).label == s.label;
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

std::pair<Dataset, Dataset> train_test(const Dataset& d, std::uint64_t seed) {
  auto [balanced, spec] = balance_and_split(d, seed);
  return {balanced.subset(spec.train), balanced.subset(spec.test)};
}

}  // namespace

TEST_CASE("decision tree") {
  auto [train, test] = train_test(separable(), 5);

  SUBCASE("separable data trains past 0.9 accuracy") {
    DecisionTree t = DecisionTree::train(train, {}, 7);
    CHECK(accuracy(t, test) > 0.9);
  }

  SUBCASE("single-class data is a training error") {
    Dataset one = train;
    for (auto& s : one.samples) s.label = kMalware;
    CHECK_THROWS_AS(DecisionTree::train(one, {}, 1), TrainError);
  }

  SUBCASE("archive round trip preserves behavior") {
    DecisionTree t = DecisionTree::train(train, {}, 7);
    std::stringstream ss;
    t.save(ss);
    std::string kind;
    ss >> kind;
    DecisionTree back = DecisionTree::load(ss);
    for (const Sample& s : test.samples) {
      CHECK(back.predict(s.vector).score == t.predict(s.vector).score);
    }
  }
}

TEST_CASE("random forest") {
  auto [train, test] = train_test(separable(), 6);

  SUBCASE("default forest beats 0.9") {
    RandomForest f = RandomForest::train(train, {}, 11);
    CHECK(accuracy(f, test) > 0.9);
  }

  SUBCASE("one stump forest equals its own tree") {
    ForestHyper hyper{1, 1, 1};
    RandomForest f = RandomForest::train(train, hyper, 3);
    REQUIRE(f.trees().size() == 1);
    for (const Sample& s : test.samples) {
      CHECK(f.predict(s.vector).score == f.trees()[0].predict(s.vector).score);
    }
  }
}

TEST_CASE("neural net") {
  auto [train, test] = train_test(separable(), 7);
  NnHyper small;
  small.hidden = {32, 16};
  small.epochs = 20;

  SUBCASE("scores sum to one") {
    NeuralNet nn = NeuralNet::train(train, small, 3);
    for (std::size_t i = 0; i < 10; ++i) {
      const auto& x = test.samples[i].vector;
      std::vector<double> real(x.bits().begin(), x.bits().end());
      auto [p0, p1] = nn.forward_scores(real, 1.0);
      CHECK(std::abs(p0 + p1 - 1.0) < 1e-9);
    }
  }

  SUBCASE("trains to high accuracy with margin on training data") {
    NeuralNet nn = NeuralNet::train(train, small, 3);
    CHECK(accuracy(nn, test) > 0.9);
    std::size_t confident = 0;
    for (const Sample& s : train.samples) {
      const Prediction p = nn.predict(s.vector);
      if (p.label == s.label && std::abs(p.score - 0.5) > 0.3) ++confident;
    }
    CHECK(static_cast<double>(confident) / train.size() > 0.8);
  }

  SUBCASE("input gradient matches central finite differences") {
    NeuralNet nn = NeuralNet::train(train, small, 3);
    const auto& x0 = train.samples[0].vector;
    std::vector<double> x(x0.bits().begin(), x0.bits().end());
    const auto grad = nn.input_gradient(x);
    const double h = 1e-4;
    double max_dev = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::vector<double> hi = x, lo = x;
      hi[i] += h;
      lo[i] -= h;
      const double fd = (nn.forward_scores(hi, 1.0).first -
                         nn.forward_scores(lo, 1.0).first) /
                        (2 * h);
      max_dev = std::max(max_dev, std::abs(fd - grad[i]));
    }
    CHECK(max_dev < 1e-3);
  }

  SUBCASE("zeroed output layer gives zero saliency") {
    NeuralNet nn = NeuralNet::train(train, small, 3);
    nn.zero_output_layer();
    const auto s = nn.saliency(train.samples[0].vector);
    for (double v : s) CHECK(v == 0.0);
  }

  SUBCASE("deterministic under seed") {
    NeuralNet a = NeuralNet::train(train, small, 9);
    NeuralNet b = NeuralNet::train(train, small, 9);
    for (const Sample& s : test.samples) {
      CHECK(a.predict(s.vector).score == b.predict(s.vector).score);
    }
  }

  SUBCASE("archive round trip") {
    NeuralNet nn = NeuralNet::train(train, small, 3);
    std::stringstream ss;
    nn.save(ss);
    std::string kind;
    ss >> kind;
    NeuralNet back = NeuralNet::load(ss);
    for (std::size_t i = 0; i < 20; ++i) {
      const auto& x = test.samples[i].vector;
      CHECK(back.predict(x).score == doctest::Approx(nn.predict(x).score)
                                         .epsilon(1e-15));
    }
  }
}

TEST_CASE("linear svm") {
  auto [train, test] = train_test(separable(), 8);

  SUBCASE("accuracy and saliency = -w") {
    LinearSvm svm = LinearSvm::train(train, {}, 4);
    CHECK(accuracy(svm, test) > 0.9);
    const auto s = svm.saliency(test.samples[0].vector);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(s[i] == -svm.weights()[i]);
    }
  }

  SUBCASE("prediction label matches the 0.5 threshold") {
    LinearSvm svm = LinearSvm::train(train, {}, 4);
    for (const Sample& s : test.samples) {
      const Prediction p = svm.predict(s.vector);
      CHECK(p.label == (p.score >= 0.5 ? 1 : 0));
    }
  }

  SUBCASE("bounded training clamps weights") {
    LinearHyper hyper;
    hyper.weight_bound = 0.05;
    LinearSvm svm = LinearSvm::train(train, hyper, 4);
    for (double w : svm.weights()) CHECK(std::abs(w) <= 0.05 + 1e-12);
  }

  SUBCASE("huge bound agrees with unbounded") {
    LinearHyper bounded;
    bounded.weight_bound = 1e6;
    LinearSvm a = LinearSvm::train(train, {}, 4);
    LinearSvm b = LinearSvm::train(train, bounded, 4);
    std::size_t agree = 0;
    for (const Sample& s : test.samples) {
      agree += a.predict(s.vector).label == b.predict(s.vector).label;
    }
    CHECK(static_cast<double>(agree) / test.size() >= 0.95);
  }

  SUBCASE("tiny bound is effectively constant") {
    LinearHyper hyper;
    hyper.weight_bound = 1e-30;
    LinearSvm svm = LinearSvm::train(train, hyper, 4);
    const int first = svm.predict(test.samples[0].vector).label;
    for (const Sample& s : test.samples) {
      CHECK(svm.predict(s.vector).label == first);
    }
  }
}

TEST_CASE("prediction scores stay in [0,1] (random inputs, all families)") {
  auto [train, test] = train_test(separable(16, 60, 2), 9);
  ModelHypers hypers;
  hypers.nn.hidden = {16, 8};
  hypers.nn.epochs = 8;
  hypers.forest.n_trees = 10;
  std::vector<CandidateModel> models;
  for (ModelFamily f : {ModelFamily::DT, ModelFamily::RF, ModelFamily::NN,
                        ModelFamily::LSVM}) {
    models.push_back(train_model(f, train, hypers, 21));
  }
  Rng rng(123);
  for (int n = 0; n < 200; ++n) {
    FeatureVector x(16);
    for (std::size_t i = 0; i < 16; ++i) x.set(i, rng.below(2));
    for (const auto& m : models) {
      const Prediction p = m.predict(x);
      CHECK(p.score >= 0.0);
      CHECK(p.score <= 1.0);
      CHECK(p.label == (p.score >= 0.5 ? 1 : 0));
    }
  }
  // all-zeros input is a valid query everywhere
  for (const auto& m : models) (void)m.predict(FeatureVector(16));
}

TEST_CASE("adversarial training") {
  auto [train, test] = train_test(separable(16, 80, 3), 10);
  ModelHypers hypers;
  hypers.nn.hidden = {16};
  hypers.nn.epochs = 5;

  SUBCASE("sizing rule: 5% of half of 2224 is 56") {
    CHECK(adversarial_count(0.05, 2224) == 56);
    CHECK(adversarial_count(0.25, 2224) == 278);
  }

  SUBCASE("insufficient pool names the required count") {
    std::vector<FeatureVector> pool(10, FeatureVector(16));
    try {
      adversarial_train(ModelFamily::DT, train, pool, 0.25, 2224, hypers, 1);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("278") != std::string::npos);
    }
  }

  SUBCASE("ratio 0 behaves as a vanilla retrain") {
    std::vector<FeatureVector> pool;
    CandidateModel at = adversarial_train(ModelFamily::DT, train, pool, 0.0,
                                          100, hypers, 77);
    CandidateModel vanilla = train_model(ModelFamily::DT, train, hypers, 77);
    for (const Sample& s : test.samples) {
      CHECK(at.predict(s.vector).score == vanilla.predict(s.vector).score);
    }
    CHECK(at.id == "DT-AT-0");
  }

  SUBCASE("reproducible under identical seed") {
    Rng rng(5);
    std::vector<FeatureVector> pool;
    for (int i = 0; i < 40; ++i) {
      FeatureVector v(16);
      for (std::size_t b = 0; b < 16; ++b) v.set(b, rng.below(2));
      pool.push_back(v);
    }
    CandidateModel a = adversarial_train(ModelFamily::NN, train, pool, 0.25,
                                         100, hypers, 13);
    CandidateModel b = adversarial_train(ModelFamily::NN, train, pool, 0.25,
                                         100, hypers, 13);
    for (const Sample& s : test.samples) {
      CHECK(a.predict(s.vector).score == b.predict(s.vector).score);
    }
    CHECK(a.id == "NN-AT-0.25");
  }
}

TEST_CASE("random feature nullification") {
  auto [train, test] = train_test(separable(16, 80, 4), 11);
  ModelHypers hypers;

  SUBCASE("rate 0 equals the base model") {
    CandidateModel rfn =
        nullify_features(ModelFamily::DT, train, 0.0, hypers, 31);
    CandidateModel base = train_model(ModelFamily::DT, train, hypers, 31);
    for (const Sample& s : test.samples) {
      CHECK(rfn.predict(s.vector).score == base.predict(s.vector).score);
    }
  }

  SUBCASE("rate 1 is constant") {
    CandidateModel rfn =
        nullify_features(ModelFamily::DT, train, 1.0, hypers, 31);
    const double first = rfn.predict(test.samples[0].vector).score;
    for (const Sample& s : test.samples) {
      CHECK(rfn.predict(s.vector).score == first);
    }
  }

  SUBCASE("rate 0.3 stays within 10 points of vanilla") {
    CandidateModel rfn =
        nullify_features(ModelFamily::DT, train, 0.3, hypers, 31);
    CandidateModel base = train_model(ModelFamily::DT, train, hypers, 31);
    CHECK(accuracy(*rfn.impl, test) > accuracy(*base.impl, test) - 0.10);
    CHECK(rfn.id == "DT-RFN");
  }
}

TEST_CASE("defensive distillation") {
  auto [train, test] = train_test(separable(16, 100, 5), 12);
  ModelHypers hypers;
  hypers.nn.hidden = {16, 8};
  hypers.nn.epochs = 15;

  CandidateModel dd = distill(train, 1.0, hypers, 17);
  CHECK(dd.id == "NN-DD");
  CandidateModel teacher = train_model(ModelFamily::NN, train, hypers,
                                       derive_seed(17, "teacher"));
  const double teacher_acc = accuracy(*teacher.impl, test);
  const double student_acc = accuracy(*dd.impl, test);
  CHECK(student_acc > teacher_acc - 0.05);

  // student outputs remain normalized
  const auto* student = dynamic_cast<const NeuralNet*>(dd.impl.get());
  REQUIRE(student != nullptr);
  const auto& x = test.samples[0].vector;
  std::vector<double> real(x.bits().begin(), x.bits().end());
  auto [p0, p1] = student->forward_scores(real, 1.0);
  CHECK(std::abs(p0 + p1 - 1.0) < 1e-9);
}

TEST_CASE("sec linear") {
  auto [train, test] = train_test(separable(16, 80, 6), 13);
  ModelHypers hypers;

  CandidateModel sec = train_sec_linear(train, 0.2, hypers, 19);
  CHECK(sec.id == "SECSVM");
  const auto* svm = dynamic_cast<const LinearSvm*>(sec.impl.get());
  REQUIRE(svm != nullptr);
  for (double w : svm->weights()) CHECK(std::abs(w) <= 0.2 + 1e-12);
}

TEST_CASE("model archive round trip via files") {
  const auto dir = test::scratch_dir("models_archive");
  auto [train, test] = train_test(separable(16, 60, 7), 14);
  ModelHypers hypers;
  hypers.nn.hidden = {8};
  hypers.nn.epochs = 5;
  hypers.forest.n_trees = 5;

  std::vector<CandidateModel> models;
  models.push_back(train_model(ModelFamily::DT, train, hypers, 1));
  models.push_back(train_model(ModelFamily::RF, train, hypers, 2));
  models.push_back(train_model(ModelFamily::NN, train, hypers, 3));
  models.push_back(train_model(ModelFamily::LSVM, train, hypers, 4));
  models.push_back(nullify_features(ModelFamily::NN, train, 0.4, hypers, 5));

  for (const CandidateModel& m : models) {
    const auto path = dir / (m.id + ".model");
    save_model(path, m);
    CandidateModel back = load_model(path);
    CHECK(back.id == m.id);
    CHECK(back.family == m.family);
    CHECK(back.phi == m.phi);
    for (const Sample& s : test.samples) {
      CHECK(back.predict(s.vector).score == m.predict(s.vector).score);
    }
  }
}
