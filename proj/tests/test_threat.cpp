#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "stratdef/error.hpp"
#include "stratdef/eval.hpp"
#include "stratdef/threat.hpp"
#include "support.hpp"

using namespace stratdef;

namespace {

// model that calls anything with bit 0 set malware
CandidateModel bit0_model() {
  CandidateModel m;
  m.id = "BIT0";
  m.family = ModelFamily::LSVM;
  m.phi = 4;
  m.impl = std::make_shared<test::FixedLinear>(
      std::vector<double>{10.0, 0.0, 0.0, 0.0}, -5.0);
  return m;
}

AdversarialSet synthetic_set(AttackTag tag, const std::string& substitute,
                             std::size_t n, std::size_t n_evading) {
  // evading examples have bit 0 clear, caught ones have it set
  AdversarialSet set;
  set.attack = tag;
  set.substitute = substitute;
  for (std::size_t i = 0; i < n; ++i) {
    AdversarialExample ex;
    ex.original_id = substitute + "_o" + std::to_string(i);
    ex.vector = FeatureVector(4);
    ex.vector.set(0, i >= n_evading);
    ex.vector.set(1, (i >> 0) & 1);
    ex.vector.set(2, (i >> 1) & 1);
    ex.vector.set(3, (i >> 2) & 1);
    ex.attack = tag;
    ex.substitute = substitute;
    set.examples.push_back(std::move(ex));
  }
  return set;
}

}  // namespace

TEST_CASE("normalized evasion rate") {
  CandidateModel target = bit0_model();

  SUBCASE("arithmetic oracle: 50 examples, 40 evade, pool 100 -> 40") {
    AdversarialSet set = synthetic_set(AttackTag::Saliency, "S", 50, 40);
    const auto r = normalized_evasion_rate(set, target, 100);
    CHECK(r.value == doctest::Approx(40.0).epsilon(1e-12));
    CHECK(r.target == "BIT0");
  }

  SUBCASE("empty set scores zero") {
    AdversarialSet set = synthetic_set(AttackTag::Saliency, "S", 0, 0);
    CHECK(normalized_evasion_rate(set, target, 100).value == 0.0);
  }

  SUBCASE("full pool, full evasion scores 100") {
    AdversarialSet set = synthetic_set(AttackTag::Saliency, "S", 100, 100);
    CHECK(normalized_evasion_rate(set, target, 100).value ==
          doctest::Approx(100.0));
  }

  SUBCASE("monotone in set size and evasion fraction") {
    double prev = -1.0;
    for (std::size_t evade : {10u, 20u, 40u}) {
      AdversarialSet set = synthetic_set(AttackTag::Saliency, "S", 50, evade);
      const double v = normalized_evasion_rate(set, target, 100).value;
      CHECK(v >= prev);
      prev = v;
    }
    prev = -1.0;
    for (std::size_t n : {10u, 30u, 60u}) {
      AdversarialSet set = synthetic_set(AttackTag::Saliency, "S", n, n);
      const double v = normalized_evasion_rate(set, target, 100).value;
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("attacker profile assignment") {
  AdversarialSet hot = synthetic_set(AttackTag::Saliency, "SUB-NN", 20, 20);
  AdversarialSet cold = synthetic_set(AttackTag::TreePath, "SUB-DT", 10, 10);
  RateTable rates;
  // hot: own-substitute rate 30, best transfer rate 90
  rates.put({AttackTag::Saliency, "SUB-NN", "SUB-NN", 30.0});
  rates.put({AttackTag::Saliency, "SUB-NN", "F1", 90.0});
  rates.put({AttackTag::Saliency, "SUB-NN", "F2", 85.0});
  // cold: own rate 60, best transfer 60
  rates.put({AttackTag::TreePath, "SUB-DT", "SUB-DT", 60.0});
  rates.put({AttackTag::TreePath, "SUB-DT", "F1", 55.0});
  rates.put({AttackTag::TreePath, "SUB-DT", "F2", 60.0});

  const std::vector<std::string> targets = {"F1", "F2"};
  auto pools =
      assign_sets(standard_profiles(), {hot, cold}, targets, rates, {});

  SUBCASE("strong takes only the high-transfer set") {
    const auto& strong = pools.at("strong");
    REQUIRE(strong.qualified.size() == 1);
    CHECK(strong.qualified[0].second == "SUB-NN");
    CHECK(strong.entries.size() == 20);
  }

  SUBCASE("weak ignores transferability and takes the low own-rate set") {
    // hot's own rate is 30 <= 40, so weak takes it despite transfer 90
    const auto& weak = pools.at("weak");
    REQUIRE(weak.qualified.size() == 1);
    CHECK(weak.qualified[0].second == "SUB-NN");
  }

  SUBCASE("medium covers the 40..80 band only") {
    const auto& medium = pools.at("medium");
    REQUIRE(medium.qualified.size() == 1);
    CHECK(medium.qualified[0].second == "SUB-DT");
  }

  SUBCASE("random takes everything") {
    CHECK(pools.at("random").qualified.size() == 2);
    CHECK(pools.at("random").entries.size() == 30);
  }

  SUBCASE("boundary rates belong to both adjacent profiles") {
    RateTable boundary;
    boundary.put({AttackTag::Saliency, "SUB-NN", "SUB-NN", 40.0});
    boundary.put({AttackTag::Saliency, "SUB-NN", "F1", 40.0});
    boundary.put({AttackTag::Saliency, "SUB-NN", "F2", 40.0});
    auto p = assign_sets(standard_profiles(), {hot}, targets, boundary, {});
    CHECK(p.at("weak").qualified.size() == 1);
    CHECK(p.at("medium").qualified.size() == 1);
    CHECK(p.at("strong").qualified.empty());
  }

  SUBCASE("universal receives exactly the UAP examples") {
    UAPRecord rec;
    rec.reuse_count = 2;
    rec.example_ids = {hot.name() + "/" + hot.examples[0].original_id,
                       hot.name() + "/" + hot.examples[1].original_id};
    auto p =
        assign_sets(standard_profiles(), {hot, cold}, targets, rates, {rec});
    const auto& universal = p.at("universal");
    CHECK(universal.entries.size() == 2);
    for (const PoolEntry& e : universal.entries) {
      const bool in_uap =
          std::find(rec.example_ids.begin(), rec.example_ids.end(),
                    e.source_set + "/" + e.original_id) !=
          rec.example_ids.end();
      CHECK(in_uap);
    }
  }
}

TEST_CASE("alpha dataset composition") {
  Dataset clean = synth_dataset(8, 40, 0.5, 4);  // 40 benign + 40 malware

  AttackerPool pool;
  pool.gamma = "strong";
  Rng rng(9);
  for (int i = 0; i < 300; ++i) {
    PoolEntry e;
    e.vector = FeatureVector(8);
    for (std::size_t b = 0; b < 8; ++b) e.vector.set(b, rng.below(2));
    e.original_id = "o" + std::to_string(i);
    e.source_set = i % 2 ? "A" : "B";
    e.source_rate = i % 2 ? 90.0 : 10.0;
    pool.entries.push_back(std::move(e));
  }

  SUBCASE("exact counting at alpha=0.1 with total 1000") {
    auto ds = build_alpha_datasets(pool, PoolingRule::Random, clean, {0.1},
                                   1000, 7);
    REQUIRE(ds.size() == 1);
    std::size_t adv = 0, ben = 0, mal = 0;
    for (const AlphaEntry& e : ds[0].entries) {
      if (e.is_adversarial) {
        ++adv;
        CHECK(e.true_label == kMalware);
      } else {
        (e.true_label == kBenign ? ben : mal)++;
      }
    }
    CHECK(adv == 100);
    CHECK(ben == 450);
    CHECK(mal == 450);
    CHECK(ds[0].drew_with_replacement);
  }

  SUBCASE("alpha grid composition invariants (exact audit)") {
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
    auto ds =
        build_alpha_datasets(pool, PoolingRule::Random, clean, grid, 80, 11);
    REQUIRE(ds.size() == 11);
    for (const AlphaDataset& a : ds) {
      long long adv = 0, ben = 0, mal = 0;
      for (const AlphaEntry& e : a.entries) {
        if (e.is_adversarial) ++adv;
        else if (e.true_label == kBenign) ++ben;
        else ++mal;
      }
      CHECK(a.entries.size() == 80);
      CHECK(std::llabs(adv - std::llround(a.alpha * 80)) <= 1);
      CHECK(std::llabs(ben - mal) <= 1);
    }
    CHECK(ds.front().alpha == 0.0);
    for (const AlphaEntry& e : ds.front().entries) CHECK(!e.is_adversarial);
    for (const AlphaEntry& e : ds.back().entries) CHECK(e.is_adversarial);
  }

  SUBCASE("weighted pooling draws roughly 9:1") {
    // rates 90 vs 10 -> expected draw ratio 9:1; chi-squared over many draws
    double from_a = 0, from_b = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto ds = build_alpha_datasets(pool, PoolingRule::Weighted, clean, {0.5},
                                     60, seed);
      for (const AlphaEntry& e : ds[0].entries) {
        if (!e.is_adversarial) continue;
        (e.source.rfind("A/", 0) == 0 ? from_a : from_b) += 1;
      }
    }
    const double total = from_a + from_b;
    const double expect_a = total * 0.9, expect_b = total * 0.1;
    const double chi2 = (from_a - expect_a) * (from_a - expect_a) / expect_a +
                        (from_b - expect_b) * (from_b - expect_b) / expect_b;
    CHECK(chi_squared_pvalue(chi2, 1) > 0.01);
  }

  SUBCASE("empty pool with positive alpha is a configuration error") {
    AttackerPool empty;
    empty.gamma = "weak";
    CHECK_THROWS_AS(
        build_alpha_datasets(empty, PoolingRule::Random, clean, {0.5}, 40, 1),
        ConfigError);
    // alpha = 0 needs no pool
    auto ds =
        build_alpha_datasets(empty, PoolingRule::Random, clean, {0.0}, 40, 1);
    CHECK(ds.size() == 1);
  }

  SUBCASE("deterministic under seed") {
    auto a = build_alpha_datasets(pool, PoolingRule::Weighted, clean,
                                  {0.3, 0.7}, 60, 5);
    auto b = build_alpha_datasets(pool, PoolingRule::Weighted, clean,
                                  {0.3, 0.7}, 60, 5);
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].entries.size() == b[i].entries.size());
      for (std::size_t k = 0; k < a[i].entries.size(); ++k) {
        CHECK(a[i].entries[k].source == b[i].entries[k].source);
        CHECK(a[i].entries[k].vector == b[i].entries[k].vector);
      }
    }
  }
}
