#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stratdef/data.hpp"
#include "stratdef/error.hpp"
#include "stratdef/textio.hpp"
#include "support.hpp"

using namespace stratdef;
namespace fs = std::filesystem;

TEST_CASE("sparse-index format") {
  const auto dir = test::scratch_dir("data_sparse");

  SUBCASE("header line, indices, duplicate collapse") {
    write_text_file(dir / "a.txt", "#phi 4\n1 0 2\n0\n1 3 3\n");
    Dataset d = load_dataset(dir / "a.txt", DatasetFormat::SparseIndex);
    CHECK(d.phi == 4);
    CHECK(d.samples.size() == 3);
    CHECK(d.samples[0].vector == test::bits({1, 0, 1, 0}));
    CHECK(d.samples[0].label == 1);
    CHECK(d.samples[1].vector == test::bits({0, 0, 0, 0}));
    CHECK(d.samples[1].label == 0);
    CHECK(d.samples[2].vector == test::bits({0, 0, 0, 1}));
  }

  SUBCASE("index == phi is out of bounds") {
    write_text_file(dir / "b.txt", "#phi 58975\n1 58975\n");
    CHECK_THROWS_AS(load_dataset(dir / "b.txt", DatasetFormat::SparseIndex),
                    BoundsError);
  }

  SUBCASE("malformed line reports its number") {
    write_text_file(dir / "c.txt", "#phi 4\n1 0\nx 1\n");
    try {
      load_dataset(dir / "c.txt", DatasetFormat::SparseIndex);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
  }

  SUBCASE("missing header") {
    write_text_file(dir / "d.txt", "1 0 2\n");
    CHECK_THROWS_AS(load_dataset(dir / "d.txt", DatasetFormat::SparseIndex),
                    ParseError);
  }

  SUBCASE("round trip is identical") {
    Dataset d = synth_dataset(16, 25, 0.5, 99);
    write_dataset(dir / "rt.txt", d, DatasetFormat::SparseIndex);
    Dataset back = load_dataset(dir / "rt.txt", DatasetFormat::SparseIndex);
    REQUIRE(back.samples.size() == d.samples.size());
    CHECK(back.phi == d.phi);
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
      CHECK(back.samples[i].vector == d.samples[i].vector);
      CHECK(back.samples[i].label == d.samples[i].label);
      CHECK(back.samples[i].id == d.samples[i].id);
    }
  }
}

TEST_CASE("dense csv format") {
  const auto dir = test::scratch_dir("data_csv");
  write_text_file(dir / "a.csv", "1,1,0,1\n0,0,0,0\n");
  Dataset d = load_dataset(dir / "a.csv", DatasetFormat::DenseCsv);
  CHECK(d.phi == 3);
  CHECK(d.samples.size() == 2);
  CHECK(d.samples[0].vector == test::bits({1, 0, 1}));

  write_dataset(dir / "b.csv", d, DatasetFormat::DenseCsv);
  Dataset back = load_dataset(dir / "b.csv", DatasetFormat::DenseCsv);
  CHECK(back.samples[1].vector == d.samples[1].vector);
}

TEST_CASE("balance_and_split") {
  SUBCASE("100 benign + 60 malware -> 120 at 76/20/24") {
    Dataset d;
    d.phi = 8;
    for (int i = 0; i < 100; ++i) {
      d.samples.push_back({FeatureVector(8), kBenign, "b" + std::to_string(i)});
    }
    for (int i = 0; i < 60; ++i) {
      d.samples.push_back(
          {FeatureVector(8), kMalware, "m" + std::to_string(i)});
    }
    auto [balanced, spec] = balance_and_split(d, 7);
    CHECK(balanced.size() == 120);
    CHECK(balanced.count_label(kBenign) == 60);
    CHECK(balanced.count_label(kMalware) == 60);
    // arithmetic oracle: 120*0.64 = 76.8, 120*0.16 = 19.2, 120*0.20 = 24
    CHECK(std::llabs(static_cast<long long>(spec.train.size()) - 76) <= 1);
    CHECK(std::llabs(static_cast<long long>(spec.validation.size()) - 20) <= 1);
    CHECK(std::llabs(static_cast<long long>(spec.test.size()) - 24) <= 1);
    CHECK(spec.train.size() + spec.validation.size() + spec.test.size() ==
          120);

    // stratification within one sample
    for (const auto* part : {&spec.train, &spec.validation, &spec.test}) {
      long long mal = 0;
      for (std::size_t i : *part) mal += balanced.samples[i].label == kMalware;
      const long long ben = static_cast<long long>(part->size()) - mal;
      CHECK(std::llabs(mal - ben) <= 1);
    }

    // the three parts partition the index range
    std::vector<std::size_t> all;
    for (const auto* part : {&spec.train, &spec.validation, &spec.test}) {
      all.insert(all.end(), part->begin(), part->end());
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  }

  SUBCASE("already balanced keeps everything") {
    Dataset d = synth_dataset(8, 100, 0.5, 3);
    auto [balanced, spec] = balance_and_split(d, 1);
    CHECK(balanced.size() == d.size());
  }

  SUBCASE("deterministic under fixed seed") {
    Dataset d = synth_dataset(8, 40, 0.5, 3);
    d.samples.resize(60);  // 40 benign + 20 malware
    auto [b1, s1] = balance_and_split(d, 42);
    auto [b2, s2] = balance_and_split(d, 42);
    CHECK(s1.train == s2.train);
    CHECK(s1.validation == s2.validation);
    CHECK(s1.test == s2.test);
    REQUIRE(b1.size() == b2.size());
    for (std::size_t i = 0; i < b1.size(); ++i) {
      CHECK(b1.samples[i].id == b2.samples[i].id);
    }
  }

  SUBCASE("empty class is a configuration error") {
    Dataset d;
    d.phi = 8;
    for (int i = 0; i < 20; ++i) {
      d.samples.push_back({FeatureVector(8), kBenign, std::to_string(i)});
    }
    CHECK_THROWS_AS(balance_and_split(d, 1), ConfigError);
  }
}

TEST_CASE("synth_dataset") {
  SUBCASE("deterministic") {
    Dataset a = synth_dataset(32, 50, 0.7, 5);
    Dataset b = synth_dataset(32, 50, 0.7, 5);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.samples[i].vector == b.samples[i].vector);
    }
  }

  SUBCASE("separation 0 gives no signal") {
    Dataset d = synth_dataset(32, 120, 0.0, 11);
    // feature frequencies should match across classes
    for (std::size_t f = 0; f < 4; ++f) {
      double on[2] = {0, 0};
      double n[2] = {0, 0};
      for (const auto& s : d.samples) {
        on[s.label] += s.vector[f];
        n[s.label] += 1;
      }
      CHECK(std::abs(on[0] / n[0] - on[1] / n[1]) < 0.25);
    }
  }

  SUBCASE("preconditions") {
    CHECK_THROWS_AS(synth_dataset(4, 100, 0.5, 1), ConfigError);
    CHECK_THROWS_AS(synth_dataset(32, 5, 0.5, 1), ConfigError);
  }
}

TEST_CASE("perturbation policy") {
  SUBCASE("table-2 family permissions") {
    std::vector<std::string> fam = {"S1", "S2", "S3", "S4",
                                    "S5", "S6", "S7", "S8"};
    PerturbationPolicy p = PerturbationPolicy::from_families(fam);
    // add-only: S1 S2 S4
    for (std::size_t i : {0u, 1u, 3u}) {
      CHECK(p.may_add[i] == 1);
      CHECK(p.may_remove[i] == 0);
    }
    // add+remove: S3 S5 S7 S8
    for (std::size_t i : {2u, 4u, 6u, 7u}) {
      CHECK(p.may_add[i] == 1);
      CHECK(p.may_remove[i] == 1);
    }
    // S6 frozen
    CHECK(p.may_add[5] == 0);
    CHECK(p.may_remove[5] == 0);
  }

  SUBCASE("apply_policy reverts prohibited flips") {
    std::vector<std::string> fam = {"S2", "S2", "S3", "S3"};
    PerturbationPolicy p = PerturbationPolicy::from_families(fam);
    // add-only feature removed -> restored
    auto out = apply_policy(p, test::bits({1, 0, 0, 1}),
                            test::bits({0, 1, 1, 0}));
    CHECK(out == test::bits({1, 1, 1, 0}));
  }

  SUBCASE("identity and fully permissive") {
    auto x = test::bits({1, 0, 1, 0});
    auto y = test::bits({0, 1, 1, 1});
    CHECK(apply_policy(PerturbationPolicy::deny_all(4), x, x) == x);
    CHECK(apply_policy(PerturbationPolicy::allow_all(4), x, y) == y);
  }

  SUBCASE("idempotent and flips always permitted (exhaustive phi=4)") {
    std::vector<std::string> fam = {"S1", "S3", "S6", "S8"};
    PerturbationPolicy p = PerturbationPolicy::from_families(fam);
    for (int ov = 0; ov < 16; ++ov) {
      for (int pv = 0; pv < 16; ++pv) {
        FeatureVector orig(4), pert(4);
        for (int b = 0; b < 4; ++b) {
          orig.set(b, (ov >> b) & 1);
          pert.set(b, (pv >> b) & 1);
        }
        FeatureVector once = apply_policy(p, orig, pert);
        CHECK(apply_policy(p, orig, once) == once);
        for (std::size_t i = 0; i < 4; ++i) {
          if (once[i] == orig[i]) continue;
          const bool adding = orig[i] == 0;
          CHECK((adding ? p.may_add[i] : p.may_remove[i]) == 1);
        }
      }
    }
  }

  SUBCASE("length mismatch is a contract error") {
    CHECK_THROWS_AS(apply_policy(PerturbationPolicy::allow_all(3),
                                 test::bits({1, 0}), test::bits({0, 1})),
                    ContractError);
  }
}

TEST_CASE("policy file round trip") {
  const auto dir = test::scratch_dir("data_policy");
  std::vector<std::string> fam(12);
  for (std::size_t i = 0; i < 12; ++i) fam[i] = "S" + std::to_string(1 + i % 8);
  PerturbationPolicy p = PerturbationPolicy::from_families(fam);
  write_policy(dir / "p.txt", p, fam);
  PerturbationPolicy q = load_policy(dir / "p.txt", 12);
  CHECK(p.may_add == q.may_add);
  CHECK(p.may_remove == q.may_remove);

  SUBCASE("overlapping families rejected") {
    write_text_file(dir / "bad.txt",
                    "family=A features=0-3 add=1 remove=0\n"
                    "family=B features=2-5 add=0 remove=1\n");
    CHECK_THROWS_AS(load_policy(dir / "bad.txt", 8), ParseError);
  }
}
