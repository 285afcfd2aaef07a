#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "relrank/kg.hpp"

using namespace relrank;

namespace {

Vocabulary make_vocab(std::size_t ne, std::size_t nr) {
  std::vector<std::string> e, r;
  for (std::size_t i = 0; i < ne; ++i) e.push_back("e" + std::to_string(i));
  for (std::size_t i = 0; i < nr; ++i) r.push_back("r" + std::to_string(i));
  return Vocabulary(e, r);
}

GroundTruthTuple tuple(const std::string& image, EntityId s, RelationId p, EntityId o) {
  return {image, s, p, o, Box{0, 0, 10, 10}, Box{5, 5, 20, 20}};
}

std::map<Triple, std::int64_t> counts_with(std::size_t n) {
  std::map<Triple, std::int64_t> c;
  for (std::size_t i = 0; i < n; ++i) {
    c[{static_cast<EntityId>(i % 10), static_cast<RelationId>(i / 10 % 3),
       static_cast<EntityId>(i / 30)}] = static_cast<std::int64_t>(i % 4 + 1);
  }
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("relrank_test_kg_" + name);
}

}  // namespace

TEST_CASE("vocabulary ids are dense and labels unique") {
  const auto v = make_vocab(3, 2);
  CHECK(v.num_entities() == 3);
  CHECK(*v.find_entity("e2") == 2);
  CHECK(v.entity_label(1) == "e1");
  CHECK_FALSE(v.find_relation("nope").has_value());
  CHECK_THROWS_AS(Vocabulary({"a", "a"}, {"r"}), ValidationError);
  CHECK(make_vocab(3, 2).digest() == v.digest());
  CHECK(make_vocab(3, 3).digest() != v.digest());
}

TEST_CASE("vocabulary files: line number is id, missing file names the path") {
  const auto ep = temp_path("entities.txt");
  const auto rp = temp_path("relations.txt");
  make_vocab(4, 2).save(ep, rp);
  const auto v = Vocabulary::load(ep, rp);
  CHECK(v.entities() == std::vector<std::string>{"e0", "e1", "e2", "e3"});
  try {
    Vocabulary::load(temp_path("missing.txt"), rp);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("missing.txt") != std::string::npos);
  }
}

TEST_CASE("aggregate_counts examples") {
  const auto vocab = make_vocab(100, 3);
  SUBCASE("two images with the same triple") {
    std::vector<GroundTruthTuple> t = {tuple("a", 0, 1, 2), tuple("b", 0, 1, 2)};
    const auto table = aggregate_counts(t, vocab);
    CHECK(table.count({0, 1, 2}) == 2);
    CHECK(table.total_samples() == 2);
  }
  SUBCASE("empty input gives uniform marginals") {
    const auto table = aggregate_counts({}, vocab);
    CHECK(table.num_nonzero() == 0);
    for (double m : table.subject_marginal()) CHECK(m == doctest::Approx(0.01));
    for (double m : table.predicate_marginal()) CHECK(m == doctest::Approx(1.0 / 3));
  }
  SUBCASE("Laplace subject marginal") {
    std::vector<GroundTruthTuple> t = {tuple("a", 0, 0, 5), tuple("a", 0, 1, 6),
                                       tuple("b", 0, 2, 7), tuple("b", 1, 0, 5)};
    const auto table = aggregate_counts(t, vocab);
    // (3 + 1) / (4 + 100)
    CHECK(table.subject_marginal()[0] == doctest::Approx(4.0 / 104.0).epsilon(1e-12));
    CHECK(table.subject_marginal()[0] == doctest::Approx(0.03846).epsilon(1e-4));
    CHECK(table.object_marginal()[5] == doctest::Approx(3.0 / 104.0).epsilon(1e-12));
  }
  SUBCASE("unknown id names the tuple index") {
    std::vector<GroundTruthTuple> t = {tuple("a", 0, 0, 0), tuple("a", 0, 7, 0)};
    try {
      aggregate_counts(t, vocab);
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("tuple 1") != std::string::npos);
    }
  }
}

TEST_CASE("aggregate_counts is permutation invariant and marginals sum to one") {
  const auto vocab = make_vocab(7, 3);
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> e(0, 6), r(0, 2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GroundTruthTuple> t;
    const int n = trial * 3;
    for (int i = 0; i < n; ++i) {
      t.push_back(tuple("img" + std::to_string(i % 4), e(rng), r(rng), e(rng)));
    }
    const auto table = aggregate_counts(t, vocab);
    std::shuffle(t.begin(), t.end(), rng);
    const auto shuffled = aggregate_counts(t, vocab);
    CHECK(table.counts() == shuffled.counts());
    std::int64_t sum = 0;
    for (const auto& [k, c] : table.counts()) {
      CHECK(c >= 1);
      sum += c;
    }
    CHECK(sum == n);
    for (auto m : {table.subject_marginal(), table.predicate_marginal(), table.object_marginal()}) {
      double total = 0;
      for (double v : m) total += v;
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("make_split sizes follow max(1, round(fraction * n))") {
  // Enumeration oracle for the rounding rule.
  for (std::size_t n : {1u, 2u, 9u, 10u, 11u, 29u, 30u, 31u, 100u, 250u}) {
    const TripleCountTable table(10, 3, counts_with(n));
    const auto split = make_split(table, 0.05, 42);
    std::size_t expected = 0;
    double best = 1e300;
    for (std::size_t h = 0; h <= n; ++h) {
      const double dist = std::abs(double(h) - 0.05 * double(n));
      if (dist < best - 1e-12) {
        best = dist;
        expected = h;
      } else if (std::abs(dist - best) <= 1e-12) {
        expected = h;  // halves round up
      }
    }
    expected = std::max<std::size_t>(1, expected);
    CHECK(split.heldout.size() == expected);
    CHECK(split.heldout.size() + split.train_counts.num_nonzero() == n);
    for (const auto& h : split.heldout) {
      CHECK(split.train_counts.count(h.triple) == 0);
      CHECK(h.count == table.count(h.triple));
    }
  }
  const TripleCountTable hundred(10, 3, counts_with(100));
  CHECK(make_split(hundred, 0.05, 1).heldout.size() == 5);
  CHECK(make_split(TripleCountTable(10, 3, counts_with(10)), 0.05, 1).heldout.size() == 1);
}

TEST_CASE("make_split is deterministic and recomputes marginals") {
  const TripleCountTable table(10, 3, counts_with(80));
  const auto a = make_split(table, 0.2, 9);
  const auto b = make_split(table, 0.2, 9);
  CHECK(a.heldout == b.heldout);
  CHECK(a.train_counts.counts() == b.train_counts.counts());
  const auto c = make_split(table, 0.2, 10);
  CHECK_FALSE(a.heldout == c.heldout);
  double total = 0;
  for (double v : a.train_counts.subject_marginal()) total += v;
  CHECK(std::abs(total - 1.0) < 1e-9);
  std::int64_t held = 0;
  for (const auto& h : a.heldout) held += h.count;
  CHECK(a.train_counts.total_samples() + held == table.total_samples());
}

TEST_CASE("make_split errors") {
  CHECK_THROWS_AS(make_split(TripleCountTable(3, 1, {}), 0.05, 0), ValidationError);
  const TripleCountTable table(10, 3, counts_with(10));
  CHECK_THROWS_AS(make_split(table, 0.0, 0), ValidationError);
  CHECK_THROWS_AS(make_split(table, 1.0, 0), ValidationError);
}

TEST_CASE("zero_shot_filter keeps unseen triples in order") {
  const auto vocab = make_vocab(5, 2);
  std::vector<GroundTruthTuple> train = {tuple("t", 0, 0, 1), tuple("t", 0, 0, 1),
                                         tuple("t", 0, 0, 1), tuple("t", 2, 1, 3)};
  const auto table = aggregate_counts(train, vocab);
  std::vector<GroundTruthTuple> test = {tuple("a", 0, 0, 1), tuple("a", 4, 1, 4),
                                        tuple("b", 2, 1, 3), tuple("b", 1, 0, 0),
                                        tuple("c", 0, 0, 1)};
  const auto unseen = zero_shot_filter(test, table);
  // Brute-force membership check.
  std::vector<GroundTruthTuple> expected;
  for (const auto& t : test) {
    bool seen = false;
    for (const auto& tr : train) seen |= tr.triple() == t.triple();
    if (!seen) expected.push_back(t);
  }
  REQUIRE(unseen.size() == 2);
  REQUIRE(expected.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(unseen[i].triple() == expected[i].triple());
  CHECK(unseen[0].image_id == "a");
  CHECK(unseen[1].image_id == "b");

  // Partition: unseen plus seen reconstructs the input.
  std::size_t seen_count = 0;
  for (const auto& t : test) seen_count += table.count(t.triple()) > 0;
  CHECK(seen_count + unseen.size() == test.size());
}

TEST_CASE("annotation files round trip and reject bad rows") {
  const auto vocab = make_vocab(3, 2);
  const auto path = temp_path("ann.jsonl");
  std::vector<GroundTruthTuple> t = {tuple("x", 0, 1, 2), tuple("y", 2, 0, 1)};
  save_annotations(path, t, vocab);
  const auto loaded = load_annotations(path, vocab);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1].image_id == "y");
  CHECK(loaded[1].triple() == Triple{2, 0, 1});
  CHECK(loaded[0].object_box == Box{5, 5, 20, 20});

  {
    std::ofstream out(path);
    out << R"({"image_id":"a","subject":"e0","predicate":"r0","object":"e1",)"
        << R"("subject_box":[0,0,5,5],"object_box":[5,5,4,9]})" << '\n';
  }
  CHECK_THROWS_AS(load_annotations(path, vocab), ValidationError);
  {
    std::ofstream out(path);
    out << R"({"image_id":"a","subject":"zebra","predicate":"r0","object":"e1",)"
        << R"("subject_box":[0,0,5,5],"object_box":[5,5,8,9]})" << '\n';
  }
  CHECK_THROWS_AS(load_annotations(path, vocab), ValidationError);
}
