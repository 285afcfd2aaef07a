#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "relrank/ranking.hpp"

using namespace relrank;

namespace {

DetectionSet random_detections(std::mt19937_64& rng, std::size_t regions, std::size_t ne,
                               std::size_t nr, bool coarse) {
  // Coarse scores take few distinct values, which forces score ties.
  std::uniform_real_distribution<double> u(1e-6, 1.0);
  std::uniform_int_distribution<int> level(1, 3);
  const auto draw = [&] { return coarse ? 0.25 * level(rng) : u(rng); };
  DetectionSet det;
  det.image_id = "rand";
  for (std::size_t r = 0; r < regions; ++r) {
    Region region{Box{double(r), double(r), double(r) + 5, double(r) + 7}, {}};
    for (std::size_t e = 0; e < ne; ++e) region.entity_scores.push_back(draw());
    det.regions.push_back(region);
  }
  for (std::uint32_t i = 0; i < regions; ++i)
    for (std::uint32_t j = 0; j < regions; ++j) {
      if (i == j) continue;
      PairScores p{i, j, {}};
      for (std::size_t k = 0; k < nr; ++k) p.predicate_scores.push_back(draw());
      det.pairs.push_back(p);
    }
  return det;
}

SemanticModel random_model(std::mt19937_64& rng, std::size_t ne, std::size_t nr) {
  return init_model(ModelKind::kDistMult, ne, nr, 3, 0, rng());
}

// Exhaustive enumeration with an independent full sort.
std::vector<RankedPrediction> oracle(const SemanticPrior* prior, const SlotMarginals& m,
                                     const DetectionSet& det, std::size_t k) {
  std::vector<RankedPrediction> all;
  const auto ne = det.regions[0].entity_scores.size();
  const auto nr = det.pairs[0].predicate_scores.size();
  for (const auto& pair : det.pairs)
    for (EntityId s = 0; s < ne; ++s)
      for (RelationId p = 0; p < nr; ++p)
        for (EntityId o = 0; o < ne; ++o) {
          const double score = prior ? log_joint_score(*prior, m, det, pair, s, p, o)
                                     : visual_only_score(det, pair, s, p, o);
          all.push_back({pair.subject_region, pair.object_region, s, p, o, score});
        }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.log_score != b.log_score) return a.log_score > b.log_score;
    return std::make_tuple(a.subject_region, a.object_region, a.s, a.p, a.o) <
           std::make_tuple(b.subject_region, b.object_region, b.s, b.p, b.o);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

}  // namespace

TEST_CASE("log_joint_score examples") {
  SUBCASE("all logs vanish") {
    const DetectionSet det{"x", {Region{Box{0, 0, 1, 1}, {1.0}}, Region{Box{1, 1, 2, 2}, {1.0}}},
                           {PairScores{0, 1, {1.0}}}};
    const auto prior = SemanticPrior::constant(1, 1, 0.0);
    const auto m = SlotMarginals::uniform(1, 1);
    CHECK(log_joint_score(prior, m, det, det.pairs[0], 0, 0, 0) == 0.0);
    CHECK(visual_only_score(det, det.pairs[0], 0, 0, 0) == 0.0);
  }
  SUBCASE("hand log arithmetic") {
    const DetectionSet det{"x", {Region{Box{0, 0, 1, 1}, {0.5}}, Region{Box{1, 1, 2, 2}, {0.5}}},
                           {PairScores{0, 1, {0.5}}}};
    const auto prior = SemanticPrior::constant(1, 1, std::log(2.0));
    const SlotMarginals m{{0.25}, {0.5}, {0.25}};
    const double expected = std::log(2.0) + 3 * std::log(0.5) -
                            (std::log(0.25) + std::log(0.5) + std::log(0.25));
    CHECK(log_joint_score(prior, m, det, det.pairs[0], 0, 0, 0) ==
          doctest::Approx(expected).epsilon(1e-15));
    CHECK(expected == doctest::Approx(2.0794).epsilon(1e-4));
    CHECK(visual_only_score(det, det.pairs[0], 0, 0, 0) ==
          doctest::Approx(-2.0794).epsilon(1e-4));
  }
  SUBCASE("zero score is a named numeric error") {
    const DetectionSet det{"x", {Region{Box{0, 0, 1, 1}, {0.0}}, Region{Box{1, 1, 2, 2}, {1.0}}},
                           {PairScores{0, 1, {1.0}}}};
    try {
      visual_only_score(det, det.pairs[0], 0, 0, 0);
      FAIL("expected an error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("CNN_e(s|i_s)") != std::string::npos);
    }
  }
}

TEST_CASE("exp(log_joint_score) equals the product form") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(1e-6, 1.0), th(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double es = u(rng), rp = u(rng), eo = u(rng), ms = u(rng), mp = u(rng), mo = u(rng);
    const double theta = th(rng);
    const DetectionSet det{"x", {Region{Box{0, 0, 1, 1}, {es}}, Region{Box{1, 1, 2, 2}, {eo}}},
                           {PairScores{0, 1, {rp}}}};
    const auto prior = SemanticPrior::constant(1, 1, theta);
    const SlotMarginals m{{ms}, {mp}, {mo}};
    const double direct = std::exp(theta) * es * rp * eo / (ms * mp * mo);
    const double fused = std::exp(log_joint_score(prior, m, det, det.pairs[0], 0, 0, 0));
    CHECK(std::abs(fused - direct) / direct < 1e-9);
  }
}

TEST_CASE("priors") {
  const TripleCountTable counts(2, 1, {{{0, 0, 1}, 4}});
  const auto cp = SemanticPrior::from_counts(counts);
  CHECK(cp.log_prior(0, 0, 1) == doctest::Approx(std::log(5.0)));
  CHECK(cp.log_prior(1, 0, 0) == 0.0);
  auto model = init_model(ModelKind::kComplEx, 3, 2, 2, 0, 3);
  const auto mp = SemanticPrior::from_model(model, 0.5);
  CHECK(mp.log_prior(2, 1, 0) == doctest::Approx(0.5 * score(model, 2, 1, 0)));
  CHECK(mp.source() == SemanticPrior::Source::kModel);
}

TEST_CASE("rank_image top-1 recovers the one-hot ground truth") {
  const std::vector<GroundTruthTuple> gt = {{"i", 2, 1, 0, Box{0, 0, 10, 10}, Box{20, 20, 30, 30}}};
  const Vocabulary vocab({"a", "b", "c"}, {"x", "y"});
  const auto det = synthesize_detections(gt, vocab, 0.0, 1)[0];
  const auto prior = SemanticPrior::constant(3, 2);
  const auto m = SlotMarginals::uniform(3, 2);
  const auto ranked = rank_image(prior, m, det, {1, 0, false});
  REQUIRE(ranked.size() == 1);
  CHECK(ranked[0].subject_region == 0);
  CHECK(ranked[0].object_region == 1);
  CHECK(ranked[0].s == 2);
  CHECK(ranked[0].p == 1);
  CHECK(ranked[0].o == 0);
}

TEST_CASE("rank_image with k beyond the candidate count returns everything sorted") {
  std::mt19937_64 rng(2);
  const auto det = random_detections(rng, 2, 3, 2, false);
  const auto prior = SemanticPrior::from_model(random_model(rng, 3, 2));
  const auto m = SlotMarginals::uniform(3, 2);
  const auto ranked = rank_image(prior, m, det, {1000, 0, false});
  CHECK(ranked.size() == 36);
  CHECK(ranked == oracle(&prior, m, det, 1000));
  CHECK(std::is_sorted(ranked.begin(), ranked.end(), ranks_before));
}

TEST_CASE("rank_image equals the exhaustive oracle including ties") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t regions = 2 + trial % 3, ne = 2 + trial % 4, nr = 1 + trial % 3;
    const bool coarse = trial % 2 == 0;
    const auto det = random_detections(rng, regions, ne, nr, coarse);
    const auto prior = coarse ? SemanticPrior::constant(ne, nr)
                              : SemanticPrior::from_model(random_model(rng, ne, nr));
    const auto m = SlotMarginals::uniform(ne, nr);
    for (std::size_t k : {1u, 5u, 17u, 100u}) {
      CHECK(rank_image(prior, m, det, {k, 0, false}) == oracle(&prior, m, det, k));
      CHECK(rank_image(prior, m, det, {k, 0, true}) == oracle(nullptr, m, det, k));
    }
  }
}

TEST_CASE("pruning keeps only the top-m labels") {
  std::mt19937_64 rng(4);
  const auto det = random_detections(rng, 3, 6, 4, false);
  const auto prior = SemanticPrior::constant(6, 4);
  const auto m = SlotMarginals::uniform(6, 4);
  const auto pruned = rank_image(prior, m, det, {10000, 2, true});
  CHECK(pruned.size() == 6 * 2 * 2 * 2);
  // Visual-only top-1 always survives pruning.
  CHECK(pruned.front() == rank_image(prior, m, det, {1, 0, true}).front());
}

TEST_CASE("visual-only ordering equals a constant prior with uniform marginals") {
  std::mt19937_64 rng(5);
  const auto det = random_detections(rng, 3, 4, 3, false);
  const auto m = SlotMarginals::uniform(4, 3);
  const auto joint = rank_image(SemanticPrior::constant(4, 3, 0.7), m, det, {500, 0, false});
  const auto visual = rank_image(SemanticPrior::constant(4, 3), m, det, {500, 0, true});
  REQUIRE(joint.size() == visual.size());
  const double shift = joint[0].log_score - visual[0].log_score;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    CHECK(joint[i].subject_region == visual[i].subject_region);
    CHECK(joint[i].object_region == visual[i].object_region);
    CHECK(joint[i].s == visual[i].s);
    CHECK(joint[i].p == visual[i].p);
    CHECK(joint[i].o == visual[i].o);
    CHECK(joint[i].log_score - visual[i].log_score == doctest::Approx(shift).epsilon(1e-12));
  }
}

TEST_CASE("raising theta of one triple never lowers its candidates") {
  std::mt19937_64 rng(6);
  const auto det = random_detections(rng, 3, 3, 2, false);
  const auto m = SlotMarginals::uniform(3, 2);
  auto model = random_model(rng, 3, 2);
  const auto before = rank_image(SemanticPrior::from_model(model), m, det, {1000, 0, false});
  // Boost theta(1, 0, 2) by scaling the relation-0 embedding only on
  // coordinates where entity products are positive: use a count prior instead.
  const TripleCountTable low(3, 2, {{{1, 0, 2}, 1}});
  const TripleCountTable high(3, 2, {{{1, 0, 2}, 50}});
  const auto rank_of = [](const std::vector<RankedPrediction>& list, std::uint32_t sr,
                          std::uint32_t orr) {
    for (std::size_t i = 0; i < list.size(); ++i)
      if (list[i].s == 1 && list[i].p == 0 && list[i].o == 2 && list[i].subject_region == sr &&
          list[i].object_region == orr)
        return i;
    return list.size();
  };
  const auto a = rank_image(SemanticPrior::from_counts(low), m, det, {1000, 0, false});
  const auto b = rank_image(SemanticPrior::from_counts(high), m, det, {1000, 0, false});
  for (const auto& pair : det.pairs) {
    CHECK(rank_of(b, pair.subject_region, pair.object_region) <=
          rank_of(a, pair.subject_region, pair.object_region));
  }
  CHECK(before.size() == a.size());
}

TEST_CASE("scaling a region's entity scores preserves order among its candidates") {
  std::mt19937_64 rng(7);
  auto det = random_detections(rng, 3, 4, 2, false);
  const auto prior = SemanticPrior::from_model(random_model(rng, 4, 2));
  const auto m = SlotMarginals::uniform(4, 2);
  const auto before = rank_image(prior, m, det, {10000, 0, false});
  for (auto& v : det.regions[0].entity_scores) v *= 0.125;
  const auto after = rank_image(prior, m, det, {10000, 0, false});
  const auto subject_zero = [](const std::vector<RankedPrediction>& list) {
    std::vector<std::tuple<std::uint32_t, std::uint32_t, EntityId, RelationId, EntityId>> out;
    for (const auto& r : list)
      if (r.subject_region == 0) out.emplace_back(r.subject_region, r.object_region, r.s, r.p, r.o);
    return out;
  };
  CHECK(subject_zero(before) == subject_zero(after));
}

TEST_CASE("rank_images is independent of the thread count; empty input gives no output") {
  std::mt19937_64 rng(8);
  std::vector<DetectionSet> sets;
  for (int i = 0; i < 9; ++i) sets.push_back(random_detections(rng, 3, 4, 3, i % 2 == 0));
  sets.push_back(DetectionSet{"empty", {}, {}});
  const auto prior = SemanticPrior::from_model(random_model(rng, 4, 3));
  const auto m = SlotMarginals::uniform(4, 3);
  const auto one = rank_images(prior, m, sets, {20, 2, false}, 1);
  const auto many = rank_images(prior, m, sets, {20, 2, false}, 4);
  CHECK(one == many);
  CHECK(one.back().empty());
}

TEST_CASE("write_ranked emits the documented fields") {
  const Vocabulary vocab({"a", "b"}, {"x"});
  const std::vector<GroundTruthTuple> gt = {{"im", 0, 0, 1, Box{0, 0, 10, 10}, Box{20, 20, 30, 30}}};
  const auto det = synthesize_detections(gt, vocab, 0.0, 1)[0];
  const auto ranked = rank_image(SemanticPrior::constant(2, 1), SlotMarginals::uniform(2, 1), det,
                                 {3, 0, false});
  std::ostringstream out;
  write_ranked(out, det, ranked, vocab);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(j["image_id"] == "im");
  CHECK(j["rank"] == 1);
  CHECK(j["subject"] == "a");
  CHECK(j["predicate"] == "x");
  CHECK(j["object"] == "b");
  CHECK(j["subject_box"] == nlohmann::json::array({0.0, 0.0, 10.0, 10.0}));
  CHECK(j["log_score"].get<double>() == ranked[0].log_score);
}
