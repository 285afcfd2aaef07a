#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "doctest.h"
#include "relrank/evaluation.hpp"

using namespace relrank;

namespace {

GroundTruthTuple gt(const std::string& image, EntityId s, RelationId p, EntityId o, Box sb, Box ob) {
  return {image, s, p, o, sb, ob};
}

PredictedTuple pred(EntityId s, RelationId p, EntityId o, Box sb, Box ob, double score = 0) {
  return {s, p, o, sb, ob, score};
}

// Maximum bipartite matching between one image's top-k predictions and its
// ground truth, by exhaustive search.
std::size_t max_matching(const std::vector<PredictedTuple>& preds,
                         const std::vector<GroundTruthTuple>& gts, EvalSetting setting) {
  std::vector<bool> used(gts.size(), false);
  std::function<std::size_t(std::size_t)> go = [&](std::size_t i) -> std::size_t {
    if (i == preds.size()) return 0;
    std::size_t best = go(i + 1);
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || !matches(setting, preds[i], gts[g])) continue;
      used[g] = true;
      best = std::max(best, 1 + go(i + 1));
      used[g] = false;
    }
    return best;
  };
  return go(0);
}

const Box kA{0, 0, 10, 10};
const Box kB{20, 20, 30, 30};

}  // namespace

TEST_CASE("setting names round trip") {
  for (auto s : kAllSettings) CHECK(parse_eval_setting(to_string(s)) == s);
  CHECK_THROWS_AS(parse_eval_setting("phrases"), ValidationError);
}

TEST_CASE("matches examples") {
  const auto truth = gt("i", 1, 2, 3, kA, kB);
  SUBCASE("identical boxes and labels match everywhere") {
    for (auto s : kAllSettings) CHECK(matches(s, pred(1, 2, 3, kA, kB), truth));
  }
  SUBCASE("any label mismatch fails everywhere") {
    for (auto s : kAllSettings) {
      CHECK_FALSE(matches(s, pred(0, 2, 3, kA, kB), truth));
      CHECK_FALSE(matches(s, pred(1, 0, 3, kA, kB), truth));
      CHECK_FALSE(matches(s, pred(1, 2, 0, kA, kB), truth));
    }
  }
  SUBCASE("subject 0.6, object 0.4, union 0.7") {
    // Ground truth: subject [0,0,10,10], object [10,0,20,10], union [0,0,20,10].
    const auto t = gt("i", 1, 2, 3, Box{0, 0, 10, 10}, Box{10, 0, 20, 10});
    // Predicted subject [0,0,6,10]: IoU 60/100.
    // Predicted object [10,0,14,10]: IoU 40/100.
    // Predicted union [0,0,14,10]: IoU 140/200 = 0.7.
    const auto p = pred(1, 2, 3, Box{0, 0, 6, 10}, Box{10, 0, 14, 10});
    CHECK(iou(p.subject_box, t.subject_box) == doctest::Approx(0.6));
    CHECK(iou(p.object_box, t.object_box) == doctest::Approx(0.4));
    CHECK(iou(union_box(p.subject_box, p.object_box), union_box(t.subject_box, t.object_box)) ==
          doctest::Approx(0.7));
    CHECK(matches(EvalSetting::kPhrase, p, t));
    CHECK_FALSE(matches(EvalSetting::kRelationship, p, t));
    CHECK(matches(EvalSetting::kPredicate, p, t));
    CHECK(matches(EvalSetting::kTriple, p, t));
  }
  SUBCASE("overlap exactly at the threshold matches") {
    const auto t = gt("i", 1, 2, 3, Box{0, 0, 10, 10}, Box{0, 0, 10, 10});
    const auto p = pred(1, 2, 3, Box{0, 0, 5, 10}, Box{0, 0, 5, 10});
    CHECK(matches(EvalSetting::kRelationship, p, t));
    CHECK(matches(EvalSetting::kPhrase, p, t));
  }
}

TEST_CASE("hand-built fixture of five images") {
  std::vector<GroundTruthTuple> gts = {
      gt("a", 0, 0, 1, kA, kB), gt("a", 2, 1, 0, kA, kB),
      gt("b", 1, 1, 1, kA, kB),
      gt("c", 0, 1, 2, kA, kB), gt("c", 0, 1, 2, kA, kB),  // duplicated tuple
      gt("d", 2, 0, 2, kA, kB),
      gt("e", 1, 0, 0, kA, kB),  // image with no predictions
  };
  RankedLists ranked;
  ranked["a"] = {pred(0, 0, 1, kA, kB), pred(9, 9, 9, kA, kB), pred(2, 1, 0, kA, kB)};
  ranked["b"] = {pred(1, 1, 0, kA, kB), pred(1, 1, 1, Box{100, 100, 110, 110}, kB)};
  ranked["c"] = {pred(0, 1, 2, kA, kB), pred(0, 1, 2, kA, kB), pred(0, 1, 2, kA, kB)};
  ranked["d"] = {pred(2, 0, 2, Box{0, 0, 10, 10.5}, Box{20, 20, 30, 31})};

  const auto count = [&](EvalSetting s, std::size_t k) { return recall_counts_at_k(ranked, gts, s, k); };
  CHECK(count(EvalSetting::kTriple, 1).matched == 3);   // a, c, d
  CHECK(count(EvalSetting::kTriple, 1).total == 7);
  CHECK(count(EvalSetting::kTriple, 2).matched == 5);   // + b (labels only), + second c
  CHECK(count(EvalSetting::kTriple, 3).matched == 6);   // + second a
  CHECK(count(EvalSetting::kRelationship, 3).matched == 5);  // b's box is off
  CHECK(*recall_at_k(ranked, gts, EvalSetting::kTriple, 3) == doctest::Approx(6.0 / 7.0));
  CHECK(*recall_at_k(ranked, gts, EvalSetting::kRelationship, 100) == doctest::Approx(5.0 / 7.0));

  const TripleCountTable train(3, 2, {{{0, 0, 1}, 3}, {{2, 0, 2}, 1}});
  const EvalInputs inputs{&ranked, nullptr};
  const std::vector<std::size_t> ks = {1, 3};
  const std::vector<EvalSetting> settings(std::begin(kAllSettings), std::end(kAllSettings));
  const auto report = evaluate(inputs, gts, train, settings, ks, true);
  // Zero-shot keeps the five tuples whose triple was not seen in training.
  const auto& triple = report.settings[3];
  CHECK(triple.setting == EvalSetting::kTriple);
  CHECK(triple.at_k.at(3).total == 5);
  CHECK(triple.at_k.at(3).matched == 4);
  CHECK(triple.at_k.at(1).matched == 1);

  const auto j = to_json(report);
  CHECK(j["zero_shot"] == true);
  CHECK(format_table(report).find("n/a") == std::string::npos);
}

TEST_CASE("empty ground truth gives null recall") {
  RankedLists ranked;
  ranked["x"] = {pred(0, 0, 0, kA, kB)};
  CHECK_FALSE(recall_at_k(ranked, {}, EvalSetting::kTriple, 10).has_value());
  const TripleCountTable train(1, 1, {{{0, 0, 0}, 1}});
  const std::vector<GroundTruthTuple> gts = {gt("x", 0, 0, 0, kA, kB)};
  const std::vector<std::size_t> ks = {5};
  const std::vector<EvalSetting> settings = {EvalSetting::kTriple};
  const auto report = evaluate({&ranked, nullptr}, gts, train, settings, ks, true);
  CHECK(report.settings[0].at_k.at(5).total == 0);
  CHECK(to_json(report)["settings"]["triple"]["recall_at_5"].is_null());
  CHECK(format_table(report).find("n/a") != std::string::npos);
}

TEST_CASE("predicate setting uses its own ranked input when given") {
  RankedLists det, on_gt;
  det["a"] = {pred(0, 1, 0, kA, kB)};
  on_gt["a"] = {pred(0, 0, 1, kA, kB)};
  const std::vector<GroundTruthTuple> gts = {gt("a", 0, 0, 1, kA, kB)};
  const TripleCountTable train(2, 2, {});
  const std::vector<std::size_t> ks = {1};
  const std::vector<EvalSetting> settings = {EvalSetting::kPredicate, EvalSetting::kTriple};
  const auto report = evaluate({&det, &on_gt}, gts, train, settings, ks, false);
  CHECK(report.settings[0].at_k.at(1).matched == 1);
  CHECK(report.settings[1].at_k.at(1).matched == 0);
}

TEST_CASE("greedy recall on random instances") {
  std::mt19937_64 rng(11);
  const Box boxes[] = {kA, kB, Box{0, 0, 10, 12}, Box{50, 50, 60, 60}};
  std::uniform_int_distribution<int> label(0, 1), box(0, 3), count(0, 4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<GroundTruthTuple> gts;
    RankedLists ranked;
    for (const char* image : {"p", "q", "r"}) {
      const int ng = count(rng), np = count(rng) + 1;
      for (int g = 0; g < ng; ++g)
        gts.push_back(gt(image, label(rng), label(rng), label(rng), boxes[box(rng)], boxes[box(rng)]));
      for (int p = 0; p < np; ++p)
        ranked[image].push_back(pred(label(rng), label(rng), label(rng), boxes[box(rng)], boxes[box(rng)]));
    }
    for (auto setting : kAllSettings) {
      std::size_t prev = 0;
      for (std::size_t k = 1; k <= 6; ++k) {
        const auto rc = recall_counts_at_k(ranked, gts, setting, k);
        CHECK(rc.total == gts.size());
        CHECK(rc.matched <= rc.total);
        CHECK(rc.matched >= prev);  // monotone in k
        prev = rc.matched;
        // Greedy never beats the optimal matching; with label-only settings
        // every match relation is an equivalence, so greedy is optimal.
        std::size_t optimum = 0;
        for (const auto& [image, list] : ranked) {
          std::vector<PredictedTuple> top(list.begin(), list.begin() + std::min(k, list.size()));
          std::vector<GroundTruthTuple> mine;
          for (const auto& g : gts)
            if (g.image_id == image) mine.push_back(g);
          optimum += max_matching(top, mine, setting);
        }
        CHECK(rc.matched <= optimum);
        if (setting == EvalSetting::kTriple || setting == EvalSetting::kPredicate)
          CHECK(rc.matched == optimum);
      }
    }
  }
}

TEST_CASE("load_ranked orders by rank") {
  const Vocabulary vocab({"a", "b"}, {"x"});
  const auto path = std::filesystem::temp_directory_path() / "relrank_test_ranked.jsonl";
  {
    std::ofstream out(path);
    out << R"({"image_id":"i","rank":2,"log_score":-1,"subject":"b","predicate":"x","object":"a","subject_box":[0,0,1,1],"object_box":[0,0,2,2]})"
        << '\n'
        << R"({"image_id":"i","rank":1,"log_score":0,"subject":"a","predicate":"x","object":"b","subject_box":[0,0,1,1],"object_box":[0,0,2,2]})"
        << '\n';
  }
  const auto ranked = load_ranked(path, vocab);
  REQUIRE(ranked.at("i").size() == 2);
  CHECK(ranked.at("i")[0].subject == 0);
  CHECK(ranked.at("i")[1].subject == 1);
}
