#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "relrank/box.hpp"
#include "relrank/kg.hpp"

namespace relrank {

enum class EvalSetting { kPhrase, kRelationship, kPredicate, kTriple };

std::string_view to_string(EvalSetting setting);
// "phrase", "relationship", "predicate", "triple".
EvalSetting parse_eval_setting(std::string_view name);
inline constexpr EvalSetting kAllSettings[] = {EvalSetting::kPhrase, EvalSetting::kRelationship,
                                               EvalSetting::kPredicate, EvalSetting::kTriple};

inline constexpr double kOverlapThreshold = 0.5;

// A ranked prediction with its boxes resolved.
struct PredictedTuple {
  EntityId subject = 0;
  RelationId predicate = 0;
  EntityId object = 0;
  Box subject_box;
  Box object_box;
  double log_score = 0;
};

// Per image, predictions in rank order.
using RankedLists = std::map<std::string, std::vector<PredictedTuple>>;

// Reads the ranked JSON-lines output, ordering each image by its "rank" field.
RankedLists load_ranked(const std::filesystem::path& path, const Vocabulary& vocab);

// Labels must agree in every setting. Phrase: union boxes overlap >= 0.5.
// Relationship: subject and object boxes each overlap >= 0.5. Predicate and
// triple: labels only (predicate detection is run on ground-truth boxes).
bool matches(EvalSetting setting, const PredictedTuple& pred, const GroundTruthTuple& gt);

struct RecallCount {
  std::size_t matched = 0;
  std::size_t total = 0;

  // Undefined when there is no ground truth.
  std::optional<double> recall() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(matched) / static_cast<double>(total);
  }
};

// Greedy matching in rank order over each image's top k: a prediction
// claims the first unmatched ground truth it matches. Pooled over images;
// images absent from `ranked` contribute only to the total.
RecallCount recall_counts_at_k(const RankedLists& ranked, std::span<const GroundTruthTuple> gts,
                               EvalSetting setting, std::size_t k);
std::optional<double> recall_at_k(const RankedLists& ranked,
                                  std::span<const GroundTruthTuple> gts, EvalSetting setting,
                                  std::size_t k);

struct SettingReport {
  EvalSetting setting = EvalSetting::kTriple;
  std::map<std::size_t, RecallCount> at_k;
};

struct EvalReport {
  bool zero_shot = false;
  std::vector<std::size_t> ks;
  std::vector<SettingReport> settings;
};

struct EvalInputs {
  const RankedLists* ranked = nullptr;
  // Rankings computed on ground-truth boxes; PredicateDet falls back to
  // `ranked` when null.
  const RankedLists* predicate_ranked = nullptr;
};

// Recall at every k for every setting; with zero_shot the ground truth is
// restricted to triples unseen in `train_counts` first.
EvalReport evaluate(const EvalInputs& inputs, std::span<const GroundTruthTuple> gts,
                    const TripleCountTable& train_counts, std::span<const EvalSetting> settings,
                    std::span<const std::size_t> ks, bool zero_shot);

nlohmann::json to_json(const EvalReport& report);
// Aligned table, R@K columns per setting, recalls in percent.
std::string format_table(const EvalReport& report);

}  // namespace relrank
