#include "relrank/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include <fmt/core.h>

namespace relrank {

std::string_view to_string(EvalSetting setting) {
  switch (setting) {
    case EvalSetting::kPhrase:
      return "phrase";
    case EvalSetting::kRelationship:
      return "relationship";
    case EvalSetting::kPredicate:
      return "predicate";
    case EvalSetting::kTriple:
      return "triple";
  }
  return "unknown";
}

EvalSetting parse_eval_setting(std::string_view name) {
  for (const auto s : kAllSettings) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError(fmt::format("unknown evaluation setting '{}'", name));
}

RankedLists load_ranked(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open ranked file {}", path.string()));
  std::map<std::string, std::vector<std::pair<std::int64_t, PredictedTuple>>> staged;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictedTuple t;
      const auto subject = j.at("subject").get<std::string>();
      const auto predicate = j.at("predicate").get<std::string>();
      const auto object = j.at("object").get<std::string>();
      const auto s = vocab.find_entity(subject);
      const auto p = vocab.find_relation(predicate);
      const auto o = vocab.find_entity(object);
      if (!s || !p || !o) {
        throw ValidationError(
            fmt::format("unknown label in ({}, {}, {})", subject, predicate, object));
      }
      t.subject = *s;
      t.predicate = *p;
      t.object = *o;
      t.subject_box = Box::from_array(j.at("subject_box").get<std::array<double, 4>>());
      t.object_box = Box::from_array(j.at("object_box").get<std::array<double, 4>>());
      t.log_score = j.at("log_score").get<double>();
      staged[j.at("image_id").get<std::string>()].emplace_back(j.at("rank").get<std::int64_t>(),
                                                               t);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(
          fmt::format("{}:{}: malformed prediction: {}", path.string(), line_no, e.what()));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  RankedLists out;
  for (auto& [image, items] : staged) {
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& list = out[image];
    for (auto& [rank, t] : items) list.push_back(t);
  }
  return out;
}

bool matches(EvalSetting setting, const PredictedTuple& pred, const GroundTruthTuple& gt) {
  if (pred.subject != gt.subject || pred.predicate != gt.predicate || pred.object != gt.object) {
    return false;
  }
  switch (setting) {
    case EvalSetting::kPhrase:
      return iou(union_box(pred.subject_box, pred.object_box),
                 union_box(gt.subject_box, gt.object_box)) >= kOverlapThreshold;
    case EvalSetting::kRelationship:
      return iou(pred.subject_box, gt.subject_box) >= kOverlapThreshold &&
             iou(pred.object_box, gt.object_box) >= kOverlapThreshold;
    case EvalSetting::kPredicate:
    case EvalSetting::kTriple:
      return true;
  }
  return false;
}

RecallCount recall_counts_at_k(const RankedLists& ranked, std::span<const GroundTruthTuple> gts,
                               EvalSetting setting, std::size_t k) {
  std::map<std::string, std::vector<const GroundTruthTuple*>> by_image;
  for (const auto& g : gts) by_image[g.image_id].push_back(&g);

  RecallCount count;
  count.total = gts.size();
  for (const auto& [image, image_gts] : by_image) {
    auto it = ranked.find(image);
    if (it == ranked.end()) continue;
    const auto& preds = it->second;
    std::vector<bool> used(image_gts.size(), false);
    const std::size_t limit = std::min(k, preds.size());
    for (std::size_t r = 0; r < limit; ++r) {
      for (std::size_t g = 0; g < image_gts.size(); ++g) {
        if (!used[g] && matches(setting, preds[r], *image_gts[g])) {
          used[g] = true;
          ++count.matched;
          break;
        }
      }
    }
  }
  return count;
}

std::optional<double> recall_at_k(const RankedLists& ranked,
                                  std::span<const GroundTruthTuple> gts, EvalSetting setting,
                                  std::size_t k) {
  return recall_counts_at_k(ranked, gts, setting, k).recall();
}

EvalReport evaluate(const EvalInputs& inputs, std::span<const GroundTruthTuple> gts,
                    const TripleCountTable& train_counts, std::span<const EvalSetting> settings,
                    std::span<const std::size_t> ks, bool zero_shot) {
  if (inputs.ranked == nullptr) throw ValidationError("evaluate: no ranked predictions");
  if (ks.empty()) throw ValidationError("evaluate: no k values");
  std::vector<GroundTruthTuple> filtered;
  std::span<const GroundTruthTuple> used = gts;
  if (zero_shot) {
    filtered = zero_shot_filter(gts, train_counts);
    used = filtered;
  }
  EvalReport report;
  report.zero_shot = zero_shot;
  report.ks.assign(ks.begin(), ks.end());
  for (const auto setting : settings) {
    const RankedLists* lists = inputs.ranked;
    if (setting == EvalSetting::kPredicate && inputs.predicate_ranked != nullptr) {
      lists = inputs.predicate_ranked;
    }
    SettingReport sr;
    sr.setting = setting;
    for (const auto k : ks) {
      if (k == 0) throw ValidationError("evaluate: k must be >= 1");
      sr.at_k[k] = recall_counts_at_k(*lists, used, setting, k);
    }
    report.settings.push_back(std::move(sr));
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  auto settings = nlohmann::json::object();
  for (const auto& sr : report.settings) {
    auto entry = nlohmann::json::object();
    for (const auto& [k, c] : sr.at_k) {
      const auto r = c.recall();
      entry[fmt::format("recall_at_{}", k)] = r ? nlohmann::json(*r) : nlohmann::json(nullptr);
      entry[fmt::format("matched_at_{}", k)] = c.matched;
    }
    entry["total"] = sr.at_k.empty() ? 0 : sr.at_k.begin()->second.total;
    settings[std::string(to_string(sr.setting))] = entry;
  }
  return {{"zero_shot", report.zero_shot}, {"k", report.ks}, {"settings", settings}};
}

std::string format_table(const EvalReport& report) {
  constexpr int kCell = 8;
  const auto heading = [](EvalSetting s) -> std::string {
    switch (s) {
      case EvalSetting::kPhrase:
        return "Phrase Det.";
      case EvalSetting::kRelationship:
        return "Relationship Det.";
      case EvalSetting::kPredicate:
        return "Predicate Det.";
      case EvalSetting::kTriple:
        return "Triple Det.";
    }
    return "";
  };
  std::vector<std::size_t> ks = report.ks;
  std::sort(ks.begin(), ks.end(), std::greater<>());
  const int group = static_cast<int>(ks.size()) * kCell;

  std::string top = fmt::format("{:<10}", report.zero_shot ? "zero-shot" : "");
  std::string sub = fmt::format("{:<10}", "");
  std::string row = fmt::format("{:<10}", "recall");
  for (const auto& sr : report.settings) {
    auto title = heading(sr.setting);
    const int width = std::max(group, static_cast<int>(title.size()) + 1);
    top += fmt::format(" | {:^{}}", title, width);
    std::string s, r;
    for (const auto k : ks) {
      s += fmt::format("{:>{}}", fmt::format("R@{}", k), kCell);
      const auto it = sr.at_k.find(k);
      const auto value = it == sr.at_k.end() ? std::nullopt : it->second.recall();
      r += fmt::format("{:>{}}", value ? fmt::format("{:.2f}", *value * 100.0) : "n/a", kCell);
    }
    sub += fmt::format(" | {:>{}}", s, width);
    row += fmt::format(" | {:>{}}", r, width);
  }
  return top + '\n' + sub + '\n' + row + '\n';
}

}  // namespace relrank
