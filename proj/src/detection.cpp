#include "relrank/detection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>

#include <fmt/core.h>

#include "json.hpp"

namespace relrank {
namespace {

void check_scores(const std::vector<double>& scores, std::size_t expected,
                  const std::string& where) {
  if (scores.size() != expected) {
    throw ValidationError(
        fmt::format("{}: score vector has length {}, expected {}", where, scores.size(), expected));
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]) || scores[i] < 0) {
      throw ValidationError(fmt::format("{}: score {} for label {} is negative or not finite",
                                        where, scores[i], i));
    }
  }
}

template <typename Lookup>
std::vector<double> parse_score_map(const nlohmann::json& j, std::size_t size, Lookup lookup,
                                    const std::string& where) {
  if (!j.is_object()) throw ValidationError(fmt::format("{}: scores must be an object", where));
  std::vector<double> scores(size, kScoreFloor);
  for (const auto& [label, value] : j.items()) {
    const auto id = lookup(label);
    if (!id) throw ValidationError(fmt::format("{}: unknown label '{}'", where, label));
    if (!value.is_number()) {
      throw ValidationError(fmt::format("{}: score for '{}' is not a number", where, label));
    }
    scores[*id] = value.template get<double>();
  }
  return scores;
}

}  // namespace

void validate_detections(const DetectionSet& det, const Vocabulary& vocab,
                         const DetectionOptions& options) {
  const auto& id = det.image_id;
  const auto n = det.regions.size();
  for (std::size_t r = 0; r < n; ++r) {
    const auto where = fmt::format("image '{}' region {}", id, r);
    validate_box(det.regions[r].box, where.c_str());
    check_scores(det.regions[r].entity_scores, vocab.num_entities(), where + " entity_scores");
    const auto& es = det.regions[r].entity_scores;
    if (std::none_of(es.begin(), es.end(), [](double v) { return v > 0; })) {
      throw ValidationError(fmt::format("{}: all entity scores are zero", where));
    }
  }
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (const auto& pair : det.pairs) {
    const auto where =
        fmt::format("image '{}' pair ({}, {})", id, pair.subject_region, pair.object_region);
    if (pair.subject_region >= n || pair.object_region >= n) {
      throw ValidationError(fmt::format("{}: region index out of range", where));
    }
    if (pair.subject_region == pair.object_region && !options.allow_self_pairs) {
      throw ValidationError(fmt::format("{}: self pair not allowed", where));
    }
    if (!seen.emplace(pair.subject_region, pair.object_region).second) {
      throw ValidationError(fmt::format("{}: duplicate pair", where));
    }
    check_scores(pair.predicate_scores, vocab.num_relations(), where + " predicate_scores");
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < n; ++j) {
      if (i == j && !options.allow_self_pairs) continue;
      if (!seen.contains({i, j})) {
        throw ValidationError(fmt::format("image '{}': missing pair ({}, {})", id, i, j));
      }
    }
  }
}

std::vector<DetectionSet> load_detections(const std::filesystem::path& path,
                                          const Vocabulary& vocab,
                                          const DetectionOptions& options) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open detection file {}", path.string()));
  std::vector<DetectionSet> sets;
  std::string line;
  std::size_t line_no = 0;
  const auto entity_lookup = [&](const std::string& l) { return vocab.find_entity(l); };
  const auto relation_lookup = [&](const std::string& l) { return vocab.find_relation(l); };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    DetectionSet det;
    try {
      const auto j = nlohmann::json::parse(line);
      det.image_id = j.at("image_id").get<std::string>();
      const auto& regions = j.at("regions");
      for (std::size_t r = 0; r < regions.size(); ++r) {
        const auto where = fmt::format("image '{}' region {}", det.image_id, r);
        Region region;
        region.box = Box::from_array(regions[r].at("box").get<std::array<double, 4>>());
        region.entity_scores = parse_score_map(regions[r].at("entity_scores"),
                                               vocab.num_entities(), entity_lookup, where);
        det.regions.push_back(std::move(region));
      }
      for (const auto& pj : j.at("pairs")) {
        PairScores pair;
        pair.subject_region = pj.at("s").get<std::uint32_t>();
        pair.object_region = pj.at("o").get<std::uint32_t>();
        const auto where = fmt::format("image '{}' pair ({}, {})", det.image_id,
                                       pair.subject_region, pair.object_region);
        pair.predicate_scores = parse_score_map(pj.at("predicate_scores"),
                                                vocab.num_relations(), relation_lookup, where);
        det.pairs.push_back(std::move(pair));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("{}:{}: malformed detection record{}: {}", path.string(),
                                        line_no,
                                        det.image_id.empty() ? "" : " for '" + det.image_id + "'",
                                        e.what()));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
    try {
      validate_detections(det, vocab, options);
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
    sets.push_back(std::move(det));
  }
  return sets;
}

void save_detections(const std::filesystem::path& path, std::span<const DetectionSet> sets,
                     const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  for (const auto& det : sets) {
    auto regions = nlohmann::json::array();
    for (const auto& r : det.regions) {
      nlohmann::json scores = nlohmann::json::object();
      for (std::size_t e = 0; e < r.entity_scores.size(); ++e) {
        scores[vocab.entity_label(static_cast<EntityId>(e))] = r.entity_scores[e];
      }
      regions.push_back({{"box", r.box.as_array()}, {"entity_scores", scores}});
    }
    auto pairs = nlohmann::json::array();
    for (const auto& p : det.pairs) {
      nlohmann::json scores = nlohmann::json::object();
      for (std::size_t r = 0; r < p.predicate_scores.size(); ++r) {
        scores[vocab.relation_label(static_cast<RelationId>(r))] = p.predicate_scores[r];
      }
      pairs.push_back(
          {{"s", p.subject_region}, {"o", p.object_region}, {"predicate_scores", scores}});
    }
    const nlohmann::json j = {{"image_id", det.image_id}, {"regions", regions}, {"pairs", pairs}};
    out << j.dump() << '\n';
  }
}

std::vector<DetectionSet> synthesize_detections(std::span<const GroundTruthTuple> tuples,
                                                const Vocabulary& vocab,
                                                const DetectionNoise& noise, std::uint64_t seed,
                                                const DetectionOptions& options) {
  if (!(noise.entity >= 0) || !(noise.predicate >= 0) || !(noise.box_jitter >= 0)) {
    throw ValidationError("detection noise must be >= 0");
  }
  std::vector<std::string> image_order;
  std::unordered_map<std::string, std::vector<const GroundTruthTuple*>> by_image;
  for (const auto& t : tuples) {
    auto [it, inserted] = by_image.try_emplace(t.image_id);
    if (inserted) image_order.push_back(t.image_id);
    it->second.push_back(&t);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto noisy = [&](double scale) { return std::max(kScoreFloor, scale * unit(rng)); };

  std::vector<DetectionSet> out;
  out.reserve(image_order.size());
  for (const auto& image_id : image_order) {
    const auto& image_tuples = by_image[image_id];
    DetectionSet det;
    det.image_id = image_id;

    std::vector<std::pair<Box, EntityId>> distinct;
    const auto region_of = [&](const Box& box, EntityId label) {
      for (std::size_t i = 0; i < distinct.size(); ++i) {
        if (distinct[i].first == box) return static_cast<std::uint32_t>(i);
      }
      distinct.emplace_back(box, label);
      return static_cast<std::uint32_t>(distinct.size() - 1);
    };
    std::set<std::tuple<std::uint32_t, std::uint32_t, RelationId>> relations;
    for (const auto* t : image_tuples) {
      const auto si = region_of(t->subject_box, t->subject);
      const auto oi = region_of(t->object_box, t->object);
      relations.emplace(si, oi, t->predicate);
    }

    for (const auto& [box, label] : distinct) {
      Region region;
      region.box = box;
      if (noise.box_jitter > 0) {
        const double w = box.width(), h = box.height();
        const auto shift = [&](double extent) {
          return noise.box_jitter * extent * (2.0 * unit(rng) - 1.0);
        };
        Box moved{std::max(0.0, box.x1 + shift(w)), std::max(0.0, box.y1 + shift(h)),
                  box.x2 + shift(w), box.y2 + shift(h)};
        if (moved.valid()) region.box = moved;
      }
      region.entity_scores.resize(vocab.num_entities());
      for (std::size_t e = 0; e < vocab.num_entities(); ++e) {
        region.entity_scores[e] = e == label ? 1.0 : noisy(noise.entity);
      }
      det.regions.push_back(std::move(region));
    }

    const auto n = static_cast<std::uint32_t>(det.regions.size());
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint32_t j = 0; j < n; ++j) {
        if (i == j && !options.allow_self_pairs) continue;
        PairScores pair{i, j, std::vector<double>(vocab.num_relations())};
        for (std::size_t p = 0; p < vocab.num_relations(); ++p) {
          pair.predicate_scores[p] = relations.contains({i, j, static_cast<RelationId>(p)})
                                         ? 1.0
                                         : noisy(noise.predicate);
        }
        det.pairs.push_back(std::move(pair));
      }
    }
    out.push_back(std::move(det));
  }
  return out;
}

}  // namespace relrank
