#include "relrank/kg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/core.h>

#include "json.hpp"
#include "relrank/manifest.hpp"

namespace relrank {
namespace {

template <typename Id>
std::unordered_map<std::string, Id> build_index(const std::vector<std::string>& labels,
                                                const char* kind) {
  std::unordered_map<std::string, Id> index;
  index.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) throw ValidationError(fmt::format("{} {}: empty label", kind, i));
    if (!index.emplace(labels[i], static_cast<Id>(i)).second) {
      throw ValidationError(fmt::format("duplicate {} label '{}'", kind, labels[i]));
    }
  }
  return index;
}

std::vector<std::string> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open vocabulary file {}", path.string()));
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    labels.push_back(line);
  }
  while (!labels.empty() && labels.back().empty()) labels.pop_back();
  return labels;
}

void write_labels(const std::filesystem::path& path, const std::vector<std::string>& labels) {
  std::ofstream out(path);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  for (const auto& l : labels) out << l << '\n';
}

Box parse_box(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw ValidationError("box must be [x1, y1, x2, y2]");
  return Box::from_array(j.get<std::array<double, 4>>());
}

std::vector<double> smoothed_marginal(const std::vector<std::int64_t>& counts,
                                      std::int64_t total, double alpha) {
  std::vector<double> out(counts.size());
  const double denom = static_cast<double>(total) + alpha * static_cast<double>(counts.size());
  if (denom <= 0) {
    // alpha == 0 on an empty table: fall back to uniform.
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(counts.size()));
    return out;
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out[i] = (static_cast<double>(counts[i]) + alpha) / denom;
  }
  return out;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> entities, std::vector<std::string> relations)
    : entities_(std::move(entities)), relations_(std::move(relations)) {
  entity_index_ = build_index<EntityId>(entities_, "entity");
  relation_index_ = build_index<RelationId>(relations_, "relation");
}

Vocabulary Vocabulary::load(const std::filesystem::path& entities_path,
                            const std::filesystem::path& relations_path) {
  auto entities = read_labels(entities_path);
  auto relations = read_labels(relations_path);
  if (entities.empty()) {
    throw ValidationError(fmt::format("{}: no entity labels", entities_path.string()));
  }
  if (relations.empty()) {
    throw ValidationError(fmt::format("{}: no relation labels", relations_path.string()));
  }
  return Vocabulary(std::move(entities), std::move(relations));
}

void Vocabulary::save(const std::filesystem::path& entities_path,
                      const std::filesystem::path& relations_path) const {
  write_labels(entities_path, entities_);
  write_labels(relations_path, relations_);
}

std::optional<EntityId> Vocabulary::find_entity(std::string_view label) const {
  auto it = entity_index_.find(std::string(label));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> Vocabulary::find_relation(std::string_view label) const {
  auto it = relation_index_.find(std::string(label));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::digest() const {
  std::string buf = "entities\n";
  for (const auto& l : entities_) buf += l + '\n';
  buf += "relations\n";
  for (const auto& l : relations_) buf += l + '\n';
  return sha256_hex(buf);
}

std::vector<GroundTruthTuple> load_annotations(const std::filesystem::path& path,
                                               const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open annotation file {}", path.string()));
  std::vector<GroundTruthTuple> tuples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = [&] { return fmt::format("{}:{}", path.string(), line_no); };
    try {
      const auto j = nlohmann::json::parse(line);
      GroundTruthTuple t;
      t.image_id = j.at("image_id").get<std::string>();
      const auto subject = j.at("subject").get<std::string>();
      const auto predicate = j.at("predicate").get<std::string>();
      const auto object = j.at("object").get<std::string>();
      auto s = vocab.find_entity(subject);
      auto p = vocab.find_relation(predicate);
      auto o = vocab.find_entity(object);
      if (!s) throw ValidationError(fmt::format("unknown subject '{}'", subject));
      if (!p) throw ValidationError(fmt::format("unknown predicate '{}'", predicate));
      if (!o) throw ValidationError(fmt::format("unknown object '{}'", object));
      t.subject = *s;
      t.predicate = *p;
      t.object = *o;
      t.subject_box = parse_box(j.at("subject_box"));
      t.object_box = parse_box(j.at("object_box"));
      validate_box(t.subject_box, "subject_box");
      validate_box(t.object_box, "object_box");
      tuples.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("{}: malformed annotation: {}", where(), e.what()));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{}: {}", where(), e.what()));
    }
  }
  return tuples;
}

void save_annotations(const std::filesystem::path& path,
                      std::span<const GroundTruthTuple> tuples, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  for (const auto& t : tuples) {
    nlohmann::json j = {{"image_id", t.image_id},
                        {"subject", vocab.entity_label(t.subject)},
                        {"predicate", vocab.relation_label(t.predicate)},
                        {"object", vocab.entity_label(t.object)},
                        {"subject_box", t.subject_box.as_array()},
                        {"object_box", t.object_box.as_array()}};
    out << j.dump() << '\n';
  }
}

TripleCountTable::TripleCountTable(std::size_t num_entities, std::size_t num_relations,
                                   std::map<Triple, std::int64_t> counts, double smoothing)
    : num_entities_(num_entities),
      num_relations_(num_relations),
      smoothing_(smoothing),
      counts_(std::move(counts)) {
  if (num_entities == 0 || num_relations == 0) {
    throw ValidationError("count table needs nonempty vocabularies");
  }
  if (!(smoothing >= 0)) throw ValidationError("smoothing must be >= 0");
  std::vector<std::int64_t> subj(num_entities, 0);
  std::vector<std::int64_t> pred(num_relations, 0);
  std::vector<std::int64_t> obj(num_entities, 0);
  for (auto it = counts_.begin(); it != counts_.end();) {
    const auto& [t, c] = *it;
    if (t.s >= num_entities || t.o >= num_entities || t.p >= num_relations) {
      throw ValidationError(fmt::format("triple ({}, {}, {}) out of range", t.s, t.p, t.o));
    }
    if (c < 0) throw ValidationError("negative triple count");
    if (c == 0) {
      it = counts_.erase(it);
      continue;
    }
    subj[t.s] += c;
    pred[t.p] += c;
    obj[t.o] += c;
    total_ += c;
    ++it;
  }
  subject_marginal_ = smoothed_marginal(subj, total_, smoothing);
  predicate_marginal_ = smoothed_marginal(pred, total_, smoothing);
  object_marginal_ = smoothed_marginal(obj, total_, smoothing);
}

std::int64_t TripleCountTable::count(const Triple& t) const {
  auto it = counts_.find(t);
  return it == counts_.end() ? 0 : it->second;
}

TripleCountTable aggregate_counts(std::span<const GroundTruthTuple> tuples,
                                  const Vocabulary& vocab, double smoothing) {
  std::map<Triple, std::int64_t> counts;
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    const auto& t = tuples[i];
    if (t.subject >= vocab.num_entities() || t.object >= vocab.num_entities() ||
        t.predicate >= vocab.num_relations()) {
      throw ValidationError(fmt::format("tuple {} (image '{}'): id out of range", i, t.image_id));
    }
    ++counts[t.triple()];
  }
  return TripleCountTable(vocab.num_entities(), vocab.num_relations(), std::move(counts),
                          smoothing);
}

SplitSpec make_split(const TripleCountTable& table, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1)) {
    throw ValidationError(fmt::format("held-out fraction {} not in (0, 1)", fraction));
  }
  if (table.num_nonzero() == 0) throw ValidationError("cannot split an empty count table");

  // std::map iteration is already sorted by triple.
  std::vector<std::pair<Triple, std::int64_t>> triples(table.counts().begin(),
                                                       table.counts().end());
  std::mt19937_64 rng(seed);
  std::shuffle(triples.begin(), triples.end(), rng);

  const auto n = triples.size();
  const auto held = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));

  SplitSpec split;
  split.seed = seed;
  std::map<Triple, std::int64_t> train;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < held) {
      split.heldout.push_back({triples[i].first, triples[i].second});
    } else {
      train.emplace(triples[i]);
    }
  }
  std::sort(split.heldout.begin(), split.heldout.end(),
            [](const auto& a, const auto& b) { return a.triple < b.triple; });
  split.train_counts = TripleCountTable(table.num_entities(), table.num_relations(),
                                        std::move(train), table.smoothing());
  return split;
}

std::vector<GroundTruthTuple> zero_shot_filter(std::span<const GroundTruthTuple> test,
                                               const TripleCountTable& train) {
  std::vector<GroundTruthTuple> out;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& t = test[i];
    if (t.subject >= train.num_entities() || t.object >= train.num_entities() ||
        t.predicate >= train.num_relations()) {
      throw ValidationError(fmt::format("test tuple {}: id out of range", i));
    }
    if (train.count(t.triple()) == 0) out.push_back(t);
  }
  return out;
}

}  // namespace relrank
