#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "relrank/box.hpp"
#include "relrank/common.hpp"

namespace relrank {

// Entity and relation label sets with dense ids assigned in list order.
class Vocabulary {
 public:
  Vocabulary() = default;
  // Throws ValidationError on duplicate or empty labels.
  Vocabulary(std::vector<std::string> entities, std::vector<std::string> relations);

  // Plain text, one label per line; line number is the id. Blank lines at
  // the end of the file are ignored.
  static Vocabulary load(const std::filesystem::path& entities_path,
                         const std::filesystem::path& relations_path);
  void save(const std::filesystem::path& entities_path,
            const std::filesystem::path& relations_path) const;

  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }

  const std::string& entity_label(EntityId id) const { return entities_.at(id); }
  const std::string& relation_label(RelationId id) const { return relations_.at(id); }
  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<std::string>& relations() const { return relations_; }

  std::optional<EntityId> find_entity(std::string_view label) const;
  std::optional<RelationId> find_relation(std::string_view label) const;

  // SHA-256 over both label lists; used to detect mismatched checkpoints.
  std::string digest() const;

 private:
  std::vector<std::string> entities_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
};

// One annotated relationship (i_s, i_o, s, p, o); i_p is the union box.
struct GroundTruthTuple {
  std::string image_id;
  EntityId subject = 0;
  RelationId predicate = 0;
  EntityId object = 0;
  Box subject_box;
  Box object_box;

  Triple triple() const { return {subject, predicate, object}; }
};

// JSON lines, one tuple per line, labels resolved against `vocab`.
std::vector<GroundTruthTuple> load_annotations(const std::filesystem::path& path,
                                               const Vocabulary& vocab);
void save_annotations(const std::filesystem::path& path,
                      std::span<const GroundTruthTuple> tuples,
                      const Vocabulary& vocab);

inline constexpr double kDefaultMarginalSmoothing = 1.0;

// Sparse triple frequencies y_spo with add-alpha smoothed slot marginals.
// Stored counts are always >= 1.
class TripleCountTable {
 public:
  TripleCountTable() = default;
  TripleCountTable(std::size_t num_entities, std::size_t num_relations,
                   std::map<Triple, std::int64_t> counts,
                   double smoothing = kDefaultMarginalSmoothing);

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }
  double smoothing() const { return smoothing_; }

  std::int64_t count(const Triple& t) const;
  const std::map<Triple, std::int64_t>& counts() const { return counts_; }
  std::size_t num_nonzero() const { return counts_.size(); }
  std::int64_t total_samples() const { return total_; }
  // Number of cells in E x R x E.
  std::uint64_t num_cells() const {
    return static_cast<std::uint64_t>(num_entities_) * num_relations_ * num_entities_;
  }

  std::span<const double> subject_marginal() const { return subject_marginal_; }
  std::span<const double> predicate_marginal() const { return predicate_marginal_; }
  std::span<const double> object_marginal() const { return object_marginal_; }

 private:
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  double smoothing_ = kDefaultMarginalSmoothing;
  std::map<Triple, std::int64_t> counts_;
  std::int64_t total_ = 0;
  std::vector<double> subject_marginal_;
  std::vector<double> predicate_marginal_;
  std::vector<double> object_marginal_;
};

// Counts every annotation row, including duplicates within an image.
TripleCountTable aggregate_counts(std::span<const GroundTruthTuple> tuples,
                                  const Vocabulary& vocab,
                                  double smoothing = kDefaultMarginalSmoothing);

struct HeldOutTriple {
  Triple triple;
  std::int64_t count = 0;

  friend bool operator==(const HeldOutTriple&, const HeldOutTriple&) = default;
};

struct SplitSpec {
  TripleCountTable train_counts;
  std::vector<HeldOutTriple> heldout;
  std::uint64_t seed = 0;
};

// Holds out max(1, round(fraction * nonzero)) triples chosen by a seeded
// shuffle of the sorted nonzero triples.
SplitSpec make_split(const TripleCountTable& table, double fraction, std::uint64_t seed);

// Test tuples whose triple never occurs in `train`, in input order.
std::vector<GroundTruthTuple> zero_shot_filter(std::span<const GroundTruthTuple> test,
                                               const TripleCountTable& train);

}  // namespace relrank
