#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "relrank/detection.hpp"
#include "relrank/kg.hpp"
#include "relrank/model.hpp"

namespace relrank {

// Unnormalized triple prior p(s,p,o) = exp(-beta * E) with energy
// E = -log eta(theta). Stored densely as beta * log eta per cell.
class SemanticPrior {
 public:
  enum class Source { kModel, kCounts, kConstant };

  // log eta = theta.
  static SemanticPrior from_model(const SemanticModel& model, double beta = 1.0);
  // eta = y_spo + alpha, a baseline that cannot generalize to unseen triples.
  static SemanticPrior from_counts(const TripleCountTable& counts, double alpha = 1.0,
                                   double beta = 1.0);
  // theta identical for every triple.
  static SemanticPrior constant(std::size_t num_entities, std::size_t num_relations,
                                double theta = 0.0);

  Source source() const { return source_; }
  double beta() const { return beta_; }
  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }

  // beta * log eta(s, p, o).
  double log_prior(EntityId s, RelationId p, EntityId o) const {
    return table_[(static_cast<std::size_t>(s) * num_relations_ + p) * num_entities_ + o];
  }

 private:
  SemanticPrior(Source source, std::size_t ne, std::size_t nr, double beta)
      : source_(source), beta_(beta), num_entities_(ne), num_relations_(nr),
        table_(ne * nr * ne, 0.0) {}

  Source source_;
  double beta_;
  std::size_t num_entities_;
  std::size_t num_relations_;
  std::vector<double> table_;
};

// Denominator terms p(s), p(p), p(o) of the fused score.
struct SlotMarginals {
  std::vector<double> subject;
  std::vector<double> predicate;
  std::vector<double> object;

  static SlotMarginals from_counts(const TripleCountTable& table);
  static SlotMarginals uniform(std::size_t num_entities, std::size_t num_relations);
};

struct RankedPrediction {
  std::uint32_t subject_region = 0;
  std::uint32_t object_region = 0;
  EntityId s = 0;
  RelationId p = 0;
  EntityId o = 0;
  double log_score = 0;

  friend bool operator==(const RankedPrediction&, const RankedPrediction&) = default;
};

// Descending log_score, then ascending (subject_region, object_region, s, p, o).
bool ranks_before(const RankedPrediction& a, const RankedPrediction& b);

// log of eta(theta) * CNN_e(s|i_s) CNN_r(p|i_p) CNN_e(o|i_o) / (p(s) p(p) p(o)).
// Throws NumericError naming the first non-finite factor.
double log_joint_score(const SemanticPrior& prior, const SlotMarginals& marginals,
                       const DetectionSet& det, const PairScores& pair, EntityId s,
                       RelationId p, EntityId o);

// log CNN_e(s|i_s) + log CNN_r(p|i_p) + log CNN_e(o|i_o).
double visual_only_score(const DetectionSet& det, const PairScores& pair, EntityId s,
                         RelationId p, EntityId o);

struct RankOptions {
  std::size_t k = 100;
  // Keep the m best entity labels per region and predicates per pair before
  // scoring. 0 disables pruning, which makes the result exact.
  std::size_t prune_top_m = 10;
  bool visual_only = false;
};

// Top-k six-tuples of one image. `prior` and `marginals` are ignored in
// visual-only mode.
std::vector<RankedPrediction> rank_image(const SemanticPrior& prior,
                                         const SlotMarginals& marginals,
                                         const DetectionSet& det, const RankOptions& options);

// rank_image over many images; output order matches `sets` for any thread count.
std::vector<std::vector<RankedPrediction>> rank_images(const SemanticPrior& prior,
                                                       const SlotMarginals& marginals,
                                                       std::span<const DetectionSet> sets,
                                                       const RankOptions& options,
                                                       unsigned threads = 1);

// Appends one JSON line per prediction, ranks numbered from 1.
void write_ranked(std::ostream& out, const DetectionSet& det,
                  std::span<const RankedPrediction> ranked, const Vocabulary& vocab);

}  // namespace relrank
