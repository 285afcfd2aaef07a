#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relrank/box.hpp"
#include "relrank/kg.hpp"

namespace relrank {

// Score assigned to labels omitted from a detection record. Keeps every
// log-score finite.
inline constexpr double kScoreFloor = 1e-12;

// A candidate region with unnormalized entity scores CNN_e(. | region).
struct Region {
  Box box;
  std::vector<double> entity_scores;  // indexed by EntityId
};

// Predicate scores CNN_r(. | union box) for an ordered region pair.
struct PairScores {
  std::uint32_t subject_region = 0;
  std::uint32_t object_region = 0;
  std::vector<double> predicate_scores;  // indexed by RelationId
};

struct DetectionSet {
  std::string image_id;
  std::vector<Region> regions;
  std::vector<PairScores> pairs;
};

struct DetectionOptions {
  // Also pair each region with itself.
  bool allow_self_pairs = false;
};

// Checks every DetectionSet invariant; throws ValidationError naming the
// image and the offending field or pair.
void validate_detections(const DetectionSet& det, const Vocabulary& vocab,
                         const DetectionOptions& options = {});

// JSON lines, one image per line. Labels missing from a score map get
// kScoreFloor.
std::vector<DetectionSet> load_detections(const std::filesystem::path& path,
                                          const Vocabulary& vocab,
                                          const DetectionOptions& options = {});
// Writes every score explicitly; load_detections reads them back bit-exactly.
void save_detections(const std::filesystem::path& path, std::span<const DetectionSet> sets,
                     const Vocabulary& vocab);

struct DetectionNoise {
  // Scale of the uniform score given to wrong entity labels. The true label
  // scores 1, so values above 1 make regions ambiguous.
  double entity = 0.0;
  // Same for wrong predicates and for pairs without an annotated relation.
  double predicate = 0.0;
  // Each box coordinate moves by up to this fraction of the box size.
  double box_jitter = 0.0;
};

// Builds detections from ground truth: one region per distinct box per
// image (first-appearance order), all ordered pairs, true labels scoring 1
// and others noise-scaled uniform. With zero noise the scores are one-hot
// up to kScoreFloor.
std::vector<DetectionSet> synthesize_detections(std::span<const GroundTruthTuple> tuples,
                                                const Vocabulary& vocab,
                                                const DetectionNoise& noise, std::uint64_t seed,
                                                const DetectionOptions& options = {});
inline std::vector<DetectionSet> synthesize_detections(std::span<const GroundTruthTuple> tuples,
                                                       const Vocabulary& vocab, double noise,
                                                       std::uint64_t seed) {
  return synthesize_detections(tuples, vocab, DetectionNoise{noise, noise, 0.0}, seed);
}

}  // namespace relrank
