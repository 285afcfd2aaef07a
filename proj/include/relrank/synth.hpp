#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "relrank/detection.hpp"
#include "relrank/kg.hpp"
#include "relrank/model.hpp"

namespace relrank {

struct SynthConfig {
  std::size_t entities = 20;
  std::size_t relations = 5;
  std::size_t images = 200;
  // Mean of the per-image Poisson tuple count (at least one per image).
  double tuples_per_image = 7.5;
  std::size_t planted_rank = 4;
  // Std-dev of the planted DistMult embeddings; larger values skew the
  // triple distribution harder.
  double planted_scale = 1.0;
  double test_fraction = 0.2;
  DetectionNoise noise{0.5, 0.5, 0.0};
  double image_width = 640;
  double image_height = 480;
  std::uint64_t seed = 7;
};

struct SynthCorpus {
  Vocabulary vocab;
  SemanticModel planted;
  std::vector<GroundTruthTuple> train;
  std::vector<GroundTruthTuple> test;
  // Noisy detections on the test images.
  std::vector<DetectionSet> test_detections;
  // Ground-truth boxes with one-hot entity scores and noisy predicate
  // scores: the predicate-detection input.
  std::vector<DetectionSet> predicate_detections;
};

// Planted-model corpus: a DistMult model with Gaussian embeddings defines
// triple probabilities proportional to exp(theta); each image draws a
// Poisson number of tuples from it, so aggregated counts are Poisson
// distributed. Images are split into train and test by test_fraction.
SynthCorpus synthesize_corpus(const SynthConfig& config);

}  // namespace relrank
