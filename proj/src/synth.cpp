#include "relrank/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/core.h>

namespace relrank {

SynthCorpus synthesize_corpus(const SynthConfig& config) {
  if (config.entities == 0 || config.relations == 0 || config.images == 0 ||
      config.planted_rank == 0) {
    throw ValidationError("synthetic corpus sizes must be >= 1");
  }
  if (!(config.tuples_per_image > 0)) throw ValidationError("tuples_per_image must be > 0");
  if (!(config.test_fraction >= 0 && config.test_fraction < 1)) {
    throw ValidationError("test_fraction must be in [0, 1)");
  }
  if (!(config.planted_scale > 0)) throw ValidationError("planted_scale must be > 0");
  if (!(config.image_width > 40 && config.image_height > 40)) {
    throw ValidationError("image must be larger than 40x40 pixels");
  }

  std::vector<std::string> entities, relations;
  for (std::size_t i = 0; i < config.entities; ++i) entities.push_back(fmt::format("entity{:02}", i));
  for (std::size_t i = 0; i < config.relations; ++i) relations.push_back(fmt::format("rel{:02}", i));

  SynthCorpus corpus;
  corpus.vocab = Vocabulary(std::move(entities), std::move(relations));

  std::mt19937_64 rng(config.seed);
  corpus.planted = init_model(ModelKind::kDistMult, config.entities, config.relations,
                              config.planted_rank, 0, config.seed);
  std::normal_distribution<double> gauss(0.0, config.planted_scale);
  corpus.planted.params.for_each_block([&](std::string_view, Matrix& block) {
    for (auto& v : block.data) v = gauss(rng);
  });

  // Triple distribution proportional to exp(theta); per-image counts are
  // Poisson, so aggregated cell counts are Poisson as well.
  std::vector<double> weights;
  std::vector<Triple> cells;
  double max_theta = -std::numeric_limits<double>::infinity();
  for (const auto& item : score_all_triples(corpus.planted)) {
    cells.push_back(item.triple);
    weights.push_back(item.theta);
    max_theta = std::max(max_theta, item.theta);
  }
  for (auto& w : weights) w = std::exp(w - max_theta);
  std::discrete_distribution<std::size_t> pick_cell(weights.begin(), weights.end());
  std::poisson_distribution<int> tuple_count(config.tuples_per_image);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto random_box = [&] {
    const double max_w = std::min(200.0, config.image_width / 2);
    const double max_h = std::min(200.0, config.image_height / 2);
    const double w = 20.0 + unit(rng) * (max_w - 20.0);
    const double h = 20.0 + unit(rng) * (max_h - 20.0);
    const double x1 = std::floor(unit(rng) * (config.image_width - w));
    const double y1 = std::floor(unit(rng) * (config.image_height - h));
    return Box{x1, y1, x1 + std::round(w), y1 + std::round(h)};
  };

  const auto num_test = static_cast<std::size_t>(
      std::llround(config.test_fraction * static_cast<double>(config.images)));
  const std::size_t first_test = config.images - num_test;
  for (std::size_t image = 0; image < config.images; ++image) {
    const auto image_id = fmt::format("img{:05}", image);
    const int n = std::max(1, tuple_count(rng));
    auto& target = image < first_test ? corpus.train : corpus.test;
    for (int t = 0; t < n; ++t) {
      const auto& cell = cells[pick_cell(rng)];
      GroundTruthTuple tuple;
      tuple.image_id = image_id;
      tuple.subject = cell.s;
      tuple.predicate = cell.p;
      tuple.object = cell.o;
      tuple.subject_box = random_box();
      tuple.object_box = random_box();
      target.push_back(std::move(tuple));
    }
  }

  corpus.test_detections =
      synthesize_detections(corpus.test, corpus.vocab, config.noise, config.seed + 1);
  corpus.predicate_detections = synthesize_detections(
      corpus.test, corpus.vocab, DetectionNoise{0.0, config.noise.predicate, 0.0},
      config.seed + 2);
  return corpus;
}

}  // namespace relrank
