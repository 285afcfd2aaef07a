#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "relrank/kg.hpp"
#include "relrank/model.hpp"

namespace relrank {

// Past this value exp(theta) is treated as an overflow.
inline constexpr double kThetaOverflowLimit = 700.0;
// exp(theta) is evaluated at min(theta, kTrainingThetaClip) during training.
inline constexpr double kTrainingThetaClip = 30.0;

// Poisson negative log-likelihood with eta = exp(theta), dropping log(y!):
// exp(theta) - y * theta. Throws NumericError for theta > 700.
double poisson_cost(double theta, std::int64_t y);
// d/dtheta of poisson_cost: exp(theta) - y.
double poisson_cost_grad(double theta, std::int64_t y);

struct TrainConfig {
  double learning_rate = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  // Zero-count cells sampled per nonzero triple per epoch.
  double negative_ratio = 10.0;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;

  void validate() const;
};

// Field names match TrainConfig members; missing fields keep defaults.
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainReport {
  std::vector<double> train_cost;
  // Mean held-out Poisson NLL per epoch; empty optionals without held-out data.
  std::vector<std::optional<double>> heldout_nll;
  std::size_t best_epoch = 0;
  std::vector<double> epoch_seconds;
  std::uint64_t clipped_evaluations = 0;
};

nlohmann::json to_json(const TrainReport& report, bool include_timing = true);

struct TrainOptions {
  // 0 selects std::thread::hardware_concurrency(). Results do not depend on it.
  unsigned threads = 1;
};

struct TrainResult {
  SemanticModel model;
  TrainReport report;
};

// Mean of exp(theta) - y*theta + log(y!) over the held-out triples.
double heldout_mean_nll(const SemanticModel& model, std::span<const HeldOutTriple> heldout);

// Minimizes the Poisson cost with Adam. Each epoch visits every nonzero
// training triple plus sampled zero cells and returns the parameters from
// the epoch with the lowest held-out NLL (the final epoch when there is no
// held-out data). Throws NumericError when the cost becomes non-finite.
TrainResult train(SemanticModel model, const SplitSpec& split, const TrainConfig& config,
                  const TrainOptions& options = {});

struct RankSelection {
  std::size_t best_rank = 0;
  std::vector<std::size_t> ranks;
  std::vector<double> heldout_nll;  // parallel to `ranks`
  SemanticModel best_model;
  TrainReport best_report;
};

// Trains one model per candidate rank and picks the lowest held-out NLL,
// breaking ties toward the smaller rank.
RankSelection select_rank(ModelKind kind, const SplitSpec& split,
                          std::span<const std::size_t> ranks, const TrainConfig& config,
                          std::size_t hidden_dim = 0, const TrainOptions& options = {});

}  // namespace relrank
