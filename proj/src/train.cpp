#include "relrank/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_set>

#include <fmt/core.h>

#include "relrank/log.hpp"
#include "relrank/parallel.hpp"

namespace relrank {

double poisson_cost(double theta, std::int64_t y) {
  if (y < 0) throw ValidationError("poisson_cost: negative count");
  if (!std::isfinite(theta) || theta > kThetaOverflowLimit) {
    throw NumericError(fmt::format("poisson_cost: theta {} overflows exp", theta));
  }
  return std::exp(theta) - static_cast<double>(y) * theta;
}

double poisson_cost_grad(double theta, std::int64_t y) {
  if (y < 0) throw ValidationError("poisson_cost_grad: negative count");
  if (!std::isfinite(theta) || theta > kThetaOverflowLimit) {
    throw NumericError(fmt::format("poisson_cost_grad: theta {} overflows exp", theta));
  }
  return std::exp(theta) - static_cast<double>(y);
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be finite and >= 0");
  }
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) throw ValidationError("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) throw ValidationError("adam_beta2 must be in [0, 1)");
  if (!(adam_epsilon > 0)) throw ValidationError("adam_epsilon must be > 0");
  if (epochs == 0) throw ValidationError("epochs must be >= 1");
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (!(negative_ratio >= 0) || !std::isfinite(negative_ratio)) {
    throw ValidationError("negative_ratio must be finite and >= 0");
  }
  if (!(weight_decay >= 0)) throw ValidationError("weight_decay must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},       {"adam_epsilon", c.adam_epsilon},
       {"epochs", c.epochs},               {"batch_size", c.batch_size},
       {"negative_ratio", c.negative_ratio}, {"seed", c.seed},
       {"weight_decay", c.weight_decay}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
    else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
    else if (key == "adam_epsilon") c.adam_epsilon = value.get<double>();
    else if (key == "epochs") c.epochs = value.get<std::size_t>();
    else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "negative_ratio") c.negative_ratio = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "weight_decay") c.weight_decay = value.get<double>();
    else throw ValidationError(fmt::format("unknown train config field '{}'", key));
  }
}

nlohmann::json to_json(const TrainReport& r, bool include_timing) {
  auto heldout = nlohmann::json::array();
  for (const auto& v : r.heldout_nll) {
    heldout.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  }
  nlohmann::json j = {{"train_cost", r.train_cost},
                      {"heldout_nll", heldout},
                      {"best_epoch", r.best_epoch},
                      {"clipped_evaluations", r.clipped_evaluations}};
  if (include_timing) j["epoch_seconds"] = r.epoch_seconds;
  return j;
}

double heldout_mean_nll(const SemanticModel& model, std::span<const HeldOutTriple> heldout) {
  if (heldout.empty()) throw ValidationError("held-out set is empty");
  double total = 0;
  for (const auto& h : heldout) {
    const double theta = score(model, h.triple.s, h.triple.p, h.triple.o);
    const double eta = std::exp(std::min(theta, kTrainingThetaClip));
    const auto y = static_cast<double>(h.count);
    total += eta - y * theta + std::lgamma(y + 1.0);
  }
  return total / static_cast<double>(heldout.size());
}

namespace {

struct Example {
  Triple triple;
  std::int64_t count = 0;
  double weight = 1.0;
};

class Adam {
 public:
  Adam(const ModelParams& shape, const TrainConfig& config)
      : config_(config), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

  void step(ModelParams& params, const ModelParams& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.adam_beta2, static_cast<double>(t_));
    const double b1 = config_.adam_beta1;
    const double b2 = config_.adam_beta2;
    const double lr = config_.learning_rate;
    const double eps = config_.adam_epsilon;
    const double wd = config_.weight_decay;

    std::vector<Matrix*> p_blocks, m_blocks, v_blocks;
    std::vector<const Matrix*> g_blocks;
    params.for_each_block([&](std::string_view, Matrix& b) { p_blocks.push_back(&b); });
    m_.for_each_block([&](std::string_view, Matrix& b) { m_blocks.push_back(&b); });
    v_.for_each_block([&](std::string_view, Matrix& b) { v_blocks.push_back(&b); });
    grad.for_each_block([&](std::string_view, const Matrix& b) { g_blocks.push_back(&b); });

    for (std::size_t b = 0; b < p_blocks.size(); ++b) {
      auto& x = p_blocks[b]->data;
      auto& m = m_blocks[b]->data;
      auto& v = v_blocks[b]->data;
      const auto& g = g_blocks[b]->data;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double gi = g[i] + wd * x[i];
        m[i] = b1 * m[i] + (1 - b1) * gi;
        v[i] = b2 * v[i] + (1 - b2) * gi * gi;
        x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }

 private:
  TrainConfig config_;
  ModelParams m_;
  ModelParams v_;
  std::uint64_t t_ = 0;
};

// Zero-count cells visited in one epoch. When the request covers every
// zero cell they are enumerated once with weight 1; otherwise cells are
// drawn uniformly with replacement and weighted so their sum estimates the
// sum over all zero cells.
class NegativeSampler {
 public:
  NegativeSampler(const TripleCountTable& table, double ratio)
      : ne_(table.num_entities()), nr_(table.num_relations()) {
    for (const auto& [t, c] : table.counts()) support_.insert(flat(t));
    const std::uint64_t zero_cells = table.num_cells() - support_.size();
    const auto requested = static_cast<std::uint64_t>(
        std::llround(ratio * static_cast<double>(table.num_nonzero())));
    if (requested == 0 || zero_cells == 0) return;
    if (requested >= zero_cells) {
      enumerate_all_ = true;
      for (std::uint64_t i = 0; i < table.num_cells(); ++i) {
        if (!support_.contains(i)) all_zero_.push_back(unflat(i));
      }
      return;
    }
    count_ = requested;
    weight_ = static_cast<double>(zero_cells) / static_cast<double>(requested);
  }

  template <typename Rng>
  void append(std::vector<Example>& out, Rng& rng) const {
    if (enumerate_all_) {
      for (const auto& t : all_zero_) out.push_back({t, 0, 1.0});
      return;
    }
    const std::uint64_t cells = static_cast<std::uint64_t>(ne_) * nr_ * ne_;
    std::uniform_int_distribution<std::uint64_t> pick(0, cells - 1);
    for (std::uint64_t n = 0; n < count_; ++n) {
      std::uint64_t i;
      do {
        i = pick(rng);
      } while (support_.contains(i));
      out.push_back({unflat(i), 0, weight_});
    }
  }

 private:
  std::uint64_t flat(const Triple& t) const {
    return (static_cast<std::uint64_t>(t.s) * nr_ + t.p) * ne_ + t.o;
  }
  Triple unflat(std::uint64_t i) const {
    return {static_cast<EntityId>(i / (static_cast<std::uint64_t>(nr_) * ne_)),
            static_cast<RelationId>((i / ne_) % nr_), static_cast<EntityId>(i % ne_)};
  }

  std::size_t ne_;
  std::size_t nr_;
  std::unordered_set<std::uint64_t> support_;
  bool enumerate_all_ = false;
  std::vector<Triple> all_zero_;
  std::uint64_t count_ = 0;
  double weight_ = 1.0;
};

// Gradient work is split into fixed-size chunks whose partial sums are
// reduced in chunk order, so results do not depend on the thread count.
constexpr std::size_t kChunkSize = 64;

struct ChunkResult {
  ModelParams grad;
  double cost = 0;
  std::uint64_t clipped = 0;
  bool finite = true;
};

void add_into(ModelParams& dst, const ModelParams& src) {
  std::vector<Matrix*> d;
  dst.for_each_block([&](std::string_view, Matrix& b) { d.push_back(&b); });
  std::size_t idx = 0;
  src.for_each_block([&](std::string_view, const Matrix& b) {
    auto& out = d[idx++]->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data[i];
  });
}

}  // namespace

TrainResult train(SemanticModel model, const SplitSpec& split, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  validate_model(model);
  const auto& table = split.train_counts;
  if (model.num_entities != table.num_entities() || model.num_relations != table.num_relations()) {
    throw ValidationError(fmt::format(
        "model vocabulary ({} entities, {} relations) does not match the split ({}, {})",
        model.num_entities, model.num_relations, table.num_entities(), table.num_relations()));
  }

  std::mt19937_64 rng(config.seed);
  const NegativeSampler sampler(table, config.negative_ratio);
  Adam adam(model.params, config);

  TrainResult result;
  auto& report = result.report;
  ModelParams best_params = model.params;
  double best_nll = std::numeric_limits<double>::infinity();
  const bool has_heldout = !split.heldout.empty();

  std::vector<Example> examples;
  std::vector<ChunkResult> chunks;
  ModelParams batch_grad = model.params.zeros_like();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    examples.clear();
    for (const auto& [t, c] : table.counts()) examples.push_back({t, c, 1.0});
    sampler.append(examples, rng);
    std::shuffle(examples.begin(), examples.end(), rng);

    double epoch_cost = 0;
    const std::size_t num_batches = (examples.size() + config.batch_size - 1) / config.batch_size;
    for (std::size_t batch = 0; batch < num_batches; ++batch) {
      const std::size_t begin = batch * config.batch_size;
      const std::size_t end = std::min(examples.size(), begin + config.batch_size);
      const std::size_t num_chunks = (end - begin + kChunkSize - 1) / kChunkSize;
      if (chunks.size() < num_chunks) chunks.resize(num_chunks);

      parallel_for(num_chunks, options.threads, [&](std::size_t c) {
        auto& chunk = chunks[c];
        if (chunk.grad.size() != model.params.size()) {
          chunk.grad = model.params.zeros_like();
        } else {
          chunk.grad.set_zero();
        }
        chunk.cost = 0;
        chunk.clipped = 0;
        chunk.finite = true;
        const std::size_t cb = begin + c * kChunkSize;
        const std::size_t ce = std::min(end, cb + kChunkSize);
        for (std::size_t i = cb; i < ce; ++i) {
          const auto& ex = examples[i];
          const double theta = score_unchecked(model, ex.triple.s, ex.triple.p, ex.triple.o);
          if (!std::isfinite(theta)) {
            chunk.finite = false;
            return;
          }
          if (theta > kTrainingThetaClip) ++chunk.clipped;
          const double eta = std::exp(std::min(theta, kTrainingThetaClip));
          const auto y = static_cast<double>(ex.count);
          chunk.cost += ex.weight * (eta - y * theta);
          accumulate_score_gradient(model, ex.triple.s, ex.triple.p, ex.triple.o,
                                    ex.weight * (eta - y), chunk.grad);
        }
      });

      batch_grad.set_zero();
      double batch_cost = 0;
      for (std::size_t c = 0; c < num_chunks; ++c) {
        if (!chunks[c].finite) batch_cost = std::numeric_limits<double>::quiet_NaN();
        batch_cost += chunks[c].cost;
        report.clipped_evaluations += chunks[c].clipped;
        add_into(batch_grad, chunks[c].grad);
      }
      if (!std::isfinite(batch_cost)) {
        throw NumericError(
            fmt::format("training diverged: non-finite cost at epoch {} batch {}", epoch, batch));
      }
      epoch_cost += batch_cost;
      adam.step(model.params, batch_grad);
    }

    report.train_cost.push_back(epoch_cost);
    if (has_heldout) {
      const double nll = heldout_mean_nll(model, split.heldout);
      if (!std::isfinite(nll)) {
        throw NumericError(fmt::format("training diverged: non-finite held-out NLL at epoch {}",
                                       epoch));
      }
      report.heldout_nll.push_back(nll);
      if (nll < best_nll) {
        best_nll = nll;
        best_params = model.params;
        report.best_epoch = epoch;
      }
    } else {
      report.heldout_nll.push_back(std::nullopt);
      report.best_epoch = epoch;
    }
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    log(LogLevel::kDebug, "epoch {}: cost {:.6g}", epoch, epoch_cost);
  }

  if (report.clipped_evaluations > 0) {
    log(LogLevel::kWarn, "theta exceeded {} in {} evaluations; eta was clipped",
        kTrainingThetaClip, report.clipped_evaluations);
  }
  if (has_heldout) model.params = std::move(best_params);
  result.model = std::move(model);
  return result;
}

RankSelection select_rank(ModelKind kind, const SplitSpec& split,
                          std::span<const std::size_t> ranks, const TrainConfig& config,
                          std::size_t hidden_dim, const TrainOptions& options) {
  if (ranks.empty()) throw ValidationError("select_rank needs at least one candidate rank");
  if (split.heldout.empty()) throw ValidationError("select_rank needs held-out triples");
  const auto& table = split.train_counts;

  RankSelection out;
  bool have_best = false;
  double best_nll = 0;
  for (const auto rank : ranks) {
    TrainResult trained;
    try {
      auto model = init_model(kind, table.num_entities(), table.num_relations(), rank,
                              hidden_dim, config.seed);
      trained = train(std::move(model), split, config, options);
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("rank {}: {}", rank, e.what()));
    } catch (const NumericError& e) {
      throw NumericError(fmt::format("rank {}: {}", rank, e.what()));
    }
    const double nll = *trained.report.heldout_nll.at(trained.report.best_epoch);
    out.ranks.push_back(rank);
    out.heldout_nll.push_back(nll);
    log(LogLevel::kInfo, "rank {}: held-out NLL {:.6f}", rank, nll);
    if (!have_best || nll < best_nll || (nll == best_nll && rank < out.best_rank)) {
      have_best = true;
      best_nll = nll;
      out.best_rank = rank;
      out.best_model = std::move(trained.model);
      out.best_report = std::move(trained.report);
    }
  }
  return out;
}

}  // namespace relrank
