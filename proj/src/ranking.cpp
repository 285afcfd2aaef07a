#include "relrank/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <queue>
#include <tuple>

#include <fmt/core.h>

#include "json.hpp"
#include "relrank/parallel.hpp"

namespace relrank {

SemanticPrior SemanticPrior::from_model(const SemanticModel& model, double beta) {
  validate_model(model);
  if (!(beta >= 0)) throw ValidationError("inverse temperature must be >= 0");
  SemanticPrior prior(Source::kModel, model.num_entities, model.num_relations, beta);
  std::size_t i = 0;
  for (const auto& item : score_all_triples(model)) {
    if (!std::isfinite(item.theta) || item.theta > 700.0) {
      throw NumericError(fmt::format("semantic model score for ({}, {}, {}) is {}",
                                     item.triple.s, item.triple.p, item.triple.o, item.theta));
    }
    prior.table_[i++] = beta * item.theta;
  }
  return prior;
}

SemanticPrior SemanticPrior::from_counts(const TripleCountTable& counts, double alpha,
                                         double beta) {
  if (!(alpha > 0)) throw ValidationError("count prior smoothing must be > 0");
  if (!(beta >= 0)) throw ValidationError("inverse temperature must be >= 0");
  const auto ne = counts.num_entities();
  const auto nr = counts.num_relations();
  SemanticPrior prior(Source::kCounts, ne, nr, beta);
  std::fill(prior.table_.begin(), prior.table_.end(), beta * std::log(alpha));
  for (const auto& [t, c] : counts.counts()) {
    prior.table_[(static_cast<std::size_t>(t.s) * nr + t.p) * ne + t.o] =
        beta * std::log(static_cast<double>(c) + alpha);
  }
  return prior;
}

SemanticPrior SemanticPrior::constant(std::size_t num_entities, std::size_t num_relations,
                                      double theta) {
  SemanticPrior prior(Source::kConstant, num_entities, num_relations, 1.0);
  std::fill(prior.table_.begin(), prior.table_.end(), theta);
  return prior;
}

SlotMarginals SlotMarginals::from_counts(const TripleCountTable& table) {
  const auto s = table.subject_marginal();
  const auto p = table.predicate_marginal();
  const auto o = table.object_marginal();
  return {{s.begin(), s.end()}, {p.begin(), p.end()}, {o.begin(), o.end()}};
}

SlotMarginals SlotMarginals::uniform(std::size_t num_entities, std::size_t num_relations) {
  const double e = 1.0 / static_cast<double>(num_entities);
  const double r = 1.0 / static_cast<double>(num_relations);
  return {std::vector<double>(num_entities, e), std::vector<double>(num_relations, r),
          std::vector<double>(num_entities, e)};
}

bool ranks_before(const RankedPrediction& a, const RankedPrediction& b) {
  if (a.log_score != b.log_score) return a.log_score > b.log_score;
  return std::tie(a.subject_region, a.object_region, a.s, a.p, a.o) <
         std::tie(b.subject_region, b.object_region, b.s, b.p, b.o);
}

namespace {

// Shared by log_joint_score and rank_image so both produce identical bits.
inline double fuse(double log_prior, double log_es, double log_rp, double log_eo,
                   double log_ms, double log_mp, double log_mo) {
  return log_prior + log_es + log_rp + log_eo - log_ms - log_mp - log_mo;
}

inline double fuse_visual(double log_es, double log_rp, double log_eo) {
  return log_es + log_rp + log_eo;
}

double checked_log(double value, const char* factor) {
  const double v = std::log(value);
  if (!std::isfinite(v)) {
    throw NumericError(fmt::format("{} = {} has no finite logarithm", factor, value));
  }
  return v;
}

void check_candidate(const DetectionSet& det, const PairScores& pair, EntityId s, RelationId p,
                     EntityId o) {
  if (pair.subject_region >= det.regions.size() || pair.object_region >= det.regions.size()) {
    throw ValidationError("pair references a region outside the detection set");
  }
  const auto& rs = det.regions[pair.subject_region].entity_scores;
  const auto& ro = det.regions[pair.object_region].entity_scores;
  if (s >= rs.size() || o >= ro.size() || p >= pair.predicate_scores.size()) {
    throw ValidationError(fmt::format("triple ({}, {}, {}) out of range", s, p, o));
  }
}

// Indices of the m largest scores, ties toward the smaller index.
std::vector<std::uint32_t> top_m(const std::vector<double>& scores, std::size_t m) {
  std::vector<std::uint32_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0u);
  if (m == 0 || m >= scores.size()) return idx;
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> logs_of(const std::vector<double>& values, const char* factor) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = checked_log(values[i], factor);
  return out;
}

}  // namespace

double log_joint_score(const SemanticPrior& prior, const SlotMarginals& marginals,
                       const DetectionSet& det, const PairScores& pair, EntityId s,
                       RelationId p, EntityId o) {
  check_candidate(det, pair, s, p, o);
  if (s >= prior.num_entities() || o >= prior.num_entities() || p >= prior.num_relations()) {
    throw ValidationError("triple outside the semantic prior's vocabulary");
  }
  const double lp = prior.log_prior(s, p, o);
  if (!std::isfinite(lp)) throw NumericError("semantic prior log eta(theta) is not finite");
  const double result =
      fuse(lp, checked_log(det.regions[pair.subject_region].entity_scores[s], "CNN_e(s|i_s)"),
           checked_log(pair.predicate_scores[p], "CNN_r(p|i_p)"),
           checked_log(det.regions[pair.object_region].entity_scores[o], "CNN_e(o|i_o)"),
           checked_log(marginals.subject.at(s), "p(s)"),
           checked_log(marginals.predicate.at(p), "p(p)"),
           checked_log(marginals.object.at(o), "p(o)"));
  if (!std::isfinite(result)) throw NumericError("joint score is not finite");
  return result;
}

double visual_only_score(const DetectionSet& det, const PairScores& pair, EntityId s,
                         RelationId p, EntityId o) {
  check_candidate(det, pair, s, p, o);
  return fuse_visual(
      checked_log(det.regions[pair.subject_region].entity_scores[s], "CNN_e(s|i_s)"),
      checked_log(pair.predicate_scores[p], "CNN_r(p|i_p)"),
      checked_log(det.regions[pair.object_region].entity_scores[o], "CNN_e(o|i_o)"));
}

std::vector<RankedPrediction> rank_image(const SemanticPrior& prior,
                                         const SlotMarginals& marginals,
                                         const DetectionSet& det, const RankOptions& options) {
  if (options.k == 0) throw ValidationError("k must be >= 1");
  if (det.regions.empty() || det.pairs.empty()) return {};

  const auto ne = det.regions.front().entity_scores.size();
  const auto nr = det.pairs.front().predicate_scores.size();
  if (!options.visual_only) {
    if (prior.num_entities() != ne || prior.num_relations() != nr ||
        marginals.subject.size() != ne || marginals.object.size() != ne ||
        marginals.predicate.size() != nr) {
      throw ValidationError(fmt::format(
          "image '{}': detection vocabulary ({} entities, {} relations) does not match the prior",
          det.image_id, ne, nr));
    }
  }

  std::vector<std::vector<double>> region_logs;
  std::vector<std::vector<std::uint32_t>> region_labels;
  for (const auto& r : det.regions) {
    region_logs.push_back(logs_of(r.entity_scores, "CNN_e"));
    region_labels.push_back(top_m(r.entity_scores, options.prune_top_m));
  }
  std::vector<double> log_ms, log_mp, log_mo;
  if (!options.visual_only) {
    log_ms = logs_of(marginals.subject, "p(s)");
    log_mp = logs_of(marginals.predicate, "p(p)");
    log_mo = logs_of(marginals.object, "p(o)");
  }

  // Max-heap on "ranks later": top() is the current worst of the kept k.
  const auto worse = [](const RankedPrediction& a, const RankedPrediction& b) {
    return ranks_before(a, b);
  };
  std::priority_queue<RankedPrediction, std::vector<RankedPrediction>, decltype(worse)> heap(
      worse);

  for (const auto& pair : det.pairs) {
    const auto& ls = region_logs[pair.subject_region];
    const auto& lo = region_logs[pair.object_region];
    const auto log_rp = logs_of(pair.predicate_scores, "CNN_r");
    const auto predicates = top_m(pair.predicate_scores, options.prune_top_m);
    for (const auto s : region_labels[pair.subject_region]) {
      for (const auto p : predicates) {
        for (const auto o : region_labels[pair.object_region]) {
          RankedPrediction cand{pair.subject_region, pair.object_region, s, p, o, 0.0};
          if (options.visual_only) {
            cand.log_score = fuse_visual(ls[s], log_rp[p], lo[o]);
          } else {
            cand.log_score = fuse(prior.log_prior(s, p, o), ls[s], log_rp[p], lo[o], log_ms[s],
                                  log_mp[p], log_mo[o]);
          }
          if (!std::isfinite(cand.log_score)) {
            throw NumericError(fmt::format("image '{}': non-finite score for ({}, {}, {})",
                                           det.image_id, s, p, o));
          }
          if (heap.size() < options.k) {
            heap.push(cand);
          } else if (ranks_before(cand, heap.top())) {
            heap.pop();
            heap.push(cand);
          }
        }
      }
    }
  }

  std::vector<RankedPrediction> out;
  out.reserve(heap.size());
  while (!heap.empty()) {
    out.push_back(heap.top());
    heap.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<std::vector<RankedPrediction>> rank_images(const SemanticPrior& prior,
                                                       const SlotMarginals& marginals,
                                                       std::span<const DetectionSet> sets,
                                                       const RankOptions& options,
                                                       unsigned threads) {
  std::vector<std::vector<RankedPrediction>> out(sets.size());
  parallel_for(sets.size(), threads,
               [&](std::size_t i) { out[i] = rank_image(prior, marginals, sets[i], options); });
  return out;
}

void write_ranked(std::ostream& out, const DetectionSet& det,
                  std::span<const RankedPrediction> ranked, const Vocabulary& vocab) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    const nlohmann::json j = {{"image_id", det.image_id},
                              {"rank", i + 1},
                              {"log_score", r.log_score},
                              {"subject", vocab.entity_label(r.s)},
                              {"predicate", vocab.relation_label(r.p)},
                              {"object", vocab.entity_label(r.o)},
                              {"subject_box", det.regions[r.subject_region].box.as_array()},
                              {"object_box", det.regions[r.object_region].box.as_array()}};
    out << j.dump() << '\n';
  }
}

}  // namespace relrank
