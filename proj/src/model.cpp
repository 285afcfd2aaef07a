#include "relrank/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <string>

#include <fmt/core.h>

namespace relrank {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kDistMult:
      return "distmult";
    case ModelKind::kComplEx:
      return "complex";
    case ModelKind::kMultiwayNN:
      return "multiway-nn";
    case ModelKind::kRescal:
      return "rescal";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "distmult") return ModelKind::kDistMult;
  if (lower == "complex") return ModelKind::kComplEx;
  if (lower == "multiway-nn" || lower == "multiwaynn" || lower == "mlp") {
    return ModelKind::kMultiwayNN;
  }
  if (lower == "rescal") return ModelKind::kRescal;
  throw ValidationError(fmt::format("unknown model kind '{}'", name));
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out;
  const auto shape = [](const Matrix& m) { return m.empty() ? Matrix() : Matrix(m.rows, m.cols); };
  out.entity_real = shape(entity_real);
  out.entity_imag = shape(entity_imag);
  out.relation_real = shape(relation_real);
  out.relation_imag = shape(relation_imag);
  out.relation_matrices = shape(relation_matrices);
  out.nn_weight = shape(nn_weight);
  out.nn_out = shape(nn_out);
  return out;
}

void ModelParams::set_zero() {
  for_each_block([](std::string_view, Matrix& m) { std::fill(m.data.begin(), m.data.end(), 0.0); });
}

std::size_t ModelParams::size() const {
  std::size_t n = 0;
  for_each_block([&](std::string_view, const Matrix& m) { n += m.data.size(); });
  return n;
}

SemanticModel init_model(ModelKind kind, std::size_t num_entities, std::size_t num_relations,
                         std::size_t rank, std::size_t hidden_dim, std::uint64_t seed) {
  if (num_entities == 0 || num_relations == 0) {
    throw ValidationError("vocabulary sizes must be positive");
  }
  if (rank == 0) throw ValidationError("rank must be >= 1");

  SemanticModel m;
  m.kind = kind;
  m.rank = rank;
  m.num_entities = num_entities;
  m.num_relations = num_relations;
  m.seed = seed;
  m.hidden_dim = kind == ModelKind::kMultiwayNN ? (hidden_dim == 0 ? rank : hidden_dim) : 0;

  auto& p = m.params;
  p.entity_real = Matrix(num_entities, rank);
  switch (kind) {
    case ModelKind::kDistMult:
      p.relation_real = Matrix(num_relations, rank);
      break;
    case ModelKind::kComplEx:
      p.entity_imag = Matrix(num_entities, rank);
      p.relation_real = Matrix(num_relations, rank);
      p.relation_imag = Matrix(num_relations, rank);
      break;
    case ModelKind::kMultiwayNN:
      p.relation_real = Matrix(num_relations, rank);
      p.nn_weight = Matrix(m.hidden_dim, 3 * rank);
      p.nn_out = Matrix(1, m.hidden_dim);
      break;
    case ModelKind::kRescal:
      p.relation_matrices = Matrix(num_relations, rank * rank);
      break;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.1 / std::sqrt(static_cast<double>(rank)));
  p.for_each_block([&](std::string_view, Matrix& block) {
    for (auto& v : block.data) v = gauss(rng);
  });
  return m;
}

void validate_model(const SemanticModel& m) {
  if (m.rank == 0) throw ValidationError("model rank must be >= 1");
  if (m.num_entities == 0 || m.num_relations == 0) {
    throw ValidationError("model vocabulary sizes must be positive");
  }
  const auto d = m.rank;
  const auto& p = m.params;
  const auto expect = [](const Matrix& block, bool present, std::size_t rows, std::size_t cols,
                         const char* name) {
    if (!present) {
      if (!block.empty()) throw ValidationError(fmt::format("unexpected block {}", name));
      return;
    }
    if (block.rows != rows || block.cols != cols || block.data.size() != rows * cols) {
      throw ValidationError(fmt::format("block {} has shape {}x{}, expected {}x{}", name,
                                        block.rows, block.cols, rows, cols));
    }
    for (double v : block.data) {
      if (!std::isfinite(v)) throw ValidationError(fmt::format("block {} is not finite", name));
    }
  };
  const bool complex = m.kind == ModelKind::kComplEx;
  const bool mlp = m.kind == ModelKind::kMultiwayNN;
  const bool rescal = m.kind == ModelKind::kRescal;
  if (mlp && m.hidden_dim == 0) throw ValidationError("multiway-nn hidden_dim must be >= 1");
  expect(p.entity_real, true, m.num_entities, d, "entity_real");
  expect(p.entity_imag, complex, m.num_entities, d, "entity_imag");
  expect(p.relation_real, !rescal, m.num_relations, d, "relation_real");
  expect(p.relation_imag, complex, m.num_relations, d, "relation_imag");
  expect(p.relation_matrices, rescal, m.num_relations, d * d, "relation_matrices");
  expect(p.nn_weight, mlp, m.hidden_dim, 3 * d, "nn_weight");
  expect(p.nn_out, mlp, 1, m.hidden_dim, "nn_out");
}

namespace {

void check_ids(const SemanticModel& m, EntityId s, RelationId p, EntityId o) {
  if (s >= m.num_entities || o >= m.num_entities || p >= m.num_relations) {
    throw ValidationError(fmt::format("triple ({}, {}, {}) out of range for |E|={}, |R|={}", s, p,
                                      o, m.num_entities, m.num_relations));
  }
}

// Hidden pre-activations A [a(s), r(p), a(o)].
void mlp_hidden(const SemanticModel& m, EntityId s, RelationId p, EntityId o,
                std::vector<double>& hidden) {
  const auto d = m.rank;
  const auto& P = m.params;
  const auto as = P.entity_real.row(s);
  const auto rp = P.relation_real.row(p);
  const auto ao = P.entity_real.row(o);
  hidden.assign(m.hidden_dim, 0.0);
  for (std::size_t k = 0; k < m.hidden_dim; ++k) {
    const auto w = P.nn_weight.row(k);
    double acc = 0;
    for (std::size_t j = 0; j < d; ++j) acc += w[j] * as[j];
    for (std::size_t j = 0; j < d; ++j) acc += w[d + j] * rp[j];
    for (std::size_t j = 0; j < d; ++j) acc += w[2 * d + j] * ao[j];
    hidden[k] = acc;
  }
}

}  // namespace

double score_unchecked(const SemanticModel& m, EntityId s, RelationId p, EntityId o) {
  const auto d = m.rank;
  const auto& P = m.params;
  switch (m.kind) {
    case ModelKind::kDistMult: {
      const auto as = P.entity_real.row(s);
      const auto rp = P.relation_real.row(p);
      const auto ao = P.entity_real.row(o);
      double acc = 0;
      for (std::size_t j = 0; j < d; ++j) acc += rp[j] * (as[j] * ao[j]);  // symmetric in s and o bit-for-bit
      return acc;
    }
    case ModelKind::kComplEx: {
      const auto sr = P.entity_real.row(s);
      const auto si = P.entity_imag.row(s);
      const auto pr = P.relation_real.row(p);
      const auto pi = P.relation_imag.row(p);
      const auto orl = P.entity_real.row(o);
      const auto oi = P.entity_imag.row(o);
      double acc = 0;
      for (std::size_t j = 0; j < d; ++j) {
        acc += sr[j] * pr[j] * orl[j] + si[j] * pr[j] * oi[j] + sr[j] * pi[j] * oi[j] -
               si[j] * pi[j] * orl[j];
      }
      return acc;
    }
    case ModelKind::kMultiwayNN: {
      thread_local std::vector<double> hidden;
      mlp_hidden(m, s, p, o, hidden);
      const auto beta = P.nn_out.row(0);
      double acc = 0;
      for (std::size_t k = 0; k < m.hidden_dim; ++k) acc += beta[k] * std::tanh(hidden[k]);
      return acc;
    }
    case ModelKind::kRescal: {
      const auto as = P.entity_real.row(s);
      const auto R = P.relation_matrices.row(p);
      const auto ao = P.entity_real.row(o);
      double acc = 0;
      for (std::size_t i = 0; i < d; ++i) {
        double row = 0;
        for (std::size_t j = 0; j < d; ++j) row += R[i * d + j] * ao[j];
        acc += as[i] * row;
      }
      return acc;
    }
  }
  return 0.0;
}

double score(const SemanticModel& m, EntityId s, RelationId p, EntityId o) {
  check_ids(m, s, p, o);
  return score_unchecked(m, s, p, o);
}

void accumulate_score_gradient(const SemanticModel& m, EntityId s, RelationId p, EntityId o,
                               double scale, ModelParams& g) {
  const auto d = m.rank;
  const auto& P = m.params;
  switch (m.kind) {
    case ModelKind::kDistMult: {
      const auto as = P.entity_real.row(s);
      const auto rp = P.relation_real.row(p);
      const auto ao = P.entity_real.row(o);
      auto gs = g.entity_real.row(s);
      auto gp = g.relation_real.row(p);
      auto go = g.entity_real.row(o);
      for (std::size_t j = 0; j < d; ++j) {
        // Read inputs before writing: gs and go alias when s == o.
        const double a = as[j], r = rp[j], b = ao[j];
        gs[j] += scale * r * b;
        gp[j] += scale * a * b;
        go[j] += scale * a * r;
      }
      return;
    }
    case ModelKind::kComplEx: {
      const auto sr = P.entity_real.row(s);
      const auto si = P.entity_imag.row(s);
      const auto pr = P.relation_real.row(p);
      const auto pi = P.relation_imag.row(p);
      const auto orl = P.entity_real.row(o);
      const auto oi = P.entity_imag.row(o);
      auto gsr = g.entity_real.row(s);
      auto gsi = g.entity_imag.row(s);
      auto gpr = g.relation_real.row(p);
      auto gpi = g.relation_imag.row(p);
      auto gor = g.entity_real.row(o);
      auto goi = g.entity_imag.row(o);
      for (std::size_t j = 0; j < d; ++j) {
        const double a = sr[j], b = si[j], c = pr[j], e = pi[j], f = orl[j], h = oi[j];
        gsr[j] += scale * (c * f + e * h);
        gsi[j] += scale * (c * h - e * f);
        gpr[j] += scale * (a * f + b * h);
        gpi[j] += scale * (a * h - b * f);
        gor[j] += scale * (a * c - b * e);
        goi[j] += scale * (b * c + a * e);
      }
      return;
    }
    case ModelKind::kMultiwayNN: {
      thread_local std::vector<double> hidden;
      mlp_hidden(m, s, p, o, hidden);
      const auto as = P.entity_real.row(s);
      const auto rp = P.relation_real.row(p);
      const auto ao = P.entity_real.row(o);
      const auto beta = P.nn_out.row(0);
      auto gbeta = g.nn_out.row(0);
      thread_local std::vector<double> input_grad;
      input_grad.assign(3 * d, 0.0);
      for (std::size_t k = 0; k < m.hidden_dim; ++k) {
        const double t = std::tanh(hidden[k]);
        gbeta[k] += scale * t;
        const double delta = beta[k] * (1.0 - t * t);
        const auto w = P.nn_weight.row(k);
        auto gw = g.nn_weight.row(k);
        for (std::size_t j = 0; j < d; ++j) {
          gw[j] += scale * delta * as[j];
          gw[d + j] += scale * delta * rp[j];
          gw[2 * d + j] += scale * delta * ao[j];
        }
        for (std::size_t j = 0; j < 3 * d; ++j) input_grad[j] += delta * w[j];
      }
      auto gs = g.entity_real.row(s);
      auto gp = g.relation_real.row(p);
      auto go = g.entity_real.row(o);
      for (std::size_t j = 0; j < d; ++j) {
        gs[j] += scale * input_grad[j];
        gp[j] += scale * input_grad[d + j];
        go[j] += scale * input_grad[2 * d + j];
      }
      return;
    }
    case ModelKind::kRescal: {
      const auto as = P.entity_real.row(s);
      const auto R = P.relation_matrices.row(p);
      const auto ao = P.entity_real.row(o);
      auto gR = g.relation_matrices.row(p);
      thread_local std::vector<double> gs_local, go_local;
      gs_local.assign(d, 0.0);
      go_local.assign(d, 0.0);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          gs_local[i] += R[i * d + j] * ao[j];
          go_local[j] += as[i] * R[i * d + j];
          gR[i * d + j] += scale * as[i] * ao[j];
        }
      }
      auto gs = g.entity_real.row(s);
      for (std::size_t j = 0; j < d; ++j) gs[j] += scale * gs_local[j];
      auto go = g.entity_real.row(o);
      for (std::size_t j = 0; j < d; ++j) go[j] += scale * go_local[j];
      return;
    }
  }
}

ModelParams score_gradients(const SemanticModel& m, EntityId s, RelationId p, EntityId o) {
  check_ids(m, s, p, o);
  ModelParams g = m.params.zeros_like();
  accumulate_score_gradient(m, s, p, o, 1.0, g);
  return g;
}

ScoredTriple TripleScores::iterator::operator*() const {
  const auto ne = model_->num_entities;
  const auto nr = model_->num_relations;
  const auto o = static_cast<EntityId>(index_ % ne);
  const auto p = static_cast<RelationId>((index_ / ne) % nr);
  const auto s = static_cast<EntityId>(index_ / (ne * nr));
  return {{s, p, o}, score_unchecked(*model_, s, p, o)};
}

}  // namespace relrank
