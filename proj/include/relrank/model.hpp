#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relrank/common.hpp"

namespace relrank {

enum class ModelKind { kDistMult, kComplEx, kMultiwayNN, kRescal };

std::string_view to_string(ModelKind kind);
// Accepts "distmult", "complex", "multiway-nn" (or "mlp"), "rescal".
ModelKind parse_model_kind(std::string_view name);

// Row-major dense matrix. An empty matrix marks an absent parameter block.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  bool empty() const { return data.empty(); }
  void set_zero() { std::fill(data.begin(), data.end(), 0.0); }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// All parameter blocks of a semantic model. Gradients use the same layout.
struct ModelParams {
  Matrix entity_real;        // |E| x d, a(.) or Re(a(.))
  Matrix entity_imag;        // |E| x d, ComplEx only
  Matrix relation_real;      // |R| x d, r(.) or Re(r(.)); absent for RESCAL
  Matrix relation_imag;      // |R| x d, ComplEx only
  Matrix relation_matrices;  // |R| x (d*d), RESCAL only, row-major R(p)
  Matrix nn_weight;          // d_h x 3d, MultiwayNN only
  Matrix nn_out;             // 1 x d_h, MultiwayNN only

  // Visits present blocks in checkpoint order as (name, matrix).
  template <typename F>
  void for_each_block(F&& f) {
    visit_blocks(*this, f);
  }
  template <typename F>
  void for_each_block(F&& f) const {
    visit_blocks(*this, f);
  }

  ModelParams zeros_like() const;
  void set_zero();
  std::size_t size() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  template <typename Self, typename F>
  static void visit_blocks(Self& self, F& f) {
    const auto visit = [&](std::string_view name, auto& m) {
      if (!m.empty()) f(name, m);
    };
    visit("entity_real", self.entity_real);
    visit("entity_imag", self.entity_imag);
    visit("relation_real", self.relation_real);
    visit("relation_imag", self.relation_imag);
    visit("relation_matrices", self.relation_matrices);
    visit("nn_weight", self.nn_weight);
    visit("nn_out", self.nn_out);
  }
};

struct SemanticModel {
  ModelKind kind = ModelKind::kDistMult;
  std::size_t rank = 0;
  std::size_t hidden_dim = 0;  // MultiwayNN only, 0 otherwise
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::uint64_t seed = 0;
  ModelParams params;
};

// Gaussian(0, 0.1/sqrt(rank)) initialization of exactly the blocks `kind`
// needs. hidden_dim == 0 selects hidden_dim = rank for MultiwayNN.
SemanticModel init_model(ModelKind kind, std::size_t num_entities, std::size_t num_relations,
                         std::size_t rank, std::size_t hidden_dim, std::uint64_t seed);

// Checks block presence, shapes, and finiteness. Throws ValidationError.
void validate_model(const SemanticModel& model);

// theta(s, p, o). Throws ValidationError on out-of-range ids.
double score(const SemanticModel& model, EntityId s, RelationId p, EntityId o);
// Same without id checks, for hot loops over known-valid ids.
double score_unchecked(const SemanticModel& model, EntityId s, RelationId p, EntityId o);

// d theta / d params, dense and parameter-shaped; untouched rows are zero.
ModelParams score_gradients(const SemanticModel& model, EntityId s, RelationId p, EntityId o);

// grad += scale * d theta / d params. `grad` must have the model's layout.
void accumulate_score_gradient(const SemanticModel& model, EntityId s, RelationId p,
                               EntityId o, double scale, ModelParams& grad);

struct ScoredTriple {
  Triple triple;
  double theta = 0;
};

// Lazy enumeration of E x R x E in lexicographic (s, p, o) order.
class TripleScores {
 public:
  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = ScoredTriple;
    using difference_type = std::ptrdiff_t;
    using pointer = const ScoredTriple*;
    using reference = ScoredTriple;

    iterator() = default;
    iterator(const SemanticModel* model, std::uint64_t index) : model_(model), index_(index) {}

    ScoredTriple operator*() const;
    iterator& operator++() {
      ++index_;
      return *this;
    }
    iterator operator++(int) {
      auto copy = *this;
      ++index_;
      return copy;
    }
    friend bool operator==(const iterator& a, const iterator& b) { return a.index_ == b.index_; }

   private:
    const SemanticModel* model_ = nullptr;
    std::uint64_t index_ = 0;
  };

  explicit TripleScores(const SemanticModel& model) : model_(&model) {}

  iterator begin() const { return {model_, 0}; }
  iterator end() const { return {model_, size()}; }
  std::uint64_t size() const {
    return static_cast<std::uint64_t>(model_->num_entities) * model_->num_relations *
           model_->num_entities;
  }

 private:
  const SemanticModel* model_;
};

inline TripleScores score_all_triples(const SemanticModel& model) { return TripleScores(model); }

}  // namespace relrank
