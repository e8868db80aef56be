#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emerg/autodiff.hpp"
#include "emerg/data.hpp"
#include "emerg/graph.hpp"
#include "emerg/nn.hpp"
#include "emerg/params.hpp"

namespace emerg::model {

using ad::Combine;
using ad::Var;

// `residual` exists only to contrast orders in tests.
enum class GnnMode { emerg, residual };

struct ModelConfig {
  std::size_t layers = 2;  // N_l
  std::size_t heads = 2;   // N_h, must divide N_d
  Combine op = Combine::product;
  std::optional<std::size_t> k_sparse;  // unset: ceil(N'^2 / 2)
  bool sparsify = true;
  bool mask = true;
  std::vector<std::size_t> hyper_hidden{32};
  std::vector<std::size_t> c1_hidden{32};
  std::vector<std::size_t> c2_hidden{16};
};

// h_prev, h0: [N', N_d] or [B, N', N_d]; adj: [N', N']; wg: [N_d, N_d].
// emerg:    op(h_prev, (adj h0) wg)
// residual: h_prev + h_prev * ((adj h_prev) wg)
Var gnn_layer(const Var& h_prev, const Var& h0, const Var& adj, const Var& wg, Combine op,
              GnnMode mode = GnnMode::emerg);

// states[l] = h^(l) for l = 0..N_l.
struct NodeStates {
  std::vector<Var> states;
};

NodeStates run_gnn(const Var& h0, std::span<const Var> adjacency, std::span<const Var> wg, Combine op,
                   GnnMode mode = GnnMode::emerg);

struct HeadWeights {
  Var q, k, v;  // each [N_d, N_d / N_h]
};

// h: [L, N_d] or [G, L, N_d]; output has the same shape.
Var attention_fuse(const Var& h, std::span<const HeadWeights> heads);

// fused: [B * N', L, N_d] -> c: [B, N'] in (0, 1).
Var contribution(const ad::MlpSpec& c1, const ad::Binding& params, const Var& fused, std::size_t batch);
// -> probabilities [B].
Var predict(const ad::MlpSpec& c2, const ad::Binding& params, const Var& fused, const Var& c);

struct ForwardTrace {
  Var h0;
  graph::AdjacencyStack stack;
  NodeStates nodes;
  Var fused;
  Var c;
  Var probs;
};

class Model {
 public:
  Model(data::FeatureSchema schema, ModelConfig cfg);

  const data::FeatureSchema& schema() const { return schema_; }
  const ModelConfig& config() const { return cfg_; }
  std::size_t nodes() const { return schema_.num_features(); }
  std::size_t dim() const { return schema_.embedding_dim(); }
  const ad::MlpSpec& hyper() const { return hyper_; }
  const ad::MlpSpec& c1() const { return c1_; }
  const ad::MlpSpec& c2() const { return c2_; }

  static std::string gnn_name(std::size_t layer);  // 1-based
  static std::string head_name(std::size_t head, char which);

  // Embedding tables, hypernetwork, GNN, attention and predictor weights.
  void init(ad::ParamStore& store, ad::Rng& rng) const;

  // Ā^(1) for an item from its feature values (row of any of its records).
  Var generate_adjacency(const ad::Binding& params, const data::RawInteraction& item_record,
                         const Var& id_override = {}) const;
  graph::AdjacencyStack stack(const Var& bar1) const;

  // Probabilities for `records`, all of one item, under the given item graph
  // and optional item ID embedding.
  Var forward(const ad::Binding& params, const data::InteractionTable& table, std::span<const std::size_t> records,
              const Var& bar1, const Var& id_override = {}) const;
  ForwardTrace forward_trace(const ad::Binding& params, const data::InteractionTable& table,
                             std::span<const std::size_t> records, const Var& bar1,
                             const Var& id_override = {}) const;
  // Same, from a precomputed stack.
  ForwardTrace forward_stack(const ad::Binding& params, const data::InteractionTable& table,
                             std::span<const std::size_t> records, const graph::AdjacencyStack& stack,
                             const Var& id_override = {}) const;

 private:
  data::FeatureSchema schema_;
  ModelConfig cfg_;
  ad::MlpSpec hyper_, c1_, c2_;
};

}  // namespace emerg::model
