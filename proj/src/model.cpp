#include "emerg/model.hpp"

#include <cmath>

#include "emerg/embed.hpp"
#include "emerg/errors.hpp"

namespace emerg::model {

Var gnn_layer(const Var& h_prev, const Var& h0, const Var& adj, const Var& wg, Combine op, GnnMode mode) {
  const auto& s = h0.shape();
  if (s.size() < 2 || s.size() > 3) throw ContractError("gnn_layer: states must be [N', N_d] or [B, N', N_d]");
  const std::size_t n = s[s.size() - 2], d = s.back();
  if (h_prev.shape() != s) throw ContractError("gnn_layer: previous states " + shape_string(h_prev.shape()) + " vs " + shape_string(s));
  if (adj.shape() != Shape{n, n}) throw ContractError("gnn_layer: adjacency " + shape_string(adj.shape()) + " for " + std::to_string(n) + " nodes");
  if (wg.shape() != Shape{d, d}) throw ContractError("gnn_layer: W_g " + shape_string(wg.shape()) + " for width " + std::to_string(d));
  if (mode == GnnMode::residual) {
    const Var msg = ad::matmul(ad::matmul(adj, h_prev), wg);
    return ad::add(h_prev, ad::mul(h_prev, msg));
  }
  const Var msg = ad::matmul(ad::matmul(adj, h0), wg);
  return ad::ewise(h_prev, msg, op);
}

NodeStates run_gnn(const Var& h0, std::span<const Var> adjacency, std::span<const Var> wg, Combine op, GnnMode mode) {
  if (adjacency.size() != wg.size())
    throw ContractError("run_gnn: " + std::to_string(adjacency.size()) + " adjacency matrices for " +
                        std::to_string(wg.size()) + " layers");
  NodeStates out;
  out.states.push_back(h0);
  for (std::size_t l = 0; l < wg.size(); ++l)
    out.states.push_back(gnn_layer(out.states.back(), h0, adjacency[l], wg[l], op, mode));
  return out;
}

Var attention_fuse(const Var& h, std::span<const HeadWeights> heads) {
  const auto& s = h.shape();
  if (s.size() < 2 || s.size() > 3) throw DimensionError("attention_fuse: expected [L, N_d] or [G, L, N_d]");
  const std::size_t d = s.back();
  if (heads.empty() || d % heads.size() != 0)
    throw ConfigError("attention: " + std::to_string(heads.size()) + " heads do not divide width " + std::to_string(d));
  const std::size_t dh = d / heads.size();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Var> outs;
  for (const auto& hw : heads) {
    for (const Var* w : {&hw.q, &hw.k, &hw.v})
      if (w->shape() != Shape{d, dh}) throw DimensionError("attention: head projection " + shape_string(w->shape()));
    const Var q = ad::matmul(h, hw.q);
    const Var k = ad::matmul(h, hw.k);
    const Var v = ad::matmul(h, hw.v);
    const Var scores = ad::softmax_last(ad::scale(ad::matmul(q, ad::transpose_last(k)), inv_sqrt));
    outs.push_back(ad::matmul(scores, v));
  }
  return outs.size() == 1 ? outs[0] : ad::concat(outs, s.size() - 1);
}

Var contribution(const ad::MlpSpec& c1, const ad::Binding& params, const Var& fused, std::size_t batch) {
  if (batch == 0 || fused.size() != batch * c1.in_width())
    throw ContractError("contribution: fused states of size " + std::to_string(fused.size()) + " do not fit " +
                        std::to_string(batch) + " x " + std::to_string(c1.in_width()));
  return ad::sigmoid(ad::mlp_apply(c1, params, ad::reshape(fused, {batch, c1.in_width()})));
}

Var predict(const ad::MlpSpec& c2, const ad::Binding& params, const Var& fused, const Var& c) {
  if (c.shape().size() != 2) throw ContractError("predict: contribution factors must be [B, N']");
  const std::size_t b = c.shape()[0], n = c.shape()[1];
  if (fused.size() != b * n * c2.in_width())
    throw ContractError("predict: fused states do not fit the predictor input width");
  const Var t = ad::reshape(ad::mlp_apply(c2, params, ad::reshape(fused, {b * n, c2.in_width()})), {b, n});
  return ad::sigmoid(ad::sum_last(ad::mul(c, t)));
}

Model::Model(data::FeatureSchema schema, ModelConfig cfg) : schema_(std::move(schema)), cfg_(std::move(cfg)) {
  const std::size_t n = nodes(), d = dim(), rows = cfg_.layers + 1;
  if (cfg_.layers < 1) throw ConfigError("gnn_layers must be >= 1");
  if (cfg_.heads < 1 || d % cfg_.heads != 0)
    throw ConfigError("num_heads=" + std::to_string(cfg_.heads) + " must divide embedding_dim=" + std::to_string(d));
  if (cfg_.k_sparse && *cfg_.k_sparse > n * n)
    throw ConfigError("sparsify_k=" + std::to_string(*cfg_.k_sparse) + " exceeds " + std::to_string(n * n));
  hyper_ = graph::hyper_spec(schema_.num_item(), n, d, cfg_.hyper_hidden);
  c1_ = {"pred/c1", {n * rows * d}};
  c1_.widths.insert(c1_.widths.end(), cfg_.c1_hidden.begin(), cfg_.c1_hidden.end());
  c1_.widths.push_back(n);
  c2_ = {"pred/c2", {rows * d}};
  c2_.widths.insert(c2_.widths.end(), cfg_.c2_hidden.begin(), cfg_.c2_hidden.end());
  c2_.widths.push_back(1);
  ad::validate(c1_);
  ad::validate(c2_);
}

std::string Model::gnn_name(std::size_t layer) { return "gnn/w" + std::to_string(layer); }

std::string Model::head_name(std::size_t head, char which) {
  return "attn/h" + std::to_string(head) + "/" + std::string(1, which);
}

void Model::init(ad::ParamStore& store, ad::Rng& rng) const {
  const std::size_t d = dim();
  embed::embed_init(store, schema_, rng);
  ad::mlp_init(store, hyper_, rng);
  for (std::size_t l = 1; l <= cfg_.layers; ++l) store.add(gnn_name(l), ad::init_uniform({d, d}, d, rng));
  for (std::size_t h = 1; h <= cfg_.heads; ++h)
    for (char w : {'q', 'k', 'v'}) store.add(head_name(h, w), ad::init_uniform({d, d / cfg_.heads}, d, rng));
  ad::mlp_init(store, c1_, rng);
  ad::mlp_init(store, c2_, rng);
}

Var Model::generate_adjacency(const ad::Binding& params, const data::RawInteraction& item_record,
                              const Var& id_override) const {
  return graph::hyper_adjacency(hyper_, params, embed::item_rows(params, schema_, item_record, id_override));
}

graph::AdjacencyStack Model::stack(const Var& bar1) const {
  graph::StackOptions opts;
  opts.layers = cfg_.layers;
  opts.k_sparse = cfg_.k_sparse;
  opts.sparsify = cfg_.sparsify;
  opts.mask = cfg_.mask;
  return graph::build_adjacency_stack(bar1, opts);
}

Var Model::forward(const ad::Binding& params, const data::InteractionTable& table, std::span<const std::size_t> records,
                   const Var& bar1, const Var& id_override) const {
  return forward_trace(params, table, records, bar1, id_override).probs;
}

ForwardTrace Model::forward_trace(const ad::Binding& params, const data::InteractionTable& table,
                                  std::span<const std::size_t> records, const Var& bar1,
                                  const Var& id_override) const {
  return forward_stack(params, table, records, stack(bar1), id_override);
}

ForwardTrace Model::forward_stack(const ad::Binding& params, const data::InteractionTable& table,
                                  std::span<const std::size_t> records, const graph::AdjacencyStack& st,
                                  const Var& id_override) const {
  if (!(table.schema() == schema_)) throw ContractError("forward: table schema does not match the model");
  const std::size_t b = records.size(), n = nodes(), d = dim();
  ForwardTrace tr;
  tr.stack = st;
  tr.h0 = embed::embed_batch(params, table, records, id_override);
  std::vector<Var> wg;
  for (std::size_t l = 1; l <= cfg_.layers; ++l) wg.push_back(params(gnn_name(l)));
  tr.nodes = run_gnn(tr.h0, st.final, wg, cfg_.op);
  std::vector<Var> stacked;
  for (const auto& h : tr.nodes.states) stacked.push_back(ad::reshape(h, {b * n, 1, d}));
  const Var hist = ad::concat(stacked, 1);  // [B*N', L, N_d]
  std::vector<HeadWeights> heads;
  for (std::size_t h = 1; h <= cfg_.heads; ++h)
    heads.push_back({params(head_name(h, 'q')), params(head_name(h, 'k')), params(head_name(h, 'v'))});
  tr.fused = attention_fuse(hist, heads);
  tr.c = contribution(c1_, params, tr.fused, b);
  tr.probs = predict(c2_, params, tr.fused, tr.c);
  return tr;
}

}  // namespace emerg::model
