#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "emerg/autodiff.hpp"
#include "emerg/nn.hpp"

namespace emerg::graph {

using ad::Var;

// MLP_Wa: input [e_1..e_Nv, one-hot(m)], output one adjacency row.
ad::MlpSpec hyper_spec(std::size_t num_item, std::size_t num_features, std::size_t dim,
                       const std::vector<std::size_t>& hidden);

// item_embeds: [N_v, N_d]. Row m of the dense first-layer adjacency.
Var hyper_row(const ad::MlpSpec& spec, const ad::Binding& params, const Var& item_embeds, std::size_t m);
// All rows at once: [N', N'].
Var hyper_adjacency(const ad::MlpSpec& spec, const ad::Binding& params, const Var& item_embeds);

// Min-max over all entries, then unit diagonal. A constant matrix maps to the
// identity (with zero gradient).
Var normalize(const Var& m);

// Keeps the k largest entries. Ties at the cut prefer diagonal entries, then
// the smaller (row, column). The selection is a constant mask in backward.
Var sparsify(const Var& m, std::size_t k);
Var symmetrize(const Var& m);
// Keeps p where pattern is nonzero.
Var mask_apply(const Var& p, const Var& pattern);

std::size_t default_sparsify_k(std::size_t side);

struct StackOptions {
  std::size_t layers = 2;
  std::optional<std::size_t> k_sparse;  // unset: default_sparsify_k(side)
  bool sparsify = true;  // off: Â = normalize(Ā)
  bool mask = true;      // off: A^(l) = normalize(Ã^(l-1) Ã^(1))
};

// Index l-1 holds layer l.
struct AdjacencyStack {
  Var bar1;
  std::vector<Var> bar;    // Ā^(l), raw powers
  std::vector<Var> hat;    // Â^(l)
  std::vector<Var> tilde;  // Ã^(l)
  std::vector<Var> final;  // A^(l)
  std::size_t k_sparse = 0;
};

AdjacencyStack build_adjacency_stack(const Var& bar1, const StackOptions& opts);

// CSV with a header row and a leading name column.
void write_matrix_csv(std::ostream& os, const Tensor& m, const std::vector<std::string>& names);

}  // namespace emerg::graph
