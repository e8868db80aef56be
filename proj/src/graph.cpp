#include "emerg/graph.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "emerg/errors.hpp"

namespace emerg::graph {

namespace {

std::size_t square_side(const Var& m, const char* what) {
  const auto& s = m.shape();
  if (s.size() != 2 || s[0] != s[1]) throw DimensionError(std::string(what) + ": expected a square matrix, got " + shape_string(s));
  return s[0];
}

Tensor off_diagonal_ones(std::size_t n) {
  Tensor t({n, n}, 1.0);
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 0.0;
  return t;
}

}  // namespace

ad::MlpSpec hyper_spec(std::size_t num_item, std::size_t num_features, std::size_t dim,
                       const std::vector<std::size_t>& hidden) {
  ad::MlpSpec spec{"hyper", {num_item * dim + num_features}};
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(num_features);
  ad::validate(spec);
  return spec;
}

Var hyper_row(const ad::MlpSpec& spec, const ad::Binding& params, const Var& item_embeds, std::size_t m) {
  const std::size_t n = spec.out_width();
  if (m >= n) throw ContractError("hyper_row: row " + std::to_string(m) + " out of range for " + std::to_string(n) + " nodes");
  Tensor onehot({n});
  onehot[m] = 1.0;
  const Var parts[] = {ad::reshape(item_embeds, {item_embeds.size()}), Var::constant(std::move(onehot))};
  return ad::mlp_apply(spec, params, ad::concat(parts, 0));
}

Var hyper_adjacency(const ad::MlpSpec& spec, const ad::Binding& params, const Var& item_embeds) {
  const std::size_t n = spec.out_width();
  const std::size_t flat = item_embeds.size();
  if (flat + n != spec.in_width())
    throw DimensionError("hyper_adjacency: item embeddings of size " + std::to_string(flat) + " do not fit MLP input " +
                         std::to_string(spec.in_width()));
  const Var parts[] = {ad::broadcast_rows(ad::reshape(item_embeds, {flat}), {n, flat}),
                       Var::constant(Tensor::identity(n))};
  return ad::mlp_apply(spec, params, ad::concat(parts, 1));
}

Var normalize(const Var& m) {
  const std::size_t n = square_side(m, "normalize");
  const auto vals = m.value().values();
  const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
  if (*hi - *lo < 1e-12) return Var::constant(Tensor::identity(n));
  const Var mn = ad::pick(m, static_cast<std::size_t>(lo - vals.begin()));
  const Var mx = ad::pick(m, static_cast<std::size_t>(hi - vals.begin()));
  const Var scaled = ad::mul_scalar(ad::add_scalar(m, ad::neg(mn)), ad::recip(ad::sub(mx, mn)));
  return ad::add(ad::mul(scaled, Var::constant(off_diagonal_ones(n))), Var::constant(Tensor::identity(n)));
}

Var sparsify(const Var& m, std::size_t k) {
  const std::size_t n = square_side(m, "sparsify");
  if (k > n * n) throw ConfigError("sparsify: K=" + std::to_string(k) + " exceeds " + std::to_string(n * n) + " entries");
  if (k == n * n) return m;
  const auto vals = m.value().values();
  std::vector<std::size_t> order(vals.size());
  std::iota(order.begin(), order.end(), 0);
  auto diag = [n](std::size_t i) { return i / n == i % n; };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (vals[a] != vals[b]) return vals[a] > vals[b];
    if (diag(a) != diag(b)) return diag(a);
    return a < b;
  });
  Tensor keep({n, n});
  for (std::size_t i = 0; i < k; ++i) keep[order[i]] = 1.0;
  return ad::mul(m, Var::constant(std::move(keep)));
}

Var symmetrize(const Var& m) {
  square_side(m, "symmetrize");
  return ad::scale(ad::add(ad::transpose_last(m), m), 0.5);
}

Var mask_apply(const Var& p, const Var& pattern) {
  if (p.shape() != pattern.shape())
    throw DimensionError("mask_apply: " + shape_string(p.shape()) + " vs pattern " + shape_string(pattern.shape()));
  Tensor keep(p.shape());
  const auto pv = pattern.value().values();
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = pv[i] != 0.0 ? 1.0 : 0.0;
  return ad::mul(p, Var::constant(std::move(keep)));
}

std::size_t default_sparsify_k(std::size_t side) { return (side * side + 1) / 2; }

AdjacencyStack build_adjacency_stack(const Var& bar1, const StackOptions& opts) {
  const std::size_t n = square_side(bar1, "adjacency stack");
  if (opts.layers < 1) throw ConfigError("adjacency stack: at least one GNN layer is required");
  AdjacencyStack st;
  st.bar1 = bar1;
  st.k_sparse = opts.k_sparse.value_or(default_sparsify_k(n));
  for (std::size_t l = 0; l < opts.layers; ++l) {
    st.bar.push_back(l == 0 ? bar1 : ad::matmul(st.bar.back(), bar1));
    const Var norm = normalize(st.bar.back());
    st.hat.push_back(opts.sparsify ? sparsify(norm, st.k_sparse) : norm);
    st.tilde.push_back(symmetrize(st.hat.back()));
    if (l == 0) {
      st.final.push_back(normalize(st.tilde[0]));
    } else {
      const Var prod = ad::matmul(st.tilde[l - 1], st.tilde[0]);
      st.final.push_back(normalize(opts.mask ? mask_apply(prod, st.tilde[l - 1]) : prod));
    }
  }
  return st;
}

void write_matrix_csv(std::ostream& os, const Tensor& m, const std::vector<std::string>& names) {
  if (m.rank() != 2 || m.dim(0) != names.size() || m.dim(1) != names.size())
    throw DimensionError("write_matrix_csv: matrix " + shape_string(m.shape()) + " does not match " +
                         std::to_string(names.size()) + " names");
  os << "feature";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t r = 0; r < names.size(); ++r) {
    os << names[r];
    for (std::size_t c = 0; c < names.size(); ++c) os << ',' << ad::format_double(m.at(r, c));
    os << '\n';
  }
}

}  // namespace emerg::graph
