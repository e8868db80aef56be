#include <random>
#include <sstream>

#include "doctest.h"
#include "emerg/errors.hpp"
#include "emerg/graph.hpp"
#include "support/fixtures.hpp"

using namespace emerg;
using namespace emerg::ad;
using namespace emerg::graph;
using emerg::testing::random_tensor;

namespace {

Var c(const Tensor& t) { return Var::constant(t); }

bool symmetric(const Tensor& m) {
  for (std::size_t i = 0; i < m.dim(0); ++i)
    for (std::size_t j = 0; j < m.dim(1); ++j)
      if (m.at(i, j) != m.at(j, i)) return false;
  return true;
}

std::size_t nnz(const Tensor& m) {
  std::size_t n = 0;
  for (double v : m.values()) n += v != 0.0;
  return n;
}

}  // namespace

TEST_CASE("hyper network rows") {
  const std::size_t nv = 2, nf = 4, d = 3;
  const auto spec = hyper_spec(nv, nf, d, {});
  CHECK(spec.in_width() == 10);
  CHECK(spec.out_width() == 4);

  ParamStore store;
  store.add("hyper/w0", Tensor({10, 4}));
  store.add("hyper/b0", Tensor::vector({1, 2, 3, 4}));
  std::mt19937_64 rng(1);
  const auto e = c(random_tensor({nv, d}, rng));
  {
    Binding b(store);
    for (std::size_t m = 0; m < nf; ++m) CHECK(hyper_row(spec, b, e, m).value() == Tensor::vector({1, 2, 3, 4}));
    const auto full = hyper_adjacency(spec, b, e).value();
    for (std::size_t m = 0; m < nf; ++m)
      for (std::size_t j = 0; j < nf; ++j) CHECK(full.at(m, j) == j + 1.0);
    CHECK_THROWS_AS(hyper_row(spec, b, e, 4), ContractError);
  }

  ParamStore random;
  mlp_init(random, hyper_spec(nv, nf, d, {5}), rng);
  Binding b(random);
  const auto spec2 = hyper_spec(nv, nf, d, {5});
  const auto full = hyper_adjacency(spec2, b, e).value();
  CHECK(hyper_adjacency(spec2, b, e).value() == full);
  for (std::size_t m = 0; m < nf; ++m) {
    const auto row = hyper_row(spec2, b, e, m).value();
    for (std::size_t j = 0; j < nf; ++j) CHECK(row[j] == doctest::Approx(full.at(m, j)).epsilon(1e-14));
  }
  CHECK(hyper_row(spec2, b, e, 0).value() != hyper_row(spec2, b, e, 1).value());
}

TEST_CASE("normalize") {
  CHECK(normalize(c(Tensor::matrix({{0, 2}, {4, 8}}))).value() == Tensor::matrix({{1, 0.25}, {0.5, 1}}));
  CHECK(normalize(c(Tensor({3, 3}, 7.0))).value() == Tensor::identity(3));
  const auto fixed = Tensor::matrix({{0, 0.3, 1}, {0.2, 0.5, 0.7}, {0.1, 0.9, 0.4}});
  const auto out = normalize(c(fixed)).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(out.at(i, j) == (i == j ? 1.0 : fixed.at(i, j)));
  CHECK_THROWS_AS(normalize(c(Tensor({2, 3}))), DimensionError);
}

TEST_CASE("sparsify") {
  const auto m = Tensor::matrix({{1, 0.25}, {0.5, 1}});
  CHECK(sparsify(c(m), 2).value() == Tensor::matrix({{1, 0}, {0, 1}}));
  CHECK(sparsify(c(m), 4).value() == m);
  CHECK(sparsify(c(m), 0).value() == Tensor({2, 2}));
  CHECK_THROWS_AS(sparsify(c(m), 5), ConfigError);
  // ties: smaller index first
  CHECK(sparsify(c(Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}})), 3).value() == Tensor::matrix({{0.5, 0.5}, {0, 0.5}}));
  CHECK(sparsify(c(Tensor::matrix({{0, 0.5, 0.5}, {0.5, 0, 0}, {0, 0, 0}})), 2).value() ==
        Tensor::matrix({{0, 0.5, 0.5}, {0, 0, 0}, {0, 0, 0}}));
  // ties at the top: diagonal entries first
  CHECK(sparsify(c(Tensor::matrix({{1, 1}, {0.2, 1}})), 2).value() == Tensor::matrix({{1, 0}, {0, 1}}));
}

TEST_CASE("symmetrize and mask") {
  CHECK(symmetrize(c(Tensor::matrix({{0, 1}, {0, 0}}))).value() == Tensor::matrix({{0, 0.5}, {0.5, 0}}));
  const auto s = Tensor::matrix({{1, 2}, {2, 3}});
  CHECK(symmetrize(c(s)).value() == s);
  std::mt19937_64 rng(2);
  CHECK(symmetric(symmetrize(c(random_tensor({5, 5}, rng))).value()));

  const auto p = Tensor::matrix({{2, 3}, {1, 0}});
  CHECK(mask_apply(c(p), c(Tensor::matrix({{1, 0}, {1, 1}}))).value() == Tensor::matrix({{2, 0}, {1, 0}}));
  CHECK(mask_apply(c(p), c(Tensor({2, 2}, 0.3))).value() == p);
  CHECK(mask_apply(c(p), c(Tensor({2, 2}))).value() == Tensor({2, 2}));
  CHECK_THROWS_AS(mask_apply(c(p), c(Tensor({3, 3}))), DimensionError);
}

TEST_CASE("adjacency stack") {
  SUBCASE("single layer") {
    std::mt19937_64 rng(3);
    auto st = build_adjacency_stack(c(random_tensor({4, 4}, rng)), {1});
    CHECK(st.tilde.size() == 1);
    CHECK(st.final.size() == 1);
    CHECK(st.k_sparse == 8);
  }
  SUBCASE("identity propagates") {
    auto st = build_adjacency_stack(c(Tensor::identity(5)), {4});
    for (const auto& a : st.final) CHECK(a.value() == Tensor::identity(5));
  }
  SUBCASE("default budget") {
    CHECK(default_sparsify_k(5) == 13);
    CHECK(default_sparsify_k(4) == 8);
    CHECK(default_sparsify_k(1) == 1);
  }
  SUBCASE("invariants on random matrices") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 1 + trial % 10;
      auto st = build_adjacency_stack(c(random_tensor({n, n}, rng)), {3});
      for (std::size_t l = 0; l < 3; ++l) {
        const auto& a = st.final[l].value();
        CHECK(symmetric(st.tilde[l].value()));
        CHECK(nnz(st.hat[l].value()) <= st.k_sparse);
        for (std::size_t i = 0; i < n; ++i) {
          CHECK(a.at(i, i) == 1.0);
          for (std::size_t j = 0; j < n; ++j) {
            CHECK(a.at(i, j) >= 0.0);
            CHECK(a.at(i, j) <= 1.0);
            if (l > 0 && a.at(i, j) != 0.0) CHECK(st.tilde[l - 1].value().at(i, j) != 0.0);
          }
        }
      }
    }
  }
  SUBCASE("without mask, higher layers can connect masked pairs") {
    // path 0-1-2-3: two hops connect 0 and 2
    const auto path = Tensor::matrix({{1, 1, 0, 0}, {1, 1, 1, 0}, {0, 1, 1, 1}, {0, 0, 1, 1}});
    StackOptions masked{2, 16};
    StackOptions open{2, 16, true, false};
    CHECK(build_adjacency_stack(c(path), masked).final[1].value().at(0, 2) == 0.0);
    CHECK(build_adjacency_stack(c(path), open).final[1].value().at(0, 2) > 0.0);
  }
}

TEST_CASE("adjacency gradients through normalize, sparsify and mask") {
  std::mt19937_64 rng(5);
  double worst = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + trial % 5;
    const auto x = random_tensor({n, n}, rng);
    const auto w = random_tensor({n, n}, rng);
    auto f = [&](const std::vector<Var>& in) {
      auto st = build_adjacency_stack(in[0], {3});
      Var total = sum_all(mul(st.final[0], c(w)));
      for (std::size_t l = 1; l < 3; ++l) total = add(total, sum_all(mul(st.final[l], c(w))));
      return total;
    };
    worst = std::max(worst, testing::gradcheck(f, {x}));
  }
  CHECK(worst <= 1e-3);

  // dropped positions and overwritten diagonals get no gradient
  const auto x = Var::leaf(Tensor::matrix({{0.9, 0.1, 0.3}, {0.8, 0.5, 0.2}, {0.4, 0.7, 0.6}}));
  const auto norm = normalize(x);
  auto g = grad(sum_all(sparsify(norm, 4)), std::vector<Var>{x})[0].value();
  const auto kept = sparsify(norm, 4).value();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) {
        if (i > 0) CHECK(g.at(i, i) == 0.0);  // overwritten; (0,0) is the max
        continue;
      }
      if (kept.at(i, j) == 0.0 && !(i == 0 && j == 1)) CHECK(g.at(i, j) == 0.0);
    }
  }
}

TEST_CASE("matrix CSV export") {
  std::ostringstream os;
  write_matrix_csv(os, Tensor::matrix({{1, 0.5}, {0.5, 1}}), {"a", "b"});
  CHECK(os.str() == "feature,a,b\na,1,0.5\nb,0.5,1\n");
  CHECK_THROWS_AS(write_matrix_csv(os, Tensor::identity(3), {"a"}), DimensionError);
}
