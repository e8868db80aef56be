#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "emerg/errors.hpp"
#include "emerg/model.hpp"
#include "emerg/oracle.hpp"
#include "support/fixtures.hpp"

using namespace emerg;
using namespace emerg::oracle;

namespace {

// Emerg-mode states enumerated path by path: h_m^(l) collects
// x_m * x_{n_1} * ... * x_{n_l} over neighbour choices n_k of m in layer k.
std::set<std::vector<unsigned>> enumerate_emerg(std::size_t f, const std::vector<Pattern>& pats, std::size_t l,
                                                std::size_t m) {
  std::set<std::vector<unsigned>> out;
  std::vector<unsigned> exps(f);
  exps[m] = 1;
  std::function<void(std::size_t)> rec = [&](std::size_t k) {
    if (k == l) {
      out.insert(exps);
      return;
    }
    for (std::size_t n = 0; n < f; ++n)
      if (pats[k][m][n]) {
        ++exps[n];
        rec(k + 1);
        --exps[n];
      }
  };
  rec(0);
  return out;
}

std::set<std::vector<unsigned>> exponents(const Polynomial& p, std::size_t f) {
  std::set<std::vector<unsigned>> out;
  for (auto m : p.terms()) {
    std::vector<unsigned> e(f);
    for (std::size_t i = 0; i < f; ++i) e[i] = m.exponent(i);
    out.insert(e);
  }
  return out;
}

}  // namespace

TEST_CASE("monomials") {
  const auto x0 = Monomial::symbol(0), x3 = Monomial::symbol(3);
  const auto m = x0 * x0 * x3;
  CHECK(m.degree() == 3);
  CHECK(m.exponent(0) == 2);
  CHECK(m.contains(3));
  CHECK(!m.contains(1));
  CHECK(m.str() == "x0^2*x3");
  CHECK(x0 * x3 == x3 * x0);
  CHECK_THROWS_AS(Monomial::symbol(8), ConfigError);

  Polynomial p, q;
  p.insert(x0);
  p.insert(x3);
  q.insert(x0);
  q.insert(x0);
  CHECK(q.size() == 1);
  const auto pq = p.times(q);
  CHECK(pq.size() == 2);
  CHECK(pq.degrees() == std::set<std::size_t>{2});
  CHECK(pq.survives({3}));
  CHECK(!pq.survives({0}));
}

TEST_CASE("symbolic run examples") {
  SUBCASE("emerg, depth 2, connected patterns") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t f = 2 + trial % 5;
      const auto run = symbolic_run(f, 2, random_pattern(f, 0.5, rng), Mode::emerg);
      for (std::size_t m = 0; m < f; ++m) CHECK(run.history_degrees(m) == std::set<std::size_t>{1, 2, 3});
    }
  }
  SUBCASE("emerg, one layer, two nodes") {
    const auto run = symbolic_run(2, 1, full_pattern(2), Mode::emerg);
    for (std::size_t m = 0; m < 2; ++m) CHECK(run.degrees(1, m) == std::set<std::size_t>{2});
    CHECK(run.states[1][0].size() == 2);  // x0^2, x0*x1
  }
  SUBCASE("residual, fully connected") {
    const auto run = symbolic_run(3, 3, full_pattern(3), Mode::residual);
    CHECK(run.max_degree(1) == 2);
    CHECK(run.max_degree(2) == 4);
    CHECK(run.max_degree(3) == 8);
    CHECK(run.degrees(3, 0) == std::set<std::size_t>{1, 2, 3, 4, 5, 6, 7, 8});
  }
  SUBCASE("isolated node vanishes") {
    Pattern p = full_pattern(3);
    p[2] = {false, false, false};
    const auto run = symbolic_run(3, 2, p, Mode::emerg);
    CHECK(run.states[1][2].empty());
    CHECK(check_prop1(3, 2, {p, p}).holds);
  }
  SUBCASE("malformed input") {
    CHECK_THROWS_AS(symbolic_run(3, 2, std::vector<Pattern>{full_pattern(3)}, Mode::emerg), ContractError);
    CHECK_THROWS_AS(symbolic_run(3, 1, full_pattern(2), Mode::emerg), ContractError);
    Pattern ragged = full_pattern(3);
    ragged[1].pop_back();
    CHECK_THROWS_AS(symbolic_run(3, 1, ragged, Mode::emerg), ContractError);
    CHECK_THROWS_AS(symbolic_run(9, 1, full_pattern(9), Mode::emerg), ConfigError);
    CHECK_THROWS_AS(symbolic_run(3, 5, full_pattern(3), Mode::emerg), ConfigError);
  }
}

TEST_CASE("emerg states match path enumeration") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t f = 1 + trial % 6, nl = 1 + trial % 3;
    std::vector<Pattern> pats;
    for (std::size_t l = 0; l < nl; ++l) pats.push_back(random_pattern(f, 0.4, rng));
    const auto run = symbolic_run(f, nl, pats, Mode::emerg);
    for (std::size_t l = 0; l <= nl; ++l)
      for (std::size_t m = 0; m < f; ++m) CHECK(exponents(run.states[l][m], f) == enumerate_emerg(f, pats, l, m));
  }
}

TEST_CASE("order property: h^(l) has degree exactly l+1") {
  std::mt19937_64 rng(3);
  for (std::size_t f = 1; f <= 6; ++f)
    for (std::size_t nl = 1; nl <= 3; ++nl)
      for (int trial = 0; trial < 5; ++trial) {
        std::vector<Pattern> pats;
        for (std::size_t l = 0; l < nl; ++l) pats.push_back(random_pattern(f, 0.3, rng));
        const auto r = check_prop1(f, nl, pats);
        CHECK(r.holds);
        CHECK(!r.counterexample);
      }
  CHECK(check_prop1(4, 0, {}).holds);

  for (std::size_t nl = 2; nl <= 3; ++nl) {
    const auto r = check_prop1(3, nl, std::vector<Pattern>(nl, full_pattern(3)), Mode::residual);
    CHECK(!r.holds);
    REQUIRE(r.counterexample);
    CHECK(r.counterexample->layer == nl);
    CHECK(r.counterexample->monomial.degree() == (std::size_t{1} << nl));
  }
  const auto one = check_prop1(2, 1, {full_pattern(2)}, Mode::residual);
  CHECK(!one.holds);
  CHECK(one.counterexample->monomial.degree() == 1);
}

TEST_CASE("degree sets follow feature relabelling") {
  std::mt19937_64 rng(4);
  const std::size_t f = 5;
  std::vector<std::size_t> perm(f);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto p = random_pattern(f, 0.4, rng);
    Pattern q(f, std::vector<bool>(f));
    for (std::size_t i = 0; i < f; ++i)
      for (std::size_t j = 0; j < f; ++j) q[perm[i]][perm[j]] = p[i][j];
    for (Mode mode : {Mode::emerg, Mode::residual}) {
      const auto a = symbolic_run(f, 2, p, mode), b = symbolic_run(f, 2, q, mode);
      for (std::size_t l = 0; l <= 2; ++l)
        for (std::size_t m = 0; m < f; ++m) CHECK(a.degrees(l, m) == b.degrees(l, perm[m]));
    }
  }
}

TEST_CASE("symbolic states agree with numeric runs at indicator points") {
  std::mt19937_64 rng(5);
  const std::size_t f = 5, d = 4, nl = 3;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Pattern> pats;
    std::vector<ad::Var> adj, wg;
    for (std::size_t l = 0; l < nl; ++l) {
      pats.push_back(random_pattern(f, 0.4, rng));
      Tensor a({f, f});
      for (std::size_t i = 0; i < f; ++i)
        for (std::size_t j = 0; j < f; ++j)
          if (pats.back()[i][j]) a.at(i, j) = std::uniform_real_distribution<double>(0.2, 1.0)(rng);
      adj.push_back(ad::Var::constant(a));
      wg.push_back(ad::Var::constant(testing::random_tensor({d, d}, rng)));
    }
    for (auto mode : {Mode::emerg, Mode::residual}) {
      const auto run = symbolic_run(f, nl, pats, mode);
      const auto gmode = mode == Mode::emerg ? model::GnnMode::emerg : model::GnnMode::residual;
      for (std::size_t zero = 0; zero < f; ++zero) {
        Tensor h0 = testing::random_tensor({f, d}, rng);
        for (std::size_t k = 0; k < d; ++k) h0.at(zero, k) = 0.0;
        const auto states = model::run_gnn(ad::Var::constant(h0), adj, wg, ad::Combine::product, gmode).states;
        for (std::size_t l = 0; l <= nl; ++l)
          for (std::size_t m = 0; m < f; ++m) {
            bool nonzero = false;
            for (std::size_t k = 0; k < d; ++k) nonzero = nonzero || states[l].value().at(m, k) != 0.0;
            CHECK(nonzero == run.states[l][m].survives({zero}));
          }
      }
    }
  }
}

TEST_CASE("degree table") {
  std::ostringstream os;
  write_degree_table(os, 3, 2, full_pattern(3));
  const auto text = os.str();
  CHECK(text.find("mode,layers,degrees,max_degree,prop1\n") == 0);
  CHECK(text.find("emerg,1,1 2,2,pass\n") != std::string::npos);
  CHECK(text.find("emerg,2,1 2 3,3,pass\n") != std::string::npos);
  CHECK(text.find("residual,2,1 2 3 4,4,fail\n") != std::string::npos);
  CHECK(support_of(Tensor::matrix({{1, 0}, {0.5, 1}})) == Pattern{{true, false}, {true, true}});
}
