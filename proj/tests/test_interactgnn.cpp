#include <cmath>
#include <array>
#include <random>

#include "doctest.h"
#include "emerg/errors.hpp"
#include "emerg/embed.hpp"
#include "emerg/model.hpp"
#include "support/fixtures.hpp"

using namespace emerg;
using namespace emerg::ad;
using namespace emerg::model;
using emerg::testing::random_tensor;

namespace {

Var c(const Tensor& t) { return Var::constant(t); }

// softmax(Q K^T / sqrt(d)) V per head, heads concatenated; plain loops.
Tensor dense_attention(const Tensor& h, const std::vector<std::array<Tensor, 3>>& heads) {
  const std::size_t rows = h.dim(0), d = h.dim(1), dh = d / heads.size();
  Tensor out({rows, d});
  for (std::size_t hd = 0; hd < heads.size(); ++hd) {
    std::array<Tensor, 3> proj;
    for (int w = 0; w < 3; ++w) {
      proj[w] = Tensor({rows, dh});
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < dh; ++j) {
          double s = 0;
          for (std::size_t k = 0; k < d; ++k) s += h.at(r, k) * heads[hd][w].at(k, j);
          proj[w].at(r, j) = s;
        }
    }
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> score(rows);
      double mx = -1e300;
      for (std::size_t t = 0; t < rows; ++t) {
        double s = 0;
        for (std::size_t j = 0; j < dh; ++j) s += proj[0].at(r, j) * proj[1].at(t, j);
        score[t] = s / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, score[t]);
      }
      double z = 0;
      for (auto& s : score) z += (s = std::exp(s - mx));
      for (std::size_t j = 0; j < dh; ++j) {
        double acc = 0;
        for (std::size_t t = 0; t < rows; ++t) acc += score[t] / z * proj[2].at(t, j);
        out.at(r, hd * dh + j) = acc;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("gnn_layer examples") {
  const auto h0 = c(Tensor::matrix({{1, 2}, {3, 0}}));
  const auto eye = c(Tensor::identity(2));
  auto out = gnn_layer(h0, h0, c(Tensor({2, 2}, 1.0)), eye, Combine::product).value();
  CHECK(out == Tensor::matrix({{4, 4}, {12, 0}}));

  CHECK(gnn_layer(h0, h0, c(Tensor({2, 2})), eye, Combine::product).value() == Tensor({2, 2}));

  std::mt19937_64 rng(1);
  const auto prev = c(random_tensor({2, 2}, rng));
  const auto self = gnn_layer(prev, h0, eye, eye, Combine::product).value();
  for (std::size_t i = 0; i < 4; ++i) CHECK(self[i] == prev.value()[i] * h0.value()[i]);

  CHECK(gnn_layer(h0, h0, c(Tensor({2, 2}, 1.0)), eye, Combine::sum).value() == Tensor::matrix({{5, 4}, {7, 2}}));
  CHECK(gnn_layer(h0, h0, c(Tensor({2, 2}, 1.0)), eye, Combine::max).value() == Tensor::matrix({{4, 2}, {4, 2}}));

  CHECK_THROWS_AS(gnn_layer(h0, h0, c(Tensor({3, 3})), eye, Combine::product), ContractError);
  CHECK_THROWS_AS(gnn_layer(h0, h0, eye, c(Tensor({3, 3})), Combine::product), ContractError);
}

TEST_CASE("residual layer differs from the default") {
  const auto h0 = c(Tensor::matrix({{1, 2}, {3, 0}}));
  const auto ones = c(Tensor({2, 2}, 1.0));
  const auto eye = c(Tensor::identity(2));
  // h + h * (A h W) with A h = (4, 2) per row
  CHECK(gnn_layer(h0, h0, ones, eye, Combine::product, GnnMode::residual).value() ==
        Tensor::matrix({{5, 6}, {15, 0}}));
}

TEST_CASE("run_gnn") {
  std::mt19937_64 rng(2);
  const auto h0 = c(random_tensor({3, 3, 4}, rng));
  const std::vector<Var> adj{c(Tensor({3, 3}, 0.5))};
  const std::vector<Var> one{c(random_tensor({4, 4}, rng))};
  auto st = run_gnn(h0, adj, one, Combine::product);
  CHECK(st.states.size() == 2);
  CHECK(st.states[0].value() == h0.value());

  const std::vector<Var> adj3(3, c(Tensor({3, 3}, 0.5)));
  const std::vector<Var> zeros(3, c(Tensor({4, 4})));
  auto z = run_gnn(h0, adj3, zeros, Combine::product);
  for (std::size_t l = 1; l <= 3; ++l) CHECK(z.states[l].value() == Tensor({3, 3, 4}));

  CHECK_THROWS_AS(run_gnn(h0, adj, zeros, Combine::product), ContractError);
}

TEST_CASE("attention fusion") {
  std::mt19937_64 rng(3);
  SUBCASE("single row") {
    const auto h = random_tensor({1, 4}, rng);
    HeadWeights hw{c(random_tensor({4, 4}, rng)), c(random_tensor({4, 4}, rng)), c(random_tensor({4, 4}, rng))};
    const auto out = attention_fuse(c(h), std::vector<HeadWeights>{hw}).value();
    CHECK(max_abs_diff(out, matmul(c(h), hw.v).value()) < 1e-15);
  }
  SUBCASE("identical rows") {
    const auto eye = c(Tensor::identity(4));
    const auto row = random_tensor({1, 4}, rng);
    Tensor h({3, 4});
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < 4; ++j) h.at(r, j) = row[j];
    const auto out = attention_fuse(c(h), std::vector<HeadWeights>{{eye, eye, eye}}).value();
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < 4; ++j) CHECK(out.at(r, j) == doctest::Approx(row[j]).epsilon(1e-14));
  }
  SUBCASE("dense oracle, 2 heads") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto h = random_tensor({3, 8}, rng);
      std::vector<std::array<Tensor, 3>> raw;
      std::vector<HeadWeights> heads;
      for (int k = 0; k < 2; ++k) {
        raw.push_back({random_tensor({8, 4}, rng), random_tensor({8, 4}, rng), random_tensor({8, 4}, rng)});
        heads.push_back({c(raw.back()[0]), c(raw.back()[1]), c(raw.back()[2])});
      }
      const auto out = attention_fuse(c(h), heads).value();
      CHECK(out.shape() == Shape{3, 8});
      CHECK(max_abs_diff(out, dense_attention(h, raw)) < 1e-10);
    }
  }
  SUBCASE("batched input matches per-slice") {
    const auto h = random_tensor({2, 3, 4}, rng);
    std::vector<HeadWeights> heads;
    for (int k = 0; k < 2; ++k)
      heads.push_back({c(random_tensor({4, 2}, rng)), c(random_tensor({4, 2}, rng)), c(random_tensor({4, 2}, rng))});
    const auto out = attention_fuse(c(h), heads).value();
    CHECK(out.shape() == Shape{2, 3, 4});
    for (std::size_t g = 0; g < 2; ++g) {
      const auto slice_out = attention_fuse(slice(c(h), 0, g, 1), heads).value();
      for (std::size_t i = 0; i < 12; ++i) CHECK(slice_out[i] == doctest::Approx(out[g * 12 + i]).epsilon(1e-14));
    }
  }
  SUBCASE("heads must divide the width") {
    const std::vector<HeadWeights> three(3, HeadWeights{c(Tensor({8, 2})), c(Tensor({8, 2})), c(Tensor({8, 2}))});
    CHECK_THROWS_AS(attention_fuse(c(Tensor({3, 8})), three), ConfigError);
  }
}

TEST_CASE("contribution and prediction") {
  // one feature, L*N_d = 2
  MlpSpec c1{"c1", {2, 1}};
  MlpSpec c2{"c2", {2, 1}};
  ParamStore s;
  s.add("c1/w0", Tensor({2, 1}));
  s.add("c1/b0", Tensor({1}));
  s.add("c2/w0", Tensor({2, 1}));
  s.add("c2/b0", Tensor::vector({0.2}));
  Binding b(s);
  const auto fused = c(Tensor({1, 1, 2}, 0.7));
  const auto cf = contribution(c1, b, fused, 1);
  CHECK(cf.value() == Tensor({1, 1}, 0.5));
  const auto y = predict(c2, b, fused, cf).value();
  CHECK(y[0] == doctest::Approx(1.0 / (1.0 + std::exp(-0.1))).epsilon(1e-15));
  CHECK(y[0] == doctest::Approx(0.5250).epsilon(1e-4));

  ParamStore big = s;
  big.value("c1/b0")[0] = 50.0;
  CHECK(contribution(c1, Binding(big), fused, 1).value()[0] > 0.999);
  big.value("c1/b0")[0] = -50.0;
  const double low = contribution(c1, Binding(big), fused, 1).value()[0];
  CHECK(low > 0.0);
  CHECK(low < 1e-3);

  // all terms zero -> 0.5
  ParamStore zero = s;
  zero.value("c2/b0")[0] = 0.0;
  CHECK(predict(c2, Binding(zero), fused, cf).value()[0] == 0.5);

  // monotone in the second-stage output
  double prev = 0;
  for (double bias : {-1.0, -0.2, 0.0, 0.3, 2.0}) {
    zero.value("c2/b0")[0] = bias;
    const double v = predict(c2, Binding(zero), fused, cf).value()[0];
    CHECK(v > prev);
    prev = v;
  }
  CHECK_THROWS_AS(contribution(c1, b, c(Tensor({1, 1, 3})), 1), ContractError);
}

TEST_CASE("full forward") {
  const auto table = testing::toy_table(5, 1);
  Model m(table.schema(), {});
  ParamStore store;
  Rng rng(11);
  m.init(store, rng);
  Binding b(store);
  const std::vector<std::size_t> recs{0, 1, 2};
  const auto bar1 = m.generate_adjacency(b, table.row(0));
  CHECK(bar1.shape() == Shape{4, 4});
  const auto y = m.forward(b, table, recs, bar1);
  CHECK(y.shape() == Shape{3});
  for (double v : y.value().values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(m.forward(b, table, recs, bar1).value() == y.value());

  // two items, different graphs, same users -> different predictions
  const std::vector<std::size_t> other{5, 6, 7};
  auto same_users = table;
  const auto bar_other = m.generate_adjacency(b, table.row(5));
  CHECK(bar_other.value() != bar1.value());
  CHECK(m.forward(b, table, recs, bar_other).value() != y.value());

  // same graph and ID embedding, different item rows only through the item id -> identical
  const auto eid = Var::constant(Tensor({8}, 0.1));
  const auto shared = Var::constant(bar1.value());
  data::InteractionTable twin(table.schema());
  auto r0 = table.row(0);
  auto r1 = r0;
  r1.item = 3;
  r1.values[0].ids = {3};  // item 3 has the same category as item 0
  twin.append(r0);
  twin.append(r1);
  const std::vector<std::size_t> first{0}, second{1};
  CHECK(m.forward(b, twin, first, shared, eid).value() == m.forward(b, twin, second, shared, eid).value());

  ModelConfig bad;
  bad.heads = 3;
  CHECK_THROWS_AS(Model(table.schema(), bad), ConfigError);
}

TEST_CASE("full-model gradients match finite differences") {
  const auto table = testing::toy_table(4, 2);
  Rng rng(5);
  double worst = 0;
  std::size_t entries = 0, kinks = 0;
  auto take = [&](const testing::GradReport& r) {
    worst = std::max(worst, r.worst);
    entries += r.entries;
    kinks += r.kinks;
  };
  for (int trial = 0; trial < 3; ++trial) {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.hyper_hidden = {6};
    cfg.c1_hidden = {5};
    cfg.c2_hidden = {4};
    cfg.op = trial == 1 ? Combine::sum : Combine::product;
    Model m(table.schema(), cfg);
    ParamStore store;
    m.init(store, rng);
    store.add("phi/eid", embed::fresh_id_embedding(8, rng));
    const std::uint64_t item = static_cast<std::uint64_t>(trial);
    const auto& recs = table.records_of(item);
    std::vector<double> labels;
    for (auto r : recs) labels.push_back(table.row(r).label);

    // through the hypernetwork
    auto via_hyper = [&](const Binding& b) {
      const auto bar1 = m.generate_adjacency(b, table.row(recs[0]), b("phi/eid"));
      return bce_mean(m.forward(b, table, recs, bar1, b("phi/eid")), labels);
    };
    std::vector<std::string> names = store.trainable_names();
    take(testing::gradcheck_store(via_hyper, store, names));

    // with Ā^(1) as a free tensor
    ParamStore phi_store = store;
    {
      NoGradGuard g;
      phi_store.add("phi/bar1", m.generate_adjacency(Binding(store), table.row(recs[0])).value());
    }
    auto via_phi = [&](const Binding& b) {
      return bce_mean(m.forward(b, table, recs, b("phi/bar1"), b("phi/eid")), labels);
    };
    take(testing::gradcheck_store(via_phi, phi_store, {"phi/bar1", "phi/eid", "gnn/w1"}));
  }
  MESSAGE("full-model worst relative error " << worst << " over " << entries << " entries, " << kinks << " on kinks");
  CHECK(worst <= 1e-3);
  CHECK(kinks * 50 <= entries);
}
