#include <random>

#include "doctest.h"
#include "emerg/embed.hpp"
#include "emerg/errors.hpp"
#include "support/fixtures.hpp"

using namespace emerg;
using namespace emerg::ad;
using emerg::data::FeatureValue;

namespace {

data::FeatureSchema mixed_schema() {
  using data::Kind;
  using data::Owner;
  return data::FeatureSchema({{"item_id", Owner::item, Kind::single, 4},
                              {"tags", Owner::item, Kind::multi, 4},
                              {"user_id", Owner::user, Kind::single, 3},
                              {"income", Owner::user, Kind::continuous, 0}},
                             2);
}

ParamStore mixed_store() {
  ParamStore s;
  const auto rows = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}, {7, 8}});
  s.add("embed/item_id", rows);
  s.add("embed/tags", rows);
  s.add("embed/user_id", Tensor::matrix({{0, 1}, {1, 0}, {2, 2}}));
  s.add("embed/income", Tensor::matrix({{0.5, -1}}));
  return s;
}

data::RawInteraction mixed_row(std::uint32_t item, std::vector<std::uint32_t> tags, std::uint32_t user, double income) {
  data::RawInteraction r;
  r.item = item;
  r.user = user;
  r.values = {{{item}, 0}, {tags, 0}, {{user}, 0}, {{}, income}};
  return r;
}

}  // namespace

TEST_CASE("embed_feature by kind") {
  const auto schema = mixed_schema();
  const auto store = mixed_store();
  Binding b(store);
  CHECK(embed::embed_feature(b, schema, 0, {{2}, 0}).value() == Tensor::vector({5, 6}));
  CHECK(embed::embed_feature(b, schema, 1, {{1, 3}, 0}).value() == Tensor::vector({3 + 7, 4 + 8}));
  CHECK(embed::embed_feature(b, schema, 3, {{}, 2.5}).value() == Tensor::vector({1.25, -2.5}));

  CHECK_THROWS_AS(embed::embed_feature(b, schema, 0, {{4}, 0}), ContractError);
  CHECK_THROWS_AS(embed::embed_feature(b, schema, 1, {{}, 0}), ContractError);
}

TEST_CASE("multi-valued embedding is permutation invariant and linear in the table") {
  const auto schema = mixed_schema();
  auto store = mixed_store();
  Binding b(store);
  CHECK(embed::embed_feature(b, schema, 1, {{3, 0, 2}, 0}).value() ==
        embed::embed_feature(b, schema, 1, {{2, 3, 0}, 0}).value());

  // f(aW) = a f(W)
  const auto base = embed::embed_feature(b, schema, 1, {{0, 2}, 0}).value();
  for (auto& v : store.value("embed/tags").values()) v *= 3.0;
  const auto scaled = embed::embed_feature(Binding(store), schema, 1, {{0, 2}, 0}).value();
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(scaled[i] == doctest::Approx(3.0 * base[i]).epsilon(1e-15));
}

TEST_CASE("embed_instance shape, override and determinism") {
  const auto schema = mixed_schema();
  const auto store = mixed_store();
  Binding b(store);
  const auto row = mixed_row(1, {0}, 2, 1.0);
  const auto e = embed::embed_instance(b, schema, row);
  CHECK(e.shape() == Shape{4, 2});
  CHECK(e.value() == Tensor::matrix({{3, 4}, {1, 2}, {2, 2}, {0.5, -1}}));

  const auto zero = Var::constant(Tensor({2}));
  const auto o = embed::embed_instance(b, schema, row, zero);
  CHECK(o.value().at(0, 0) == 0.0);
  CHECK(o.value().at(0, 1) == 0.0);

  const auto other_user = mixed_row(1, {0}, 0, -3.0);
  const auto e2 = embed::embed_instance(b, schema, other_user);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(e2.value().at(0, c) == e.value().at(0, c));
    CHECK(e2.value().at(1, c) == e.value().at(1, c));
  }
}

TEST_CASE("embed_batch stacks instances; gradient only on active rows") {
  const auto schema = mixed_schema();
  const auto store = mixed_store();
  data::InteractionTable t(schema);
  t.append(mixed_row(1, {0, 3}, 2, 1.5));
  t.append(mixed_row(1, {2}, 0, -0.5));
  const std::vector<std::size_t> recs{0, 1};
  Binding b(store);
  const auto batch = embed::embed_batch(b, t, recs);
  CHECK(batch.shape() == Shape{2, 4, 2});
  for (std::size_t r = 0; r < 2; ++r) {
    const auto single = embed::embed_instance(b, schema, t.row(r)).value();
    for (std::size_t i = 0; i < single.size(); ++i) CHECK(batch.value()[r * single.size() + i] == single[i]);
  }

  const auto grads = backward(sum_all(batch), b);
  const auto& g = grads.at("embed/tags");
  // rows 0, 2, 3 active; row 1 not
  CHECK(g.at(1, 0) == 0.0);
  CHECK(g.at(1, 1) == 0.0);
  CHECK(g.at(0, 0) != 0.0);
  CHECK(g.at(2, 0) != 0.0);
  CHECK(g.at(3, 0) != 0.0);
  CHECK(grads.at("embed/item_id").at(0, 0) == 0.0);
  CHECK(grads.at("embed/item_id").at(1, 0) == 2.0);

  // with an ID override the shared ID table gets nothing
  auto id = Var::leaf(Tensor::vector({0.1, 0.2}));
  const auto over = embed::embed_batch(b, t, recs, id);
  const auto g2 = backward(sum_all(over), b);
  CHECK(g2.at("embed/item_id") == Tensor({4, 2}));
  CHECK(grad(sum_all(over), std::vector<Var>{id})[0].value() == Tensor::vector({2, 2}));
}

TEST_CASE("fresh ID embeddings follow the initializer bounds") {
  Rng rng(9);
  const auto e = embed::fresh_id_embedding(16, rng);
  CHECK(e.shape() == Shape{16});
  for (double v : e.values()) CHECK(std::abs(v) <= 0.25);
}
