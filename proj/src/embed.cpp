#include "emerg/embed.hpp"

#include <memory>
#include <vector>

#include "emerg/errors.hpp"

namespace emerg::embed {

using data::Kind;

namespace {

ad::Bag make_bag(const data::FeatureDecl& f, const data::FeatureValue& v) {
  ad::Bag bag;
  if (f.kind == Kind::continuous) {
    bag.push_back({0, v.number});
    return bag;
  }
  if (v.ids.empty()) throw ContractError("embed: feature '" + f.name + "' has an empty value set");
  if (f.kind == Kind::single && v.ids.size() != 1)
    throw ContractError("embed: single-valued feature '" + f.name + "' got " + std::to_string(v.ids.size()) + " ids");
  for (auto id : v.ids) {
    if (id >= f.vocab)
      throw ContractError("embed: feature '" + f.name + "' index " + std::to_string(id) + " outside vocabulary " +
                          std::to_string(f.vocab));
    bag.push_back({id, 1.0});
  }
  return bag;
}

std::size_t rows_of(const data::FeatureDecl& f) { return f.kind == Kind::continuous ? 1 : f.vocab; }

}  // namespace

std::string table_name(const data::FeatureSchema& schema, std::size_t m) { return "embed/" + schema.feature(m).name; }

void embed_init(ad::ParamStore& store, const data::FeatureSchema& schema, ad::Rng& rng) {
  const std::size_t d = schema.embedding_dim();
  for (std::size_t m = 0; m < schema.num_features(); ++m)
    store.add(table_name(schema, m), ad::init_uniform({rows_of(schema.feature(m)), d}, d, rng));
}

Tensor fresh_id_embedding(std::size_t dim, ad::Rng& rng) { return ad::init_uniform({dim}, dim, rng); }

Var embed_feature(const ad::Binding& params, const data::FeatureSchema& schema, std::size_t m,
                  const data::FeatureValue& value) {
  if (m >= schema.num_features()) throw ContractError("embed: feature index out of range");
  auto bags = std::make_shared<std::vector<ad::Bag>>(1, make_bag(schema.feature(m), value));
  return ad::reshape(ad::embedding_bag(params(table_name(schema, m)), bags), {schema.embedding_dim()});
}

Var embed_batch(const ad::Binding& params, const data::InteractionTable& table, std::span<const std::size_t> records,
                const Var& id_override) {
  const auto& schema = table.schema();
  const std::size_t b = records.size(), d = schema.embedding_dim();
  if (b == 0) throw ContractError("embed: empty batch");
  if (id_override.defined() && id_override.shape() != Shape{d})
    throw DimensionError("embed: item ID override must have shape [" + std::to_string(d) + "]");
  std::vector<Var> cols;
  cols.reserve(schema.num_features());
  for (std::size_t m = 0; m < schema.num_features(); ++m) {
    Var rows;
    if (m == 0 && id_override.defined()) {
      rows = ad::broadcast_rows(id_override, {b, d});
    } else {
      auto bags = std::make_shared<std::vector<ad::Bag>>();
      bags->reserve(b);
      for (auto r : records) bags->push_back(make_bag(schema.feature(m), table.row(r).values.at(m)));
      rows = ad::embedding_bag(params(table_name(schema, m)), bags);
    }
    cols.push_back(ad::reshape(rows, {b, 1, d}));
  }
  return ad::concat(cols, 1);
}

Var embed_instance(const ad::Binding& params, const data::FeatureSchema& schema, const data::RawInteraction& row,
                   const Var& id_override) {
  data::validate_row(schema, row);
  std::vector<Var> rows;
  for (std::size_t m = 0; m < schema.num_features(); ++m) {
    Var e = m == 0 && id_override.defined() ? id_override : embed_feature(params, schema, m, row.values[m]);
    rows.push_back(ad::reshape(e, {1, schema.embedding_dim()}));
  }
  return ad::concat(rows, 0);
}

Var item_rows(const ad::Binding& params, const data::FeatureSchema& schema, const data::RawInteraction& row,
              const Var& id_override) {
  std::vector<Var> rows;
  for (std::size_t m = 0; m < schema.num_item(); ++m) {
    Var e = m == 0 && id_override.defined() ? id_override : embed_feature(params, schema, m, row.values.at(m));
    rows.push_back(ad::reshape(e, {1, schema.embedding_dim()}));
  }
  return ad::concat(rows, 0);
}

}  // namespace emerg::embed
