#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace emerg::data {

enum class Owner { item, user };
enum class Kind { single, multi, continuous };

std::string to_string(Owner o);
std::string to_string(Kind k);

struct FeatureDecl {
  std::string name;
  Owner owner = Owner::item;
  Kind kind = Kind::single;
  std::size_t vocab = 0;  // categorical kinds only
  friend bool operator==(const FeatureDecl&, const FeatureDecl&) = default;
};

// Ordered feature declarations: item features first (the item ID is item
// feature 0), then user features (the user ID is user feature 0).
class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(std::vector<FeatureDecl> features, std::size_t embedding_dim);

  const std::vector<FeatureDecl>& features() const { return features_; }
  const FeatureDecl& feature(std::size_t m) const { return features_.at(m); }
  std::size_t num_item() const { return num_item_; }
  std::size_t num_user() const { return features_.size() - num_item_; }
  std::size_t num_features() const { return features_.size(); }
  std::size_t embedding_dim() const { return embedding_dim_; }
  std::size_t user_id_feature() const { return num_item_; }
  std::size_t index_of(const std::string& name) const;  // throws LookupError

  void set_embedding_dim(std::size_t d);
  // Stable textual identity used to match checkpoints against data.
  std::string fingerprint() const;

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

 private:
  void validate() const;

  std::vector<FeatureDecl> features_;
  std::size_t num_item_ = 0;
  std::size_t embedding_dim_ = 16;
};

// Schema document: "emerg-schema v1" followed by lines
// "feature <name> <item|user> <single|multi|continuous> [vocab]".
FeatureSchema parse_schema(std::istream& is, std::size_t embedding_dim = 16);
FeatureSchema load_schema(const std::string& path, std::size_t embedding_dim = 16);
void write_schema(std::ostream& os, const FeatureSchema& schema);

struct FeatureValue {
  std::vector<std::uint32_t> ids;  // single: one id, multi: active ids
  double number = 0.0;             // continuous
  friend bool operator==(const FeatureValue&, const FeatureValue&) = default;
};

struct RawInteraction {
  std::uint64_t item = 0;
  std::uint64_t user = 0;
  std::vector<FeatureValue> values;  // schema order
  int label = 0;
  std::int64_t timestamp = 0;
  friend bool operator==(const RawInteraction&, const RawInteraction&) = default;
};

class InteractionTable {
 public:
  InteractionTable() = default;
  explicit InteractionTable(FeatureSchema schema) : schema_(std::move(schema)) {}

  void append(RawInteraction row);  // validates against the schema

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<RawInteraction>& rows() const { return rows_; }
  const RawInteraction& row(std::size_t i) const { return rows_.at(i); }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

  // Record positions per item, in input order.
  const std::map<std::uint64_t, std::vector<std::size_t>>& items() const { return index_; }
  const std::vector<std::size_t>& records_of(std::uint64_t item) const;  // throws LookupError
  bool has_item(std::uint64_t item) const { return index_.count(item) != 0; }

 private:
  FeatureSchema schema_;
  std::vector<RawInteraction> rows_;
  std::map<std::uint64_t, std::vector<std::size_t>> index_;
};

// Throws ContractError if the row does not conform to the schema.
void validate_row(const FeatureSchema& schema, const RawInteraction& row);

struct LoadOptions {
  // Treat the label column as a rating and set label = rating >= threshold.
  bool binarize_rating = false;
  double rating_threshold = 4.0;
};

// CSV with a header naming every schema feature plus `label` and
// `timestamp`; multi-valued cells are `|`-separated ids. An optional first
// line "#emerg-data v1" declares the format version; other lines starting
// with '#' before the header are comments.
InteractionTable load_dataset(std::istream& is, const FeatureSchema& schema, const LoadOptions& opts = {});
InteractionTable load_dataset(const std::string& path, const FeatureSchema& schema, const LoadOptions& opts = {});
void save_dataset(std::ostream& os, const InteractionTable& table);
void save_dataset(const std::string& path, const InteractionTable& table);

struct ItemSplit {
  std::set<std::uint64_t> old_items;
  std::set<std::uint64_t> new_items;
  std::size_t threshold = 0;  // N
  std::size_t shots = 0;      // K
  friend bool operator==(const ItemSplit&, const ItemSplit&) = default;
};

// old: count > N; new: 3K < count < N; everything else is dropped.
ItemSplit split_items(const InteractionTable& table, std::size_t threshold, std::size_t shots);

struct ItemPhases {
  std::vector<std::size_t> a, b, c, test;
  friend bool operator==(const ItemPhases&, const ItemPhases&) = default;
};

struct PhasePlan {
  std::size_t shots = 0;
  std::map<std::uint64_t, ItemPhases> items;
  friend bool operator==(const PhasePlan&, const PhasePlan&) = default;
};

// Per new item: records stably sorted by timestamp, cut K / K / K / rest.
PhasePlan build_phases(const InteractionTable& table, const ItemSplit& split);
ItemPhases build_item_phases(const InteractionTable& table, std::uint64_t item, std::size_t shots);

struct Task {
  std::uint64_t item = 0;
  std::size_t item_record = 0;  // any record of the item, for its feature values
  std::vector<std::size_t> support;
  std::vector<std::size_t> query;
};

using Rng = std::mt19937_64;

// Disjoint uniform samples without replacement.
Task sample_task(const InteractionTable& table, std::uint64_t item, std::size_t n_support, std::size_t n_query,
                 Rng& rng);

enum class LabelMode { joint_set, multiplicative };

struct SynthConfig {
  std::size_t old_items = 40;
  std::size_t new_items = 20;
  std::size_t old_records = 150;  // per old item; must exceed the split threshold
  std::size_t new_records = 80;   // per new item; must lie in (3K, N)
  std::size_t users = 300;
  std::size_t categories = 6;     // item category drives the item's secret pair
  std::size_t item_attrs = 1;     // extra categorical item fields
  std::size_t user_attrs = 3;     // categorical user fields besides the user ID
  std::size_t attr_vocab = 4;
  double noise = 0.1;             // symmetric label-flip probability
  LabelMode mode = LabelMode::joint_set;
  double strength = 4.0;          // logit scale for the multiplicative mode
  double positive_target = 0.5;   // declared expected positive rate
  std::string forced_pair;        // "a,b": every item uses this pair
  std::size_t embedding_dim = 16;
};

struct SynthDataset {
  InteractionTable table;
  // item -> its secret feature pair (schema indices, ascending)
  std::map<std::uint64_t, std::pair<std::size_t, std::size_t>> pairs;
};

SynthDataset synth_generate(const SynthConfig& cfg, std::uint64_t seed);
void save_pair_registry(std::ostream& os, const SynthDataset& ds);

}  // namespace emerg::data
