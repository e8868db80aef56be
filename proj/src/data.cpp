#include "emerg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "emerg/errors.hpp"
#include "emerg/params.hpp"

namespace emerg::data {

namespace {

constexpr const char* kSchemaHeader = "emerg-schema v1";
constexpr const char* kDataHeader = "#emerg-data v1";

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e;
}

}  // namespace

std::string to_string(Owner o) { return o == Owner::item ? "item" : "user"; }

std::string to_string(Kind k) {
  switch (k) {
    case Kind::single:
      return "single";
    case Kind::multi:
      return "multi";
    case Kind::continuous:
      return "continuous";
  }
  return "?";
}

// -- schema ---------------------------------------------------------------------

FeatureSchema::FeatureSchema(std::vector<FeatureDecl> features, std::size_t embedding_dim)
    : features_(std::move(features)), embedding_dim_(embedding_dim) {
  num_item_ = static_cast<std::size_t>(
      std::count_if(features_.begin(), features_.end(), [](const auto& f) { return f.owner == Owner::item; }));
  validate();
}

void FeatureSchema::validate() const {
  if (embedding_dim_ < 1) throw ConfigError("schema: embedding dimension must be >= 1");
  if (num_item_ < 1) throw ConfigError("schema: at least one item feature (the item ID) is required");
  if (num_user() < 1) throw ConfigError("schema: at least one user feature (the user ID) is required");
  std::set<std::string> names;
  for (std::size_t m = 0; m < features_.size(); ++m) {
    const auto& f = features_[m];
    if (!names.insert(f.name).second) throw ConfigError("schema: duplicate feature name '" + f.name + "'");
    if (m < num_item_ && f.owner != Owner::item)
      throw ConfigError("schema: item features must be declared before user features ('" + f.name + "')");
    if (f.kind != Kind::continuous && f.vocab == 0)
      throw ConfigError("schema: categorical feature '" + f.name + "' needs a vocabulary size");
    if (f.name == "label" || f.name == "timestamp")
      throw ConfigError("schema: '" + f.name + "' is a reserved column name");
  }
  if (features_[0].kind != Kind::single) throw ConfigError("schema: item ID (first item feature) must be single-valued");
  if (features_[num_item_].kind != Kind::single)
    throw ConfigError("schema: user ID (first user feature) must be single-valued");
}

std::size_t FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t m = 0; m < features_.size(); ++m)
    if (features_[m].name == name) return m;
  throw LookupError("schema: unknown feature '" + name + "'");
}

void FeatureSchema::set_embedding_dim(std::size_t d) {
  if (d < 1) throw ConfigError("schema: embedding dimension must be >= 1");
  embedding_dim_ = d;
}

std::string FeatureSchema::fingerprint() const {
  std::ostringstream os;
  for (const auto& f : features_) os << f.name << ':' << to_string(f.owner) << ':' << to_string(f.kind) << ':' << f.vocab << ';';
  os << "d=" << embedding_dim_;
  return os.str();
}

FeatureSchema parse_schema(std::istream& is, std::size_t embedding_dim) {
  std::string line;
  bool header = false;
  int lineno = 0;
  std::vector<FeatureDecl> decls;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kSchemaHeader) throw IngestError("schema line " + std::to_string(lineno) + ": expected '" + kSchemaHeader + "'");
      header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string kw, name, owner, kind;
    ls >> kw >> name >> owner >> kind;
    const std::string where = "schema line " + std::to_string(lineno) + ": ";
    if (kw != "feature" || kind.empty()) throw IngestError(where + "expected 'feature <name> <owner> <kind> [vocab]'");
    FeatureDecl d;
    d.name = name;
    if (owner == "item")
      d.owner = Owner::item;
    else if (owner == "user")
      d.owner = Owner::user;
    else
      throw IngestError(where + "unknown owner '" + owner + "'");
    if (kind == "single")
      d.kind = Kind::single;
    else if (kind == "multi")
      d.kind = Kind::multi;
    else if (kind == "continuous")
      d.kind = Kind::continuous;
    else
      throw IngestError(where + "unknown kind '" + kind + "'");
    if (d.kind != Kind::continuous) {
      if (!(ls >> d.vocab) || d.vocab == 0) throw IngestError(where + "categorical feature needs a positive vocabulary size");
    }
    std::string extra;
    if (ls >> extra) throw IngestError(where + "unexpected token '" + extra + "'");
    decls.push_back(std::move(d));
  }
  if (!header) throw IngestError("schema: missing header '" + std::string(kSchemaHeader) + "'");
  try {
    return FeatureSchema(std::move(decls), embedding_dim);
  } catch (const ConfigError& e) {
    throw IngestError(e.what());
  }
}

FeatureSchema load_schema(const std::string& path, std::size_t embedding_dim) {
  std::ifstream is(path);
  if (!is) throw IngestError("cannot open schema: " + path);
  return parse_schema(is, embedding_dim);
}

void write_schema(std::ostream& os, const FeatureSchema& schema) {
  os << kSchemaHeader << '\n';
  for (const auto& f : schema.features()) {
    os << "feature " << f.name << ' ' << to_string(f.owner) << ' ' << to_string(f.kind);
    if (f.kind != Kind::continuous) os << ' ' << f.vocab;
    os << '\n';
  }
}

// -- table ----------------------------------------------------------------------

void validate_row(const FeatureSchema& schema, const RawInteraction& row) {
  if (row.values.size() != schema.num_features()) throw ContractError("row has wrong number of feature values");
  for (std::size_t m = 0; m < schema.num_features(); ++m) {
    const auto& f = schema.feature(m);
    const auto& v = row.values[m];
    switch (f.kind) {
      case Kind::single:
        if (v.ids.size() != 1) throw ContractError("feature '" + f.name + "' must hold exactly one id");
        break;
      case Kind::multi:
        if (v.ids.empty()) throw ContractError("feature '" + f.name + "' must hold a non-empty id set");
        break;
      case Kind::continuous:
        if (!v.ids.empty() || !std::isfinite(v.number))
          throw ContractError("feature '" + f.name + "' must hold one finite number");
        break;
    }
    for (auto id : v.ids)
      if (id >= f.vocab)
        throw ContractError("feature '" + f.name + "': id " + std::to_string(id) + " >= vocabulary " + std::to_string(f.vocab));
  }
  if (row.label != 0 && row.label != 1) throw ContractError("label must be 0 or 1");
  if (row.item != row.values[0].ids[0]) throw ContractError("item id does not match the item ID feature");
  if (row.user != row.values[schema.user_id_feature()].ids[0]) throw ContractError("user id does not match the user ID feature");
}

void InteractionTable::append(RawInteraction row) {
  validate_row(schema_, row);
  index_[row.item].push_back(rows_.size());
  rows_.push_back(std::move(row));
}

const std::vector<std::size_t>& InteractionTable::records_of(std::uint64_t item) const {
  auto it = index_.find(item);
  if (it == index_.end()) throw LookupError("unknown item " + std::to_string(item));
  return it->second;
}

InteractionTable load_dataset(std::istream& is, const FeatureSchema& schema, const LoadOptions& opts) {
  InteractionTable table(schema);
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  // column position for each schema feature, then label, then timestamp
  std::vector<std::size_t> pos(schema.num_features() + 2);
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header.empty()) {
      if (trim(line).empty()) continue;
      if (line[0] == '#') {
        // "#emerg-data vN" is a version line, any other '#' line a comment
        if (line.rfind("#emerg-data", 0) == 0 && trim(line) != kDataHeader)
          throw IngestError("row " + std::to_string(lineno) + ": unsupported data version '" + line + "'");
        continue;
      }
      header = split(line, ',');
      for (auto& h : header) h = trim(h);
      std::vector<std::string> wanted;
      for (const auto& f : schema.features()) wanted.push_back(f.name);
      wanted.push_back("label");
      wanted.push_back("timestamp");
      for (std::size_t w = 0; w < wanted.size(); ++w) {
        auto it = std::find(header.begin(), header.end(), wanted[w]);
        if (it == header.end()) throw IngestError("header: missing column '" + wanted[w] + "'");
        if (std::count(header.begin(), header.end(), wanted[w]) > 1)
          throw IngestError("header: duplicate column '" + wanted[w] + "'");
        pos[w] = static_cast<std::size_t>(it - header.begin());
      }
      if (header.size() != wanted.size()) {
        for (const auto& h : header)
          if (std::find(wanted.begin(), wanted.end(), h) == wanted.end())
            throw IngestError("header: unknown column '" + h + "'");
      }
      continue;
    }
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    const std::string row_tag = "row " + std::to_string(lineno);
    if (cells.size() != header.size())
      throw IngestError(row_tag + ": expected " + std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
    RawInteraction r;
    r.values.resize(schema.num_features());
    for (std::size_t m = 0; m < schema.num_features(); ++m) {
      const auto& f = schema.feature(m);
      const std::string cell = trim(cells[pos[m]]);
      const std::string where = row_tag + ", column '" + f.name + "': ";
      auto& v = r.values[m];
      if (f.kind == Kind::continuous) {
        if (!parse_number(cell, v.number) || !std::isfinite(v.number)) throw IngestError(where + "not a number: '" + cell + "'");
        continue;
      }
      const auto parts = f.kind == Kind::multi ? split(cell, '|') : std::vector<std::string>{cell};
      for (const auto& p : parts) {
        std::uint32_t id = 0;
        if (!parse_number(trim(p), id)) throw IngestError(where + "not a vocabulary index: '" + p + "'");
        if (id >= f.vocab) throw IngestError(where + "index " + std::to_string(id) + " outside vocabulary of size " + std::to_string(f.vocab));
        v.ids.push_back(id);
      }
    }
    const std::string label_cell = trim(cells[pos[schema.num_features()]]);
    if (opts.binarize_rating) {
      double rating = 0;
      if (!parse_number(label_cell, rating)) throw IngestError(row_tag + ", column 'label': not a rating: '" + label_cell + "'");
      r.label = rating >= opts.rating_threshold ? 1 : 0;
    } else {
      if (label_cell != "0" && label_cell != "1") throw IngestError(row_tag + ", column 'label': expected 0 or 1, got '" + label_cell + "'");
      r.label = label_cell == "1";
    }
    const std::string ts = trim(cells[pos[schema.num_features() + 1]]);
    if (!parse_number(ts, r.timestamp)) throw IngestError(row_tag + ", column 'timestamp': not an integer: '" + ts + "'");
    r.item = r.values[0].ids[0];
    r.user = r.values[schema.user_id_feature()].ids[0];
    try {
      table.append(std::move(r));
    } catch (const ContractError& e) {
      throw IngestError(row_tag + ": " + e.what());
    }
  }
  return table;
}

InteractionTable load_dataset(const std::string& path, const FeatureSchema& schema, const LoadOptions& opts) {
  std::ifstream is(path);
  if (!is) throw IngestError("cannot open dataset: " + path);
  return load_dataset(is, schema, opts);
}

void save_dataset(std::ostream& os, const InteractionTable& table) {
  const auto& schema = table.schema();
  os << kDataHeader << '\n';
  for (const auto& f : schema.features()) os << f.name << ',';
  os << "label,timestamp\n";
  for (const auto& r : table.rows()) {
    for (std::size_t m = 0; m < schema.num_features(); ++m) {
      const auto& v = r.values[m];
      if (schema.feature(m).kind == Kind::continuous) {
        os << ad::format_double(v.number);
      } else {
        for (std::size_t i = 0; i < v.ids.size(); ++i) os << (i ? "|" : "") << v.ids[i];
      }
      os << ',';
    }
    os << r.label << ',' << r.timestamp << '\n';
  }
}

void save_dataset(const std::string& path, const InteractionTable& table) {
  std::ofstream os(path);
  if (!os) throw IngestError("cannot write dataset: " + path);
  save_dataset(os, table);
}

// -- split / phases / tasks ----------------------------------------------------------

ItemSplit split_items(const InteractionTable& table, std::size_t threshold, std::size_t shots) {
  if (threshold <= 3 * shots)
    throw ConfigError("split: threshold N=" + std::to_string(threshold) + " must exceed 3K=" + std::to_string(3 * shots));
  ItemSplit s;
  s.threshold = threshold;
  s.shots = shots;
  for (const auto& [item, recs] : table.items()) {
    if (recs.size() > threshold)
      s.old_items.insert(item);
    else if (recs.size() < threshold && recs.size() > 3 * shots)
      s.new_items.insert(item);
  }
  return s;
}

ItemPhases build_item_phases(const InteractionTable& table, std::uint64_t item, std::size_t shots) {
  std::vector<std::size_t> recs = table.records_of(item);
  if (recs.size() <= 3 * shots)
    throw ContractError("phases: item " + std::to_string(item) + " has " + std::to_string(recs.size()) +
                        " records, needs more than 3K=" + std::to_string(3 * shots));
  std::stable_sort(recs.begin(), recs.end(),
                   [&](std::size_t x, std::size_t y) { return table.row(x).timestamp < table.row(y).timestamp; });
  ItemPhases p;
  auto it = recs.begin();
  p.a.assign(it, it + shots);
  p.b.assign(it + shots, it + 2 * shots);
  p.c.assign(it + 2 * shots, it + 3 * shots);
  p.test.assign(it + 3 * shots, recs.end());
  return p;
}

PhasePlan build_phases(const InteractionTable& table, const ItemSplit& split) {
  PhasePlan plan;
  plan.shots = split.shots;
  for (auto item : split.new_items) plan.items.emplace(item, build_item_phases(table, item, split.shots));
  return plan;
}

Task sample_task(const InteractionTable& table, std::uint64_t item, std::size_t n_support, std::size_t n_query,
                 Rng& rng) {
  const auto& recs = table.records_of(item);
  if (n_support == 0 || n_query == 0) throw SamplingError("task: support and query sizes must be positive");
  if (recs.size() < n_support + n_query)
    throw SamplingError("task: item " + std::to_string(item) + " has " + std::to_string(recs.size()) +
                        " records, needs " + std::to_string(n_support + n_query));
  std::vector<std::size_t> order = recs;
  // Partial Fisher-Yates: the first n_support + n_query slots are a uniform sample.
  for (std::size_t i = 0; i < n_support + n_query; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  Task t;
  t.item = item;
  t.item_record = recs.front();
  t.support.assign(order.begin(), order.begin() + n_support);
  t.query.assign(order.begin() + n_support, order.begin() + n_support + n_query);
  return t;
}

// -- synthetic generator ------------------------------------------------------------

SynthDataset synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.old_items + cfg.new_items == 0 || cfg.users == 0) throw ConfigError("synth: need at least one item and user");
  if (cfg.categories == 0 || cfg.attr_vocab < 2) throw ConfigError("synth: categories >= 1 and attr_vocab >= 2 required");
  if (cfg.noise < 0 || cfg.noise > 0.5) throw ConfigError("synth: noise must lie in [0, 0.5]");

  std::vector<FeatureDecl> decls;
  const std::size_t n_items = cfg.old_items + cfg.new_items;
  decls.push_back({"item_id", Owner::item, Kind::single, n_items});
  decls.push_back({"i_cat", Owner::item, Kind::single, cfg.categories});
  for (std::size_t a = 0; a < cfg.item_attrs; ++a)
    decls.push_back({"i_a" + std::to_string(a + 1), Owner::item, Kind::single, cfg.attr_vocab});
  decls.push_back({"user_id", Owner::user, Kind::single, cfg.users});
  for (std::size_t a = 0; a < cfg.user_attrs; ++a)
    decls.push_back({"u_a" + std::to_string(a + 1), Owner::user, Kind::single, cfg.attr_vocab});
  FeatureSchema schema(decls, cfg.embedding_dim);

  std::vector<std::size_t> pairable;
  for (std::size_t m = 0; m < schema.num_features(); ++m)
    if (m != 0 && m != schema.user_id_feature()) pairable.push_back(m);
  if (pairable.size() < 2) throw ConfigError("synth: fewer than 2 non-ID fields; no feature pair can be planted");

  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < pairable.size(); ++i)
    for (std::size_t j = i + 1; j < pairable.size(); ++j) candidates.emplace_back(pairable[i], pairable[j]);

  Rng rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);

  std::pair<std::size_t, std::size_t> forced{0, 0};
  if (!cfg.forced_pair.empty()) {
    auto names = split(cfg.forced_pair, ',');
    if (names.size() != 2) throw ConfigError("synth: forced_pair must be 'a,b'");
    auto a = schema.index_of(trim(names[0])), b = schema.index_of(trim(names[1]));
    if (a == b || a == 0 || b == 0 || a == schema.user_id_feature() || b == schema.user_id_feature())
      throw ConfigError("synth: forced_pair must name two distinct non-ID fields");
    forced = {std::min(a, b), std::max(a, b)};
  }

  // Fixed attribute values per user and per item.
  std::uniform_int_distribution<std::uint32_t> attr(0, static_cast<std::uint32_t>(cfg.attr_vocab - 1));
  std::uniform_int_distribution<std::uint32_t> cat(0, static_cast<std::uint32_t>(cfg.categories - 1));
  std::vector<std::vector<std::uint32_t>> user_attrs(cfg.users, std::vector<std::uint32_t>(cfg.user_attrs));
  for (auto& u : user_attrs)
    for (auto& v : u) v = attr(rng);
  std::vector<std::vector<std::uint32_t>> item_vals(n_items);
  for (auto& iv : item_vals) {
    iv.push_back(cat(rng));
    for (std::size_t a = 0; a < cfg.item_attrs; ++a) iv.push_back(attr(rng));
  }

  SynthDataset ds{InteractionTable(schema), {}};
  std::uniform_int_distribution<std::size_t> pick_user(0, cfg.users - 1);
  std::uniform_int_distribution<std::int64_t> gap(1, 100);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto code = [&](std::size_t m, std::uint32_t v) {
    const double vocab = static_cast<double>(schema.feature(m).vocab);
    return vocab < 2 ? 0.0 : -1.0 + 2.0 * v / (vocab - 1.0);
  };

  for (std::size_t item = 0; item < n_items; ++item) {
    const std::size_t category = item_vals[item][0];
    const auto pair = cfg.forced_pair.empty() ? candidates[category % candidates.size()] : forced;
    ds.pairs.emplace(item, pair);
    const std::size_t n = item < cfg.old_items ? cfg.old_records : cfg.new_records;
    std::int64_t ts = static_cast<std::int64_t>(item) * 1000;
    for (std::size_t k = 0; k < n; ++k) {
      RawInteraction r;
      r.item = item;
      r.user = pick_user(rng);
      r.values.resize(schema.num_features());
      r.values[0].ids = {static_cast<std::uint32_t>(item)};
      for (std::size_t a = 0; a < item_vals[item].size(); ++a) r.values[1 + a].ids = {item_vals[item][a]};
      r.values[schema.user_id_feature()].ids = {static_cast<std::uint32_t>(r.user)};
      for (std::size_t a = 0; a < cfg.user_attrs; ++a)
        r.values[schema.user_id_feature() + 1 + a].ids = {user_attrs[r.user][a]};
      const std::uint32_t va = r.values[pair.first].ids[0];
      const std::uint32_t vb = r.values[pair.second].ids[0];
      int label = 0;
      if (cfg.mode == LabelMode::joint_set) {
        label = (va + vb) % 2 == 0 ? 1 : 0;
      } else {
        const double z = cfg.strength * code(pair.first, va) * code(pair.second, vb);
        label = unit(rng) < 1.0 / (1.0 + std::exp(-z)) ? 1 : 0;
      }
      if (unit(rng) < cfg.noise) label = 1 - label;
      r.label = label;
      ts += gap(rng);
      r.timestamp = ts;
      ds.table.append(std::move(r));
    }
  }
  return ds;
}

void save_pair_registry(std::ostream& os, const SynthDataset& ds) {
  const auto& schema = ds.table.schema();
  os << "item,field_a,field_b\n";
  for (const auto& [item, p] : ds.pairs)
    os << item << ',' << schema.feature(p.first).name << ',' << schema.feature(p.second).name << '\n';
}

}  // namespace emerg::data
