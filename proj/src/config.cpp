#include "emerg/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "emerg/errors.hpp"
#include "emerg/oracle.hpp"
#include "emerg/params.hpp"

namespace emerg::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(trim(part));
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& want) {
  throw ConfigError("key '" + key + "': expected " + want + ", got '" + value + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (v.empty() || r.ec != std::errc() || r.ptr != end) bad(key, v, "a non-negative integer");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (v.empty() || r.ec != std::errc() || r.ptr != end || !std::isfinite(out)) bad(key, v, "a finite number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, v, "true or false");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& p : split_list(v)) out.push_back(to_size(key, p));
  return out;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::vector<std::string> parts;
  for (auto x : v) parts.push_back(std::to_string(x));
  return join(parts);
}

std::string str(bool b) { return b ? "true" : "false"; }
std::string str(double d) { return ad::format_double(d); }
std::string str(std::size_t n) { return std::to_string(n); }

std::string op_name(ad::Combine op) {
  switch (op) {
    case ad::Combine::product: return "product";
    case ad::Combine::sum: return "sum";
    case ad::Combine::max: return "max";
  }
  return "?";
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool affects_results = true;
};

#define SIZE_KEY(name, field)                                                       \
  Key { name, [](RunConfig& c, const std::string& v) { c.field = to_size(name, v); }, \
        [](const RunConfig& c) { return str(c.field); } }
#define DOUBLE_KEY(name, field)                                                       \
  Key { name, [](RunConfig& c, const std::string& v) { c.field = to_double(name, v); }, \
        [](const RunConfig& c) { return str(c.field); } }
#define BOOL_KEY(name, field)                                                       \
  Key { name, [](RunConfig& c, const std::string& v) { c.field = to_bool(name, v); }, \
        [](const RunConfig& c) { return str(c.field); } }
#define SIZES_KEY(name, field)                                                       \
  Key { name, [](RunConfig& c, const std::string& v) { c.field = to_sizes(name, v); }, \
        [](const RunConfig& c) { return join(c.field); } }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      // published hyperparameters
      SIZE_KEY("gnn_layers", meta.model.layers),
      Key{"sparsify_k",
          [](RunConfig& c, const std::string& v) {
            if (v == "auto")
              c.meta.model.k_sparse.reset();
            else
              c.meta.model.k_sparse = to_size("sparsify_k", v);
          },
          [](const RunConfig& c) { return c.meta.model.k_sparse ? str(*c.meta.model.k_sparse) : "auto"; }},
      DOUBLE_KEY("gamma", meta.gamma),
      SIZE_KEY("num_heads", meta.model.heads),
      SIZE_KEY("embedding_dim", embedding_dim),
      SIZE_KEY("batch_size", meta.batch_size),
      DOUBLE_KEY("pretrain_lr", meta.pretrain_lr),
      SIZE_KEY("pretrain_epochs", meta.pretrain_epochs),
      DOUBLE_KEY("meta_lr", meta.meta_lr),
      SIZE_KEY("meta_epochs", meta.meta_epochs),
      DOUBLE_KEY("inner_lr", meta.inner_lr),
      DOUBLE_KEY("warmup_lr", meta.warmup_lr),
      SIZE_KEY("warmup_epochs", meta.warmup_epochs),
      // protocol
      SIZE_KEY("shots", meta.shots),
      SIZE_KEY("threshold", meta.threshold),
      SIZE_KEY("support_size", meta.support_size),
      SIZE_KEY("query_size", meta.query_size),
      SIZE_KEY("inner_steps", meta.inner_steps),
      BOOL_KEY("first_order", meta.first_order),
      Key{"seed", [](RunConfig& c, const std::string& v) { c.meta.seed = to_u64("seed", v); },
          [](const RunConfig& c) { return std::to_string(c.meta.seed); }},
      // architecture
      Key{"interaction_op",
          [](RunConfig& c, const std::string& v) {
            if (v == "product")
              c.meta.model.op = ad::Combine::product;
            else if (v == "sum")
              c.meta.model.op = ad::Combine::sum;
            else if (v == "max")
              c.meta.model.op = ad::Combine::max;
            else
              bad("interaction_op", v, "product, sum or max");
          },
          [](const RunConfig& c) { return op_name(c.meta.model.op); }},
      SIZES_KEY("hyper_hidden", meta.model.hyper_hidden),
      SIZES_KEY("c1_hidden", meta.model.c1_hidden),
      SIZES_KEY("c2_hidden", meta.model.c2_hidden),
      // ablations
      BOOL_KEY("random_graph", meta.ablations.random_graph),
      BOOL_KEY("no_sparsify", meta.ablations.no_sparsify),
      BOOL_KEY("no_mask", meta.ablations.no_mask),
      BOOL_KEY("shared_graph", meta.ablations.shared_graph),
      BOOL_KEY("no_meta", meta.ablations.no_meta),
      BOOL_KEY("no_inner", meta.ablations.no_inner),
      // data
      Key{"dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; },
          [](const RunConfig& c) { return c.dataset; }},
      Key{"schema", [](RunConfig& c, const std::string& v) { c.schema = v; },
          [](const RunConfig& c) { return c.schema; }},
      BOOL_KEY("binarize_rating", binarize_rating),
      DOUBLE_KEY("rating_threshold", rating_threshold),
      Key{"workers", [](RunConfig& c, const std::string& v) { c.workers = to_size("workers", v); },
          [](const RunConfig& c) { return str(c.workers); }, false},
      // command options
      Key{"item",
          [](RunConfig& c, const std::string& v) {
            if (v.empty())
              c.item.reset();
            else
              c.item = to_u64("item", v);
          },
          [](const RunConfig& c) { return c.item ? std::to_string(*c.item) : std::string(); }},
      Key{"phases", [](RunConfig& c, const std::string& v) { c.phases = split_list(v); },
          [](const RunConfig& c) { return join(c.phases); }},
      BOOL_KEY("export_phases", export_phases),
      SIZE_KEY("common_extra", common_extra),
      SIZES_KEY("common_sizes", common_sizes),
      BOOL_KEY("common_unfreeze", common_unfreeze),
      SIZE_KEY("oracle_features", oracle_features),
      SIZE_KEY("oracle_layers", oracle_layers),
      SIZE_KEY("oracle_trials", oracle_trials),
      DOUBLE_KEY("oracle_density", oracle_density),
      // synthetic generator
      SIZE_KEY("synth_old_items", synth.old_items),
      SIZE_KEY("synth_new_items", synth.new_items),
      SIZE_KEY("synth_old_records", synth.old_records),
      SIZE_KEY("synth_new_records", synth.new_records),
      SIZE_KEY("synth_users", synth.users),
      SIZE_KEY("synth_categories", synth.categories),
      SIZE_KEY("synth_item_attrs", synth.item_attrs),
      SIZE_KEY("synth_user_attrs", synth.user_attrs),
      SIZE_KEY("synth_attr_vocab", synth.attr_vocab),
      DOUBLE_KEY("synth_noise", synth.noise),
      Key{"synth_mode",
          [](RunConfig& c, const std::string& v) {
            if (v == "joint_set")
              c.synth.mode = data::LabelMode::joint_set;
            else if (v == "multiplicative")
              c.synth.mode = data::LabelMode::multiplicative;
            else
              bad("synth_mode", v, "joint_set or multiplicative");
          },
          [](const RunConfig& c) {
            return std::string(c.synth.mode == data::LabelMode::joint_set ? "joint_set" : "multiplicative");
          }},
      DOUBLE_KEY("synth_strength", synth.strength),
      DOUBLE_KEY("synth_positive_target", synth.positive_target),
      Key{"synth_forced_pair", [](RunConfig& c, const std::string& v) { c.synth.forced_pair = v; },
          [](const RunConfig& c) { return c.synth.forced_pair; }},
  };
  return table;
}

#undef SIZE_KEY
#undef DOUBLE_KEY
#undef BOOL_KEY
#undef SIZES_KEY

}  // namespace

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : keys())
    if (k.name == key) {
      k.set(cfg, trim(value));
      cfg.synth.embedding_dim = cfg.embedding_dim;
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(std::istream& is, RunConfig base) {
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    try {
      set_key(base, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, std::move(base));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

std::vector<std::pair<std::string, std::string>> resolved(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) out.emplace_back(k.name, k.get(cfg));
  return out;
}

void write_resolved(std::ostream& os, const RunConfig& cfg) {
  for (const auto& [k, v] : resolved(cfg)) os << k << " = " << v << '\n';
}

std::string resolved_line(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : resolved(cfg)) out += (out.empty() ? "" : " ") + k + "=" + v;
  return out;
}

std::string ablation_tag(const meta::Ablations& a) {
  std::vector<std::string> on;
  if (a.random_graph) on.push_back("random_graph");
  if (a.no_sparsify) on.push_back("no_sparsify");
  if (a.no_mask) on.push_back("no_mask");
  if (a.shared_graph) on.push_back("shared_graph");
  if (a.no_meta) on.push_back("no_meta");
  if (a.no_inner) on.push_back("no_inner");
  if (on.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < on.size(); ++i) out += (i ? "+" : "") + on[i];
  return out;
}

std::string fingerprint(const RunConfig& cfg) {
  // FNV-1a over the result-affecting entries
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& k : keys()) {
    if (!k.affects_results) continue;
    for (char ch : k.name + "=" + k.get(cfg) + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h << '/' << ablation_tag(cfg.meta.ablations);
  return os.str();
}

void validate(const RunConfig& cfg) {
  cfg.meta.validate();
  if (cfg.embedding_dim == 0) throw ConfigError("key 'embedding_dim': must be positive");
  if (cfg.meta.model.layers == 0) throw ConfigError("key 'gnn_layers': must be positive");
  if (cfg.meta.model.heads == 0 || cfg.embedding_dim % cfg.meta.model.heads != 0)
    throw ConfigError("key 'num_heads': must divide embedding_dim (" + std::to_string(cfg.embedding_dim) + ")");
  if (cfg.workers == 0) throw ConfigError("key 'workers': must be positive");
  static const std::set<std::string> known{"cold", "A", "B", "C"};
  for (const auto& p : cfg.phases)
    if (!known.count(p)) throw ConfigError("key 'phases': unknown phase '" + p + "'");
  if (cfg.oracle_features == 0 || cfg.oracle_features > oracle::kMaxFeatures)
    throw ConfigError("key 'oracle_features': must lie in [1, " + std::to_string(oracle::kMaxFeatures) + "]");
  if (cfg.oracle_layers == 0 || cfg.oracle_layers > oracle::kMaxLayers)
    throw ConfigError("key 'oracle_layers': must lie in [1, " + std::to_string(oracle::kMaxLayers) + "]");
  if (cfg.oracle_density < 0.0 || cfg.oracle_density > 1.0)
    throw ConfigError("key 'oracle_density': must lie in [0, 1]");
}

void require(const RunConfig& cfg, const std::string& key) {
  for (const auto& k : keys())
    if (k.name == key) {
      if (k.get(cfg).empty()) throw ConfigError("missing required key '" + key + "'");
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace emerg::cli
