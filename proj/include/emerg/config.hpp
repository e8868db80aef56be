#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "emerg/data.hpp"
#include "emerg/meta.hpp"

namespace emerg::cli {

// Flat run configuration. Every key has a default; the file only overrides.
struct RunConfig {
  meta::MetaConfig meta;
  std::size_t embedding_dim = 16;
  std::string dataset;
  std::string schema;
  bool binarize_rating = false;
  double rating_threshold = 4.0;
  std::size_t workers = 1;

  // command options
  std::optional<std::uint64_t> item;
  std::vector<std::string> phases{"cold", "A", "B", "C"};
  bool export_phases = false;
  std::size_t common_extra = 0;
  std::vector<std::size_t> common_sizes;
  bool common_unfreeze = false;
  std::size_t oracle_features = 6;
  std::size_t oracle_layers = 3;
  std::size_t oracle_trials = 50;
  double oracle_density = 0.5;

  data::SynthConfig synth;
};

// Sets one key from its textual value. Unknown keys and malformed values
// throw ConfigError naming the key.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);

// `key = value` lines; `#` starts a comment. Duplicate keys are errors.
RunConfig parse_config(std::istream& is, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

std::vector<std::string> config_keys();
// Every key with its resolved value, in config_keys() order.
std::vector<std::pair<std::string, std::string>> resolved(const RunConfig& cfg);
void write_resolved(std::ostream& os, const RunConfig& cfg);
// Single line `key=value key=value ...`.
std::string resolved_line(const RunConfig& cfg);

// "none" or the active ablation names joined by '+'.
std::string ablation_tag(const meta::Ablations& a);
// Hash of every result-affecting key, then the ablation tag: "<hex>/<tag>".
std::string fingerprint(const RunConfig& cfg);

// Cross-field checks (MetaConfig rules, oracle limits, phase names).
void validate(const RunConfig& cfg);
// Throws ConfigError("missing required key '<key>'") when the path is empty.
void require(const RunConfig& cfg, const std::string& key);

}  // namespace emerg::cli
