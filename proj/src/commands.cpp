#include "emerg/commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "emerg/errors.hpp"
#include "emerg/graph.hpp"
#include "emerg/meta.hpp"
#include "emerg/metrics.hpp"
#include "emerg/model.hpp"
#include "emerg/oracle.hpp"
#include "emerg/params.hpp"

namespace emerg::cli {

namespace {

struct Inputs {
  data::FeatureSchema schema;
  data::InteractionTable table;
};

Inputs load_inputs(const RunConfig& cfg) {
  require(cfg, "schema");
  require(cfg, "dataset");
  if (!fs::exists(cfg.schema)) throw ConfigError("key 'schema': no such file '" + cfg.schema + "'");
  if (!fs::exists(cfg.dataset)) throw ConfigError("key 'dataset': no such file '" + cfg.dataset + "'");
  Inputs in;
  in.schema = data::load_schema(cfg.schema, cfg.embedding_dim);
  in.table = data::load_dataset(cfg.dataset, in.schema, {cfg.binarize_rating, cfg.rating_threshold});
  return in;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  return os;
}

// One comment line carrying the resolved config, ahead of CSV content.
void config_comment(std::ostream& os, const RunConfig& cfg) {
  os << "# fingerprint=" << fingerprint(cfg) << ' ' << resolved_line(cfg) << '\n';
}

void write_config_echo(const RunConfig& cfg, const fs::path& out) {
  auto os = open_out(out / "config.resolved");
  os << "# fingerprint " << fingerprint(cfg) << '\n';
  write_resolved(os, cfg);
}

// Loads θ and checks it against the schema and the configured architecture.
ad::ParamStore load_theta(const RunConfig& cfg, const model::Model& model, const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint: no such file '" + path.string() + "'");
  std::map<std::string, std::string> meta;
  auto theta = ad::load_checkpoint(path.string(), &meta);
  const auto it = meta.find("schema");
  if (it == meta.end() || it->second != model.schema().fingerprint())
    throw IngestError("checkpoint '" + path.string() + "' was trained on a different schema");
  ad::Rng rng(0);
  const auto expected = meta::init_theta(model, cfg.meta, rng);
  for (const auto& [name, p] : expected) {
    if (!theta.contains(name))
      throw IngestError("checkpoint '" + path.string() + "' lacks parameter '" + name +
                        "' (architecture or ablation mismatch)");
    if (theta.value(name).shape() != p.value.shape())
      throw IngestError("checkpoint '" + path.string() + "': parameter '" + name + "' has shape " +
                        shape_string(theta.value(name).shape()) + ", expected " + shape_string(p.value.shape()));
  }
  if (theta.size() != expected.size())
    throw IngestError("checkpoint '" + path.string() + "' has parameters the configured model does not use");
  return theta;
}

void write_reports(const RunConfig& cfg, const std::vector<eval::MetricReport>& reports,
                   const std::vector<std::string>& notes, const fs::path& out, const std::string& stem) {
  {
    auto os = open_out(out / (stem + ".csv"));
    config_comment(os, cfg);
    eval::write_reports_csv(os, reports);
  }
  auto os = open_out(out / (stem + ".json"));
  auto all = notes;
  all.push_back("config: " + resolved_line(cfg));
  eval::write_reports_json(os, reports, fingerprint(cfg), cfg.meta.seed, all);
}

std::vector<std::string> feature_names(const data::FeatureSchema& schema) {
  std::vector<std::string> out;
  for (const auto& f : schema.features()) out.push_back(f.name);
  return out;
}

}  // namespace

void cmd_train(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  validate(cfg);
  const auto in = load_inputs(cfg);
  const model::Model model(in.schema, cfg.meta.effective_model());
  const auto split = data::split_items(in.table, cfg.meta.threshold, cfg.meta.shots);
  if (split.old_items.empty())
    throw ConfigError("dataset has no old items (more than threshold = " + std::to_string(cfg.meta.threshold) +
                      " records)");
  log << "train: " << split.old_items.size() << " old items, " << split.new_items.size() << " new items\n";

  ad::Rng rng(cfg.meta.seed);
  auto theta = meta::init_theta(model, cfg.meta, rng);
  auto rows = meta::pretrain(theta, model, in.table, split.old_items, cfg.meta, rng);
  const auto meta_rows = meta::meta_train(theta, model, in.table, split.old_items, cfg.meta, rng);
  rows.insert(rows.end(), meta_rows.begin(), meta_rows.end());

  std::map<std::string, std::string> meta{{"fingerprint", fingerprint(cfg)},
                                          {"seed", std::to_string(cfg.meta.seed)},
                                          {"schema", in.schema.fingerprint()}};
  for (const auto& [k, v] : resolved(cfg)) meta["config." + k] = v;
  fs::create_directories(out);
  ad::save_checkpoint((out / "checkpoint.txt").string(), theta, meta);
  {
    auto os = open_out(out / "train_log.csv");
    config_comment(os, cfg);
    meta::write_log_csv(os, rows);
  }
  write_config_echo(cfg, out);
  if (!meta_rows.empty()) log << "train: final loss " << ad::format_double(meta_rows.back().loss) << '\n';
  log << "train: wrote " << (out / "checkpoint.txt").string() << '\n';
}

void cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out, std::ostream& log) {
  validate(cfg);
  const auto in = load_inputs(cfg);
  const model::Model model(in.schema, cfg.meta.effective_model());
  const auto theta = load_theta(cfg, model, checkpoint);
  const auto split = data::split_items(in.table, cfg.meta.threshold, cfg.meta.shots);
  const auto plan = data::build_phases(in.table, split);

  std::vector<eval::MetricReport> reports;
  std::vector<std::string> notes;
  if (plan.items.empty()) {
    notes.push_back("no new items: no item has between 3K and N records (K = " + std::to_string(cfg.meta.shots) +
                    ", N = " + std::to_string(cfg.meta.threshold) + ")");
  } else {
    const auto items = meta::evaluate_items(theta, model, in.table, plan, cfg.meta, cfg.workers);
    notes.push_back(std::to_string(items.size()) + " new items");
    for (const auto& pooled : meta::pool_phases(items)) {
      if (std::find(cfg.phases.begin(), cfg.phases.end(), pooled.phase) == cfg.phases.end()) continue;
      try {
        reports.push_back(eval::make_report(pooled.phase, pooled.predictions, pooled.labels, fingerprint(cfg),
                                            cfg.meta.seed));
      } catch (const MetricError& e) {
        notes.push_back("phase " + pooled.phase + " skipped: " + e.what());
      }
    }
  }
  write_reports(cfg, reports, notes, out, "report");
  write_config_echo(cfg, out);
  for (const auto& r : reports)
    log << r.phase << " auc=" << ad::format_double(r.auc) << " f1=" << ad::format_double(r.f1) << '\n';
  for (const auto& n : notes) log << "note: " << n << '\n';
}

void cmd_common(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out, std::ostream& log) {
  validate(cfg);
  const auto in = load_inputs(cfg);
  const model::Model model(in.schema, cfg.meta.effective_model());
  const auto theta = load_theta(cfg, model, checkpoint);
  const auto split = data::split_items(in.table, cfg.meta.threshold, cfg.meta.shots);
  const auto plan = data::build_phases(in.table, split);

  meta::CommonOptions opts{cfg.common_extra, cfg.common_sizes, cfg.common_unfreeze};
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> pooled;
  std::vector<std::string> notes;
  for (const auto& [item, phases] : plan.items) {
    if (phases.test.size() <= cfg.common_extra) {
      notes.push_back("item " + std::to_string(item) + " skipped: test pool too small for common_extra");
      continue;
    }
    for (const auto& r : meta::common_train(theta, model, in.table, item, phases, cfg.meta, opts)) {
      if (!pooled.count(r.phase)) order.push_back(r.phase);
      auto& [p, l] = pooled[r.phase];
      p.insert(p.end(), r.predictions.begin(), r.predictions.end());
      l.insert(l.end(), r.labels.begin(), r.labels.end());
    }
  }
  std::vector<eval::MetricReport> reports;
  for (const auto& phase : order) {
    const auto& [p, l] = pooled[phase];
    try {
      reports.push_back(eval::make_report(phase, p, l, fingerprint(cfg), cfg.meta.seed));
    } catch (const MetricError& e) {
      notes.push_back("stage " + phase + " skipped: " + e.what());
    }
  }
  if (plan.items.empty()) notes.push_back("no new items");
  write_reports(cfg, reports, notes, out, "common");
  write_config_echo(cfg, out);
  for (const auto& r : reports) log << r.phase << " auc=" << ad::format_double(r.auc) << '\n';
}

void cmd_export_graph(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out, std::ostream& log) {
  validate(cfg);
  if (!cfg.item) throw ConfigError("missing required key 'item'");
  const auto in = load_inputs(cfg);
  const model::Model model(in.schema, cfg.meta.effective_model());
  const auto theta = load_theta(cfg, model, checkpoint);
  const auto item = *cfg.item;
  if (!in.table.has_item(item)) throw LookupError("unknown item " + std::to_string(item));

  std::vector<std::pair<std::string, meta::ItemPhi>> states;
  if (cfg.export_phases) {
    const auto phases = data::build_item_phases(in.table, item, cfg.meta.shots);
    const auto ev = meta::evaluate_phases(theta, model, in.table, item, phases, cfg.meta);
    for (std::size_t s = 0; s < ev.states.size(); ++s) states.emplace_back(ev.phases[s].phase, ev.states[s]);
  } else {
    const ad::Binding frozen = meta::bind_frozen(theta);
    states.emplace_back("cold", meta::cold_phi(model, frozen, cfg.meta, in.table.row(in.table.records_of(item).front())));
  }

  const auto names = feature_names(in.schema);
  for (const auto& [label, phi] : states) {
    const auto stack = model.stack(phi.bar1);
    for (std::size_t l = 0; l < stack.final.size(); ++l) {
      const auto path = out / ("graph_" + std::to_string(item) + "_" + label + "_A" + std::to_string(l + 1) + ".csv");
      auto os = open_out(path);
      config_comment(os, cfg);
      graph::write_matrix_csv(os, stack.final[l].value(), names);
    }
  }
  write_config_echo(cfg, out);
  log << "export-graph: item " << item << ", " << states.size() << " state(s) x " << model.config().layers
      << " layers\n";
}

bool cmd_oracle(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  validate(cfg);
  const std::size_t f = cfg.oracle_features, nl = cfg.oracle_layers;
  std::mt19937_64 rng(cfg.meta.seed);
  const auto shown = oracle::random_pattern(f, cfg.oracle_density, rng);

  auto os = open_out(out / "oracle.csv");
  config_comment(os, cfg);
  oracle::write_degree_table(os, f, nl, shown);
  oracle::write_degree_table(log, f, nl, shown);

  bool ok = true;
  for (std::size_t layers = 1; layers <= nl; ++layers)
    for (std::size_t t = 0; t < cfg.oracle_trials; ++t) {
      std::vector<oracle::Pattern> pats;
      for (std::size_t l = 0; l < layers; ++l) pats.push_back(oracle::random_pattern(f, cfg.oracle_density, rng));
      const auto r = oracle::check_prop1(f, layers, pats);
      if (!r.holds) {
        ok = false;
        log << "prop1 FAILED: N_l=" << layers << " trial " << t << " layer " << r.counterexample->layer << " node "
            << r.counterexample->node << " monomial " << r.counterexample->monomial.str() << '\n';
      }
    }
  log << "prop1 over " << cfg.oracle_trials << " random patterns per depth: " << (ok ? "pass" : "fail") << '\n';
  write_config_echo(cfg, out);
  return ok;
}

void cmd_synth(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  auto sc = cfg.synth;
  sc.embedding_dim = cfg.embedding_dim;
  const auto ds = data::synth_generate(sc, cfg.meta.seed);
  fs::create_directories(out);
  {
    std::ostringstream body;
    data::save_dataset(body, ds.table);
    const auto text = body.str();
    const auto first = text.find('\n') + 1;  // keep the version line first
    auto os = open_out(out / "data.csv");
    os << text.substr(0, first);
    config_comment(os, cfg);
    os << text.substr(first);
  }
  {
    auto os = open_out(out / "schema.txt");
    config_comment(os, cfg);
    data::write_schema(os, ds.table.schema());
  }
  {
    auto os = open_out(out / "pairs.csv");
    config_comment(os, cfg);
    data::save_pair_registry(os, ds);
  }
  write_config_echo(cfg, out);
  log << "synth: " << ds.table.size() << " records, " << ds.table.items().size() << " items\n";
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IngestError*>(&e) ||
      dynamic_cast<const LookupError*>(&e))
    return 1;
  return 2;
}

}  // namespace emerg::cli
