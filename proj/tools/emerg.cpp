// emerg: train, evaluate and inspect EmerG models from the command line.
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "emerg/commands.hpp"
#include "emerg/errors.hpp"

namespace {

using emerg::cli::RunConfig;

RunConfig build_config(const std::string& file, const std::vector<std::string>& sets) {
  RunConfig cfg;
  if (!file.empty()) cfg = emerg::cli::load_config(file);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw emerg::ConfigError("--set expects key=value, got '" + kv + "'");
    emerg::cli::set_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EmerG cold-start CTR prediction"};
  app.require_subcommand(1);

  std::string config_file, out = "out", checkpoint, phases = "A,B,C";
  std::vector<std::string> sets;
  std::string item;

  auto common_opts = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", sets, "override one key (key=value), repeatable");
    sub->add_option("-o,--out", out, "output directory")->capture_default_str();
  };
  auto needs_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required();
  };

  auto* train = app.add_subcommand("train", "pretrain and meta-train on the old items");
  common_opts(train);
  auto* eval = app.add_subcommand("eval", "cold-start and warm-up report over the new items");
  common_opts(eval);
  needs_checkpoint(eval);
  auto* warmup = app.add_subcommand("warmup", "eval restricted to the chosen phases");
  common_opts(warmup);
  needs_checkpoint(warmup);
  warmup->add_option("--phases", phases, "comma-separated subset of cold,A,B,C")->capture_default_str();
  auto* common = app.add_subcommand("common", "sweep over extra records once an item has plenty");
  common_opts(common);
  needs_checkpoint(common);
  auto* exportg = app.add_subcommand("export-graph", "write an item's adjacency matrices as CSV");
  common_opts(exportg);
  needs_checkpoint(exportg);
  exportg->add_option("--item", item, "item id (overrides the item key)");
  auto* oracle = app.add_subcommand("oracle", "symbolic interaction-order tables");
  common_opts(oracle);
  auto* synth = app.add_subcommand("synth", "generate a planted-interaction dataset");
  common_opts(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto cfg = build_config(config_file, sets);
    if (!item.empty()) emerg::cli::set_key(cfg, "item", item);
    if (warmup->parsed()) emerg::cli::set_key(cfg, "phases", phases);

    if (train->parsed()) emerg::cli::cmd_train(cfg, out, std::cout);
    if (eval->parsed() || warmup->parsed()) emerg::cli::cmd_eval(cfg, checkpoint, out, std::cout);
    if (common->parsed()) emerg::cli::cmd_common(cfg, checkpoint, out, std::cout);
    if (exportg->parsed()) emerg::cli::cmd_export_graph(cfg, checkpoint, out, std::cout);
    if (oracle->parsed() && !emerg::cli::cmd_oracle(cfg, out, std::cout)) return 2;
    if (synth->parsed()) emerg::cli::cmd_synth(cfg, out, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "emerg: " << e.what() << '\n';
    return emerg::cli::exit_code(e);
  }
  return 0;
}
