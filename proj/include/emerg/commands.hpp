#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "emerg/config.hpp"

// Subcommands of the emerg tool. Each one writes its artifacts under `out`
// (created if missing) and short progress lines to `log`.
namespace emerg::cli {

namespace fs = std::filesystem;

// pretrain + meta_train; checkpoint.txt, train_log.csv, config.resolved.
void cmd_train(const RunConfig& cfg, const fs::path& out, std::ostream& log);

// Cold and warm-up phases over every new item; report.csv and report.json.
// Only the phases listed in cfg.phases are reported.
void cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out, std::ostream& log);

// Sufficient-data sweep; common.csv with one row per stage.
void cmd_common(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out, std::ostream& log);

// graph_<item>_<state>_A<l>.csv for l = 1..N_l. States: cold, plus A/B/C
// when cfg.export_phases is set.
void cmd_export_graph(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out, std::ostream& log);

// Degree tables for both modes and an order-property sweep over random
// patterns. Returns false when the emerg-mode check fails anywhere.
bool cmd_oracle(const RunConfig& cfg, const fs::path& out, std::ostream& log);

// data.csv, schema.txt and pairs.csv from the synthetic generator.
void cmd_synth(const RunConfig& cfg, const fs::path& out, std::ostream& log);

// 1 for configuration and input errors, 2 otherwise.
int exit_code(const std::exception& e);

}  // namespace emerg::cli
