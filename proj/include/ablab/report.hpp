#pragma once

#include "ablab/abtrain.hpp"
#include "ablab/config.hpp"
#include "ablab/metrics.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace ablab::report {

struct RunResult {
    config::RunConfig cfg; // effective (post-scaling) config
    abtrain::RunReport run;
    metrics::MetricsReport met;
};

metrics::MetricsReport compute_metrics(const config::RunConfig &cfg,
                                       const abtrain::RunReport &run, double wall_seconds);

// Loads the dataset, trains, and computes metrics. Deterministic per config
// and seed except for the wall-clock field.
RunResult execute_run(const config::RunConfig &cfg);

std::vector<RunResult> execute_sweep(const config::RunConfig &base,
                                     const std::vector<std::size_t> &node_counts,
                                     config::Scaling scaling);

// Writes run_config.json (the echo argument), metrics.csv, ledger.csv and
// accuracy_curve.csv into dir. Fixed column order, shortest round-trip number
// formatting; reruns of the same seed produce byte-identical files.
void emit_reports(const std::vector<RunResult> &results, const std::string &dir,
                  const nlohmann::json &config_echo);

void print_summary(std::ostream &out, const RunResult &result);

// `report` subcommand: re-reads an output directory and prints metrics.csv
// alongside totals recomputed from ledger.csv.
void summarize_dir(std::ostream &out, const std::string &dir);

} // namespace ablab::report
