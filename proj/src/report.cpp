#include "ablab/report.hpp"

#include "ablab/dist.hpp"
#include "ablab/error.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ablab::report {

namespace {

std::string format_double(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9.007199254740992e15)
        return std::to_string(static_cast<long long>(v));
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::ofstream open_out(const std::filesystem::path &p) {
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + p.string());
    return out;
}

} // namespace

metrics::MetricsReport compute_metrics(const config::RunConfig &cfg,
                                       const abtrain::RunReport &run, double wall_seconds) {
    metrics::MetricsReport m;
    m.final_top1 = run.final_accuracy;
    m.best_top1 = run.best_accuracy;
    m.compression_ratio = run.final_compression;
    dist::LedgerTotals totals = dist::ledger_totals(run.ledger);
    m.total_bytes = totals.total_bytes;
    m.per_phase_bytes = totals.per_phase;
    m.scaled_traffic = dist::scaled_traffic(totals.total_bytes, cfg.backward_fraction);
    const bool is_ab = cfg.mode != abtrain::RunMode::TradDDP;
    // a factored form larger than the full one means no compression at all
    double retained_percent = 100.0 / m.compression_ratio;
    if (retained_percent > 100.0)
        retained_percent = 100.0;
    double group_frac = 0.0;
    if (cfg.mode == abtrain::RunMode::AbGroups && run.total_steps > 0)
        group_frac = 100.0 * static_cast<double>(run.group_train_steps) /
                     static_cast<double>(run.total_steps);
    m.ecr = metrics::ecr(cfg.ecr_full_rank_frac, cfg.ecr_final_state_frac, retained_percent,
                         group_frac, is_ab);
    m.wall_seconds = wall_seconds;
    return m;
}

RunResult execute_run(const config::RunConfig &cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    data::Split split = cfg.dataset.load(cfg.seed);
    abtrain::TrainSetup setup;
    setup.mode = cfg.mode;
    setup.seed = cfg.seed;
    setup.topology = dist::make_topology(
        cfg.world_size, cfg.mode == abtrain::RunMode::AbGroups ? cfg.num_groups : 1);
    setup.model_layers = cfg.model.layers();
    setup.train = &split.train;
    setup.test = split.test.size() > 0 ? &split.test : nullptr;
    setup.local_batch = cfg.resolved_local_batch();
    setup.optimizer = cfg.optimizer;
    setup.hp = cfg.ab;
    setup.bytes_per_element = cfg.precision;
    setup.eval_interval = cfg.eval_interval;
    RunResult result;
    result.cfg = cfg;
    result.run = abtrain::run_training(setup);
    const auto t1 = std::chrono::steady_clock::now();
    const double wall = std::chrono::duration<double>(t1 - t0).count();
    result.met = compute_metrics(cfg, result.run, wall);
    return result;
}

std::vector<RunResult> execute_sweep(const config::RunConfig &base,
                                     const std::vector<std::size_t> &node_counts,
                                     config::Scaling scaling) {
    if (node_counts.empty())
        throw ConfigError("sweep needs at least one node count");
    std::vector<RunResult> results;
    results.reserve(node_counts.size());
    for (std::size_t nodes : node_counts)
        results.push_back(execute_run(config::apply_scaling(base, nodes, scaling)));
    return results;
}

void emit_reports(const std::vector<RunResult> &results, const std::string &dir,
                  const nlohmann::json &config_echo) {
    std::filesystem::path root(dir);
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec)
        throw IoError("cannot create " + root.string() + ": " + ec.message());

    {
        std::ofstream out = open_out(root / "run_config.json");
        out << config_echo.dump(2) << '\n';
    }
    {
        std::ofstream out = open_out(root / "metrics.csv");
        out << "run,mode,worldSize,numGroups,seed,localBatch,globalBatch,totalSteps,"
               "finalTop1,bestTop1,compressionRatio,totalBytes,scaledTraffic,ecr\n";
        for (std::size_t i = 0; i < results.size(); ++i) {
            const RunResult &r = results[i];
            const std::size_t local = r.cfg.resolved_local_batch();
            out << i << ',' << abtrain::run_mode_name(r.cfg.mode) << ',' << r.cfg.world_size
                << ',' << r.cfg.num_groups << ',' << r.cfg.seed << ',' << local << ','
                << local * r.cfg.world_size << ',' << r.run.total_steps << ','
                << format_double(r.met.final_top1) << ',' << format_double(r.met.best_top1)
                << ',' << format_double(r.met.compression_ratio) << ','
                << format_double(r.met.total_bytes) << ','
                << format_double(r.met.scaled_traffic) << ',' << format_double(r.met.ecr)
                << '\n';
        }
    }
    {
        std::ofstream out = open_out(root / "ledger.csv");
        out << "step,phase,scope,elements,bytes\n";
        for (const RunResult &r : results)
            for (const dist::LedgerEntry &e : r.run.ledger.entries())
                out << e.step << ',' << e.phase << ',' << e.scope << ',' << e.elements << ','
                    << format_double(e.bytes) << '\n';
    }
    {
        std::ofstream out = open_out(root / "accuracy_curve.csv");
        out << "run,step,accuracy\n";
        for (std::size_t i = 0; i < results.size(); ++i)
            for (const auto &[step, acc] : results[i].run.accuracy_curve)
                out << i << ',' << step << ',' << format_double(acc) << '\n';
    }
}

void print_summary(std::ostream &out, const RunResult &r) {
    out << "mode " << abtrain::run_mode_name(r.cfg.mode) << "  world " << r.cfg.world_size
        << "  groups " << r.cfg.num_groups << "  seed " << r.cfg.seed << '\n';
    out << "  final top-1   " << format_double(r.met.final_top1) << '\n';
    out << "  best top-1    " << format_double(r.met.best_top1) << '\n';
    out << "  compression   " << format_double(r.met.compression_ratio) << ":1\n";
    out << "  total bytes   " << format_double(r.met.total_bytes) << '\n';
    out << "  scaled bytes  " << format_double(r.met.scaled_traffic) << '\n';
    out << "  ecr           " << format_double(r.met.ecr) << "%\n";
    out << "  wall seconds  " << format_double(r.met.wall_seconds) << '\n';
    for (const auto &[phase, bytes] : r.met.per_phase_bytes)
        out << "  bytes[" << phase << "] " << format_double(bytes) << '\n';
}

void summarize_dir(std::ostream &out, const std::string &dir) {
    std::filesystem::path root(dir);
    std::ifstream metrics(root / "metrics.csv");
    if (!metrics)
        throw IoError("cannot open " + (root / "metrics.csv").string());
    std::string line;
    while (std::getline(metrics, line))
        out << line << '\n';

    std::ifstream ledger(root / "ledger.csv");
    if (!ledger)
        throw IoError("cannot open " + (root / "ledger.csv").string());
    double total = 0.0;
    std::map<std::string, double> per_phase;
    std::getline(ledger, line); // header
    while (std::getline(ledger, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string step, phase, scope, elements, bytes;
        if (!std::getline(ss, step, ',') || !std::getline(ss, phase, ',') ||
            !std::getline(ss, scope, ',') || !std::getline(ss, elements, ',') ||
            !std::getline(ss, bytes, ','))
            throw IoError(dir + "/ledger.csv: malformed row '" + line + "'");
        double v = 0.0;
        auto res = std::from_chars(bytes.data(), bytes.data() + bytes.size(), v);
        if (res.ec != std::errc())
            throw IoError(dir + "/ledger.csv: bad byte count '" + bytes + "'");
        total += v;
        per_phase[phase] += v;
    }
    out << "ledger total bytes " << format_double(total) << '\n';
    for (const auto &[phase, bytes] : per_phase)
        out << "ledger bytes[" << phase << "] " << format_double(bytes) << '\n';
}

} // namespace ablab::report
