#pragma once

#include "ablab/data.hpp"
#include "ablab/dist.hpp"
#include "ablab/nn.hpp"
#include "ablab/optim.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ablab::abtrain {

enum class RunMode { TradDDP, AbGroups, AbNoGroups };

std::string run_mode_name(RunMode mode);
RunMode parse_run_mode(const std::string &name);

struct AbHyperparams {
    double warmup_frac = 0.20;
    double num_ab_frac = 0.0333;
    double full_rank_rebound_factor = 0.25; // times numAbSteps
    double lr_rebound_factor = 0.5;         // times numAbSteps
    double sigma_cutoff = 0.0;
    std::size_t total_steps = 0;
};

struct ResolvedCounts {
    std::size_t warmup = 0;
    std::size_t num_ab = 0;
    std::size_t full_rank_rebound = 0;
    std::size_t lr_rebound = 0;
};

enum class PhaseKind { Warmup, Decompose, GroupTrain, Sync, FullRankRebound };

struct Phase {
    PhaseKind kind;
    std::size_t steps; // zero for Decompose and Sync
};

struct PhaseSchedule {
    std::vector<Phase> phases;
    ResolvedCounts counts;
    std::size_t total_steps = 0;
};

// Fractions resolve by round-half-up, clamped to at least one step; the
// rebound counts scale from the resolved numAbSteps. Cycles of
// [Decompose, GroupTrain, Sync, FullRankRebound] repeat after the warmup
// until the budget is consumed; the last cycle truncates, and a truncated
// cycle still ends with Sync so the final model is full-rank.
ResolvedCounts resolve_counts(const AbHyperparams &hp);
PhaseSchedule resolve_schedule(const AbHyperparams &hp);

struct OptimizerConfig {
    enum class Kind { Sgd, Adamw };
    Kind kind = Kind::Adamw;
    double lr = 1e-3;
    optim::AdamwConfig adamw;
    bool cosine = true;
    std::size_t lr_warmup_steps = 0;
};

// Debug taps; every callback fires after the collective of the step it names.
struct StepObserver {
    std::function<void(std::size_t step, const std::vector<double> &reduced_payload, double lr,
                       std::size_t local_batch)>
        on_full_rank_step;
    std::function<void(std::size_t step)> on_sync;
};

struct TrainSetup {
    RunMode mode = RunMode::TradDDP;
    std::uint64_t seed = 1;
    dist::WorldTopology topology;
    std::vector<nn::LayerSpec> model_layers;
    const nn::Model *initial_model = nullptr; // overrides seeded build when set
    const data::Dataset *train = nullptr;
    const data::Dataset *test = nullptr; // optional; skips evaluation when absent
    std::size_t local_batch = 1;
    OptimizerConfig optimizer;
    AbHyperparams hp;
    std::size_t bytes_per_element = 4;
    std::size_t eval_interval = 100;
    const StepObserver *observer = nullptr;
};

struct RunReport {
    nn::Model final_model; // rank 0 (all ranks identical at the end)
    std::vector<std::pair<std::size_t, double>> accuracy_curve; // (steps done, test top-1)
    std::vector<std::pair<std::size_t, double>> compression_series; // (step, ratio)
    dist::TrafficLedger ledger{4};
    ResolvedCounts counts;
    std::size_t total_steps = 0;
    std::size_t group_train_steps = 0;
    double final_accuracy = 0.0;
    double best_accuracy = 0.0;
    double final_compression = 1.0; // last completed decomposition state
};

// Runs the configured mode end to end. All ranks live in this process and
// execute serially in rank order between collectives, which by construction
// equals any interleaving that respects the collective barriers.
RunReport run_training(const TrainSetup &setup);

} // namespace ablab::abtrain
