#pragma once

#include "ablab/abtrain.hpp"
#include "ablab/data.hpp"
#include "ablab/nn.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace ablab::config {

struct ModelSpec {
    enum class Kind { Mlp, Conv };
    Kind kind = Kind::Mlp;
    // mlp
    std::size_t in_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t classes = 0;
    // conv: one stride-1 same-padded conv block, then a linear head
    std::size_t in_channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t conv_channels = 8;
    std::size_t kernel = 3;

    std::vector<nn::LayerSpec> layers() const;
};

struct DatasetSpec {
    enum class Kind { TeacherStudent, Idx };
    Kind kind = Kind::TeacherStudent;
    // teacher-student
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
    std::size_t in_dim = 0;
    std::size_t classes = 0;
    std::optional<std::uint64_t> seed; // defaults to a stream of the run seed
    // idx paths; test paths may be empty (no evaluation)
    std::string train_images, train_labels, test_images, test_labels;

    data::Split load(std::uint64_t run_seed) const;
};

struct RunConfig {
    abtrain::RunMode mode = abtrain::RunMode::TradDDP;
    std::uint64_t seed = 1;
    std::size_t world_size = 1;
    std::size_t num_groups = 1;
    std::optional<std::size_t> local_batch;  // exactly one of these two
    std::optional<std::size_t> global_batch;
    ModelSpec model;
    DatasetSpec dataset;
    abtrain::OptimizerConfig optimizer;
    abtrain::AbHyperparams ab;
    std::size_t precision = 4; // wire bytes per element
    std::size_t eval_interval = 100;
    std::string out_dir = "out";
    double backward_fraction = 0.5384;
    double ecr_full_rank_frac = 25.0;
    double ecr_final_state_frac = 75.0;

    // local batch for this world size; divides global_batch when that is the
    // one given (config error if indivisible)
    std::size_t resolved_local_batch() const;
};

RunConfig config_from_json(const nlohmann::json &j);
nlohmann::json config_to_json(const RunConfig &cfg);
RunConfig load_config_file(const std::string &path);

enum class Scaling { ConstantLocal, ConstantGlobal };
Scaling parse_scaling(const std::string &name);
std::string scaling_name(Scaling s);

// Batch arithmetic of the two sweep protocols. constantLocal keeps the
// configured local batch and grows the global batch with the world size;
// constantGlobal fixes the global batch (from the config's globalBatchSize,
// else localBatchSize * worldSize) and divides it across ranks.
RunConfig apply_scaling(const RunConfig &base, std::size_t nodes, Scaling scaling);

} // namespace ablab::config
