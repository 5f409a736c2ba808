#pragma once

#include "ablab/tensor.hpp"

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

namespace ablab::data {

struct Dataset {
    Tensor inputs; // (n, features...) sample-major
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
};

struct Batch {
    Tensor inputs;
    std::vector<std::size_t> labels;
};

// Synthetic classification set: standard-normal inputs labeled by the argmax
// readout of a fixed randomly-initialized MLP, then standardized per feature.
// Deterministic per seed.
Dataset make_teacher_student(std::uint64_t seed, std::size_t n_samples, std::size_t in_dim,
                             std::size_t classes);

struct Split {
    Dataset train;
    Dataset test;
};

// Train and test drawn from one stream and labeled by the same teacher; both
// standardized with the training-set statistics.
Split make_teacher_student_split(std::uint64_t seed, std::size_t n_train, std::size_t n_test,
                                 std::size_t in_dim, std::size_t classes);

// Deterministic sample-level sharding: each epoch reshuffles the dataset with
// a seed derived from (seed, epoch); step s takes the s-th contiguous slice of
// globalBatch indices from the current permutation and deals them round-robin
// (position j goes to rank j mod worldSize). The global slice for a step does
// not depend on worldSize, which makes constant-global-batch runs compare
// elementwise across world sizes.
class ShardPlan {
  public:
    ShardPlan(std::uint64_t seed, std::size_t world_size, std::size_t local_batch,
              std::size_t dataset_size);

    std::size_t world_size() const { return world_size_; }
    std::size_t local_batch() const { return local_batch_; }
    std::size_t global_batch() const { return world_size_ * local_batch_; }
    std::size_t steps_per_epoch() const { return steps_per_epoch_; }

    std::vector<std::size_t> global_indices(std::size_t step) const;
    std::vector<std::size_t> local_indices(std::size_t rank, std::size_t step) const;

  private:
    const std::vector<std::size_t> &permutation_for(std::size_t epoch) const;

    std::uint64_t seed_;
    std::size_t world_size_;
    std::size_t local_batch_;
    std::size_t dataset_size_;
    std::size_t steps_per_epoch_;

    mutable std::mutex mu_;
    mutable std::size_t cached_epoch_;
    mutable std::vector<std::size_t> perm_;
};

Batch gather(const Dataset &d, const std::vector<std::size_t> &indices);
Batch next_local_batch(const ShardPlan &plan, const Dataset &d, std::size_t rank,
                       std::size_t step);

// IDX-format readers (big-endian magic 0x00000803 for u8 images, 0x00000801
// for u8 labels). Images come back as (n, 1, rows, cols) scaled to [0, 1].
Tensor load_idx_images(const std::string &path);
std::vector<std::size_t> load_idx_labels(const std::string &path);

// zero mean / unit variance per feature, in place; constant features are left
// centered only
void standardize_features(Tensor &inputs);

// means/stds from one tensor applied to another (train statistics on test)
struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};
FeatureStats feature_stats(const Tensor &inputs);
void apply_standardization(Tensor &inputs, const FeatureStats &stats);

} // namespace ablab::data
