#pragma once

#include "ablab/tensor.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <utility>

namespace ablab::optim {

// One plain SGD update: w - (lr / batch) * grad_sum, where grad_sum is the
// per-sample loss gradient summed over the batch.
Tensor sgd_step(const Tensor &w, const Tensor &grad_sum, double lr, std::size_t batch);
void sgd_step_inplace(Tensor &w, const Tensor &grad_sum, double lr, std::size_t batch);

struct AdamwConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Moment buffers for the AdamW update, keyed by parameter piece. Buffers are
// created lazily at the shape of the first gradient seen for a key; a
// representation change (full-rank <-> factored) must go through
// reset_for_shape_change() so stale shapes never leak across phases.
class AdamwState {
  public:
    explicit AdamwState(AdamwConfig cfg = {}) : cfg_(cfg) {}

    const AdamwConfig &config() const { return cfg_; }
    std::uint64_t step_count() const { return t_; }

    // Applies one AdamW update to w given the mean gradient. All parameter
    // pieces of one optimizer step share the step counter; call
    // begin_step() once per training step before the per-piece updates.
    void begin_step() { ++t_; }
    void update(const std::string &key, Tensor &w, const Tensor &grad_mean, double lr);

    // Drops every moment buffer and restarts the step count. Idempotent.
    void reset_for_shape_change();

    bool has_buffers() const { return !moments_.empty(); }
    std::optional<std::pair<Tensor, Tensor>> buffers(const std::string &key) const;

  private:
    struct Moments {
        Tensor m;
        Tensor v;
    };
    AdamwConfig cfg_;
    std::map<std::string, Moments> moments_;
    std::uint64_t t_ = 0;
};

// Linear warm-up into cosine decay, plus the post-reshape rebound: the rate
// drops to a near-zero floor and ramps linearly back to the base schedule
// over a configured number of steps. A new rebound replaces an active one.
class LrSchedule {
  public:
    LrSchedule(double base_lr, std::size_t warmup_steps, std::size_t total_steps, bool cosine);

    double base(std::size_t step) const;
    double effective(std::size_t step) const;

    void start_rebound(std::size_t current_step, std::size_t rebound_steps);
    bool rebound_active_at(std::size_t step) const;

    double base_lr() const { return base_lr_; }
    static constexpr double kFloorFactor = 1e-8;

  private:
    double base_lr_;
    std::size_t warmup_steps_;
    std::size_t total_steps_;
    bool cosine_;
    struct Rebound {
        std::size_t start;
        std::size_t steps;
    };
    std::optional<Rebound> rebound_;
};

} // namespace ablab::optim
