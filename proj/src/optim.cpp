#include "ablab/optim.hpp"

#include "ablab/kernels.hpp"

#include <cmath>
#include <numbers>

namespace ablab::optim {

Tensor sgd_step(const Tensor &w, const Tensor &grad_sum, double lr, std::size_t batch) {
    Tensor out = w;
    sgd_step_inplace(out, grad_sum, lr, batch);
    return out;
}

void sgd_step_inplace(Tensor &w, const Tensor &grad_sum, double lr, std::size_t batch) {
    check_same_shape(w, grad_sum, "sgd_step");
    if (batch == 0) {
        throw ConfigError("sgd_step: batch size must be >= 1");
    }
    kernels::axpy(-(lr / static_cast<double>(batch)), grad_sum.data(), w.data(), w.size());
}

void AdamwState::update(const std::string &key, Tensor &w, const Tensor &grad_mean, double lr) {
    check_same_shape(w, grad_mean, "adamw gradient");
    auto it = moments_.find(key);
    if (it == moments_.end()) {
        it = moments_.emplace(key, Moments{Tensor::zeros(w.shape()), Tensor::zeros(w.shape())}).first;
    }
    Moments &mom = it->second;
    if (!mom.m.same_shape(w)) {
        // buffer shape stale: a representation change was not followed by a
        // state reset, which is a program bug rather than user input
        throw ShapeError("adamw state for '" + key + "' has shape " +
                         shape_to_string(mom.m.shape()) + " but parameter is " +
                         shape_to_string(w.shape()) + " (missing state reset?)");
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    kernels::adamw_update(w.data(), mom.m.data(), mom.v.data(), grad_mean.data(), w.size(), lr,
                          cfg_.beta1, cfg_.beta2, cfg_.eps, cfg_.weight_decay, bc1, bc2);
}

void AdamwState::reset_for_shape_change() {
    moments_.clear();
    t_ = 0;
}

std::optional<std::pair<Tensor, Tensor>> AdamwState::buffers(const std::string &key) const {
    auto it = moments_.find(key);
    if (it == moments_.end()) {
        return std::nullopt;
    }
    return std::make_pair(it->second.m, it->second.v);
}

LrSchedule::LrSchedule(double base_lr, std::size_t warmup_steps, std::size_t total_steps, bool cosine)
    : base_lr_(base_lr), warmup_steps_(warmup_steps), total_steps_(total_steps), cosine_(cosine) {
    if (total_steps == 0) {
        throw ConfigError("lr schedule needs total_steps >= 1");
    }
}

double LrSchedule::base(std::size_t step) const {
    if (step < warmup_steps_) {
        return base_lr_ * static_cast<double>(step + 1) / static_cast<double>(warmup_steps_);
    }
    if (!cosine_) {
        return base_lr_;
    }
    const std::size_t horizon = total_steps_ > warmup_steps_ ? total_steps_ - warmup_steps_ : 1;
    const double progress =
        std::min(1.0, static_cast<double>(step - warmup_steps_) / static_cast<double>(horizon));
    return base_lr_ * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double LrSchedule::effective(std::size_t step) const {
    if (rebound_active_at(step)) {
        const double floor = kFloorFactor * base_lr_;
        const double target = base(rebound_->start + rebound_->steps);
        const double frac = static_cast<double>(step - rebound_->start) /
                            static_cast<double>(rebound_->steps);
        return floor + (target - floor) * frac;
    }
    return base(step);
}

void LrSchedule::start_rebound(std::size_t current_step, std::size_t rebound_steps) {
    if (rebound_steps == 0) {
        throw ConfigError("lr rebound needs rebound_steps >= 1");
    }
    rebound_ = Rebound{current_step, rebound_steps};
}

bool LrSchedule::rebound_active_at(std::size_t step) const {
    return rebound_ && step >= rebound_->start && step < rebound_->start + rebound_->steps;
}

} // namespace ablab::optim
