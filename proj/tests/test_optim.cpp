#include "doctest.h"

#include "ablab/error.hpp"
#include "ablab/optim.hpp"
#include "ablab/rng.hpp"
#include "ablab/tensor.hpp"

#include <cmath>
#include <vector>

using namespace ablab;

namespace {

// Plain-double replay of the AdamW recurrence, kept deliberately naive.
struct AdamwOracle {
    optim::AdamwConfig cfg;
    std::vector<double> m, v;
    std::uint64_t t = 0;

    void step(std::vector<double> &w, const std::vector<double> &g, double lr) {
        if (m.empty()) {
            m.assign(w.size(), 0.0);
            v.assign(w.size(), 0.0);
        }
        ++t;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w[i]);
        }
    }
};

} // namespace

TEST_CASE("sgd applies lr over batch to summed gradients") {
    Tensor w({3}, {1.0, 2.0, 3.0});
    Tensor g({3}, {4.0, 8.0, 12.0});
    Tensor out = optim::sgd_step(w, g, 0.5, 4);
    CHECK(out[0] == 0.5);
    CHECK(out[1] == 1.0);
    CHECK(out[2] == 1.5);
    CHECK(w[0] == 1.0); // input untouched

    optim::sgd_step_inplace(w, g, 0.5, 4);
    CHECK(w == out);

    CHECK_THROWS_AS(optim::sgd_step(w, g, 0.5, 0), ConfigError);
    CHECK_THROWS_AS(optim::sgd_step(w, Tensor({2}), 0.5, 1), ShapeError);
}

TEST_CASE("adamw matches the scalar recurrence over many steps") {
    optim::AdamwConfig cfg;
    cfg.weight_decay = 0.05;
    optim::AdamwState state(cfg);
    AdamwOracle oracle{cfg, {}, {}, 0};

    Rng rng(42);
    const std::size_t n = 17;
    Tensor w({n});
    rng.fill_normal(w.data(), w.size());
    std::vector<double> w_ref(w.data(), w.data() + n);

    for (int step = 0; step < 25; ++step) {
        Tensor g({n});
        rng.fill_normal(g.data(), g.size());
        std::vector<double> g_ref(g.data(), g.data() + n);
        const double lr = 1e-3 * (1.0 + 0.1 * step);
        state.begin_step();
        state.update("w", w, g, lr);
        oracle.step(w_ref, g_ref, lr);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(std::fabs(w[i] - w_ref[i]) <= 1e-15 * std::max(1.0, std::fabs(w_ref[i])));
    }
    CHECK(state.step_count() == 25);
}

TEST_CASE("adamw first step has the closed form sign(g) plus decay") {
    optim::AdamwConfig cfg;
    cfg.weight_decay = 0.1;
    optim::AdamwState state(cfg);
    Tensor w({2}, {2.0, -3.0});
    Tensor g({2}, {0.5, -0.25});
    const double lr = 0.01;
    state.begin_step();
    state.update("w", w, g, lr);
    for (std::size_t i = 0; i < 2; ++i) {
        const double w0 = i == 0 ? 2.0 : -3.0;
        const double gi = i == 0 ? 0.5 : -0.25;
        const double expect = w0 - lr * (gi / (std::fabs(gi) + cfg.eps) + cfg.weight_decay * w0);
        CHECK(w[i] == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("adamw with zero gradient is pure weight decay") {
    optim::AdamwConfig cfg;
    cfg.weight_decay = 0.2;
    optim::AdamwState state(cfg);
    Tensor w({3}, {1.0, -2.0, 0.5});
    Tensor g = Tensor::zeros({3});
    state.begin_step();
    state.update("w", w, g, 0.1);
    CHECK(w[0] == doctest::Approx(1.0 * (1.0 - 0.1 * 0.2)).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(-2.0 * (1.0 - 0.1 * 0.2)).epsilon(1e-15));
    CHECK(w[2] == doctest::Approx(0.5 * (1.0 - 0.1 * 0.2)).epsilon(1e-15));
}

TEST_CASE("adamw state reset clears buffers and step count") {
    optim::AdamwState state;
    Tensor w({4}, {1.0, 1.0, 1.0, 1.0});
    Tensor g({4}, {0.1, 0.2, 0.3, 0.4});
    state.begin_step();
    state.update("w", w, g, 1e-3);
    CHECK(state.has_buffers());
    CHECK(state.buffers("w").has_value());
    CHECK_FALSE(state.buffers("other").has_value());

    // same key, different shape without reset is a hard error
    Tensor w2({2}, {1.0, 1.0});
    Tensor g2({2}, {0.1, 0.1});
    state.begin_step();
    CHECK_THROWS_AS(state.update("w", w2, g2, 1e-3), ShapeError);

    state.reset_for_shape_change();
    CHECK_FALSE(state.has_buffers());
    CHECK(state.step_count() == 0);
    state.begin_step();
    state.update("w", w2, g2, 1e-3); // fresh buffers at the new shape
    CHECK(state.has_buffers());
}

TEST_CASE("one begin_step covers every parameter piece of the step") {
    optim::AdamwConfig cfg;
    cfg.weight_decay = 0.0;
    optim::AdamwState state(cfg);
    Tensor wa({1}, {1.0});
    Tensor wb({1}, {1.0});
    Tensor g({1}, {0.5});
    state.begin_step();
    state.update("a", wa, g, 0.01);
    state.update("b", wb, g, 0.01);
    // both pieces saw t=1, so both get the identical first-step update
    CHECK(wa[0] == wb[0]);
    CHECK(state.step_count() == 1);
}

TEST_CASE("lr schedule: constant, warmup and cosine shapes") {
    optim::LrSchedule flat(0.1, 0, 100, false);
    CHECK(flat.base(0) == 0.1);
    CHECK(flat.base(99) == 0.1);
    CHECK(flat.effective(50) == 0.1);

    optim::LrSchedule warm(1.0, 10, 100, false);
    CHECK(warm.base(0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(warm.base(4) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(warm.base(9) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(warm.base(10) == 1.0);
    CHECK(warm.base(99) == 1.0);

    optim::LrSchedule cos(2.0, 0, 100, true);
    CHECK(cos.base(0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(cos.base(50) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cos.base(100) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cos.base(25) > cos.base(26));

    optim::LrSchedule both(1.0, 20, 120, true);
    CHECK(both.base(19) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(both.base(70) == doctest::Approx(0.5).epsilon(1e-12)); // cosine midpoint

    CHECK_THROWS_AS(optim::LrSchedule(1.0, 0, 0, false), ConfigError);
}

TEST_CASE("lr rebound ramps from the floor back onto the base schedule") {
    optim::LrSchedule sched(1.0, 0, 1000, false);
    CHECK_FALSE(sched.rebound_active_at(100));
    sched.start_rebound(100, 10);

    CHECK(sched.rebound_active_at(100));
    CHECK(sched.rebound_active_at(109));
    CHECK_FALSE(sched.rebound_active_at(110));
    CHECK_FALSE(sched.rebound_active_at(99));

    const double floor = optim::LrSchedule::kFloorFactor * 1.0;
    CHECK(sched.effective(100) == doctest::Approx(floor).epsilon(1e-12));
    CHECK(sched.effective(105) == doctest::Approx((floor + 1.0) / 2.0).epsilon(1e-12));
    CHECK(sched.effective(110) == 1.0);
    CHECK(sched.effective(99) == 1.0);

    CHECK_THROWS_AS(sched.start_rebound(0, 0), ConfigError);
}

TEST_CASE("a new rebound replaces an active one") {
    optim::LrSchedule sched(1.0, 0, 1000, false);
    sched.start_rebound(200, 10);
    sched.start_rebound(205, 20);
    CHECK_FALSE(sched.rebound_active_at(204)); // old window discarded
    CHECK(sched.effective(204) == 1.0);
    CHECK(sched.effective(205) == doctest::Approx(1e-8).epsilon(1e-12));
    CHECK(sched.rebound_active_at(224));
    CHECK_FALSE(sched.rebound_active_at(225));
}

TEST_CASE("rebound lands exactly on the cosine value at its end") {
    optim::LrSchedule sched(1.0, 0, 200, true);
    sched.start_rebound(40, 8);
    const double target = sched.base(48);
    CHECK(sched.effective(48) == target);
    // one step before the end the ramp is just below the target
    CHECK(sched.effective(47) < target);
    CHECK(sched.effective(47) > optim::LrSchedule::kFloorFactor);
}
