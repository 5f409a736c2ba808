#include "ablab/abtrain.hpp"

#include "ablab/error.hpp"
#include "ablab/kernels.hpp"
#include "ablab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

namespace ablab::abtrain {

std::string run_mode_name(RunMode mode) {
    switch (mode) {
    case RunMode::TradDDP:
        return "traddp";
    case RunMode::AbGroups:
        return "ab_groups";
    case RunMode::AbNoGroups:
        return "ab_no_groups";
    }
    throw ConfigError("unknown run mode");
}

RunMode parse_run_mode(const std::string &name) {
    if (name == "traddp")
        return RunMode::TradDDP;
    if (name == "ab_groups")
        return RunMode::AbGroups;
    if (name == "ab_no_groups")
        return RunMode::AbNoGroups;
    throw ConfigError("unknown run mode '" + name +
                      "' (expected traddp | ab_groups | ab_no_groups)");
}

namespace {

std::size_t round_half_up(double v) {
    return static_cast<std::size_t>(std::floor(v + 0.5));
}

std::size_t at_least_one(std::size_t v) {
    return v == 0 ? 1 : v;
}

} // namespace

ResolvedCounts resolve_counts(const AbHyperparams &hp) {
    if (hp.total_steps == 0)
        throw ConfigError("schedule needs a positive total step count");
    if (hp.warmup_frac < 0.0 || hp.warmup_frac >= 1.0 || hp.num_ab_frac <= 0.0 ||
        hp.num_ab_frac >= 1.0 || hp.full_rank_rebound_factor < 0.0 || hp.lr_rebound_factor < 0.0)
        throw ConfigError("schedule fractions out of range");
    ResolvedCounts c;
    c.warmup = round_half_up(hp.warmup_frac * static_cast<double>(hp.total_steps));
    c.num_ab = at_least_one(round_half_up(hp.num_ab_frac * static_cast<double>(hp.total_steps)));
    c.full_rank_rebound =
        at_least_one(round_half_up(hp.full_rank_rebound_factor * static_cast<double>(c.num_ab)));
    c.lr_rebound =
        at_least_one(round_half_up(hp.lr_rebound_factor * static_cast<double>(c.num_ab)));
    if (c.warmup + c.num_ab + c.full_rank_rebound > hp.total_steps)
        throw ConfigError("schedule infeasible: warmup " + std::to_string(c.warmup) +
                          " + one cycle of " + std::to_string(c.num_ab + c.full_rank_rebound) +
                          " exceeds " + std::to_string(hp.total_steps) + " steps");
    return c;
}

PhaseSchedule resolve_schedule(const AbHyperparams &hp) {
    PhaseSchedule sched;
    sched.counts = resolve_counts(hp);
    sched.total_steps = hp.total_steps;
    std::size_t remaining = hp.total_steps;
    if (sched.counts.warmup > 0) {
        sched.phases.push_back({PhaseKind::Warmup, sched.counts.warmup});
        remaining -= sched.counts.warmup;
    }
    while (remaining > 0) {
        const std::size_t gt = std::min(sched.counts.num_ab, remaining);
        remaining -= gt;
        const std::size_t fr = std::min(sched.counts.full_rank_rebound, remaining);
        remaining -= fr;
        sched.phases.push_back({PhaseKind::Decompose, 0});
        sched.phases.push_back({PhaseKind::GroupTrain, gt});
        sched.phases.push_back({PhaseKind::Sync, 0});
        if (fr > 0)
            sched.phases.push_back({PhaseKind::FullRankRebound, fr});
    }
    return sched;
}

namespace {

struct Segment {
    std::size_t param;
    int piece; // 0 = full-rank tensor, 1 = factor a, 2 = factor b
    std::size_t offset;
    std::size_t n;
    std::string key;
};

const Tensor &param_piece(const nn::Parameter &p, int piece) {
    if (piece == 0)
        return p.full();
    return piece == 1 ? p.factored().a : p.factored().b;
}

Tensor &param_piece(nn::Parameter &p, int piece) {
    if (piece == 0)
        return p.full();
    return piece == 1 ? p.factored().a : p.factored().b;
}

const Tensor &grad_piece(const nn::ParamGrad &g, int piece) {
    if (piece == 0)
        return std::get<Tensor>(g);
    const nn::FactoredGrad &fg = std::get<nn::FactoredGrad>(g);
    return piece == 1 ? fg.a : fg.b;
}

// Payload layout for gradient collectives: the trained factor of each
// factored parameter (the frozen one is provably zero and never travels),
// full tensors for everything else. During full-rank phases no parameter is
// factored, so this is the whole model.
std::vector<Segment> grad_segments(const nn::Model &m) {
    std::vector<Segment> segs;
    std::size_t off = 0;
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        const nn::Parameter &p = m.params()[i];
        if (p.is_factored()) {
            const bool train_a = p.factored().train_target == nn::TrainTarget::A;
            const int piece = train_a ? 1 : 2;
            const Tensor &t = param_piece(p, piece);
            segs.push_back({i, piece, off, t.size(), p.name + (train_a ? ":a" : ":b")});
            off += t.size();
        } else {
            segs.push_back({i, 0, off, p.full().size(), p.name + ":full"});
            off += p.full().size();
        }
    }
    return segs;
}

// Payload layout for the post-group sync: both factors of every factored
// parameter plus all non-decomposed tensors, as values.
std::vector<Segment> value_segments(const nn::Model &m) {
    std::vector<Segment> segs;
    std::size_t off = 0;
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        const nn::Parameter &p = m.params()[i];
        if (p.is_factored()) {
            segs.push_back({i, 1, off, p.factored().a.size(), p.name + ":a"});
            off += p.factored().a.size();
            segs.push_back({i, 2, off, p.factored().b.size(), p.name + ":b"});
            off += p.factored().b.size();
        } else {
            segs.push_back({i, 0, off, p.full().size(), p.name + ":full"});
            off += p.full().size();
        }
    }
    return segs;
}

std::size_t payload_size(const std::vector<Segment> &segs) {
    return segs.empty() ? 0 : segs.back().offset + segs.back().n;
}

Tensor pack_grads(const nn::Gradients &grads, const std::vector<Segment> &segs) {
    Tensor flat({payload_size(segs)});
    for (const Segment &s : segs) {
        const Tensor &g = grad_piece(grads[s.param], s.piece);
        std::copy(g.data(), g.data() + s.n, flat.data() + s.offset);
    }
    return flat;
}

Tensor pack_values(const nn::Model &m, const std::vector<Segment> &segs) {
    Tensor flat({payload_size(segs)});
    for (const Segment &s : segs) {
        const Tensor &t = param_piece(m.params()[s.param], s.piece);
        std::copy(t.data(), t.data() + s.n, flat.data() + s.offset);
    }
    return flat;
}

void unpack_values(const Tensor &flat, const std::vector<Segment> &segs, nn::Model &m) {
    for (const Segment &s : segs) {
        Tensor &t = param_piece(m.params()[s.param], s.piece);
        std::copy(flat.data() + s.offset, flat.data() + s.offset + s.n, t.data());
    }
}

struct Worker {
    nn::Model model;
    optim::AdamwState adamw;
};

class Orchestrator {
  public:
    explicit Orchestrator(const TrainSetup &setup)
        : setup_(setup), topo_(setup.topology),
          plan_(mix_seed(setup.seed, 2), topo_.world_size, setup.local_batch,
                setup.train ? setup.train->size() : 0),
          lr_(setup.optimizer.lr, setup.optimizer.lr_warmup_steps, setup.hp.total_steps,
              setup.optimizer.cosine) {
        report_.ledger = dist::TrafficLedger(setup.bytes_per_element);
        report_.total_steps = setup.hp.total_steps;
        nn::Model proto = setup.initial_model
                              ? *setup.initial_model
                              : nn::Model::build(setup.model_layers, mix_seed(setup.seed, 1));
        workers_.resize(topo_.world_size);
        for (Worker &w : workers_) {
            w.model = proto;
            w.adamw = optim::AdamwState(setup.optimizer.adamw);
        }
    }

    RunReport run(const PhaseSchedule &sched) {
        report_.counts = sched.counts;
        for (std::size_t pi = 0; pi < sched.phases.size(); ++pi) {
            const Phase &ph = sched.phases[pi];
            switch (ph.kind) {
            case PhaseKind::Warmup:
                full_rank_steps("warmup", ph.steps);
                break;
            case PhaseKind::FullRankRebound:
                full_rank_steps("full_rank_rebound", ph.steps);
                break;
            case PhaseKind::Decompose:
                decompose(next_steps(sched, pi));
                break;
            case PhaseKind::GroupTrain:
                group_train_steps(ph.steps);
                break;
            case PhaseKind::Sync:
                sync(next_steps(sched, pi));
                break;
            }
        }
        check_identical("end of run");
        report_.final_model = workers_[0].model;
        if (!report_.compression_series.empty())
            report_.final_compression = report_.compression_series.back().second;
        for (const auto &[s, acc] : report_.accuracy_curve) {
            (void)s;
            report_.best_accuracy = std::max(report_.best_accuracy, acc);
        }
        if (!report_.accuracy_curve.empty())
            report_.final_accuracy = report_.accuracy_curve.back().second;
        return std::move(report_);
    }

  private:
    static std::size_t next_steps(const PhaseSchedule &sched, std::size_t pi) {
        return pi + 1 < sched.phases.size() ? sched.phases[pi + 1].steps : 0;
    }

    void full_rank_steps(const std::string &tag, std::size_t steps) {
        if (steps == 0)
            return;
        const std::vector<Segment> segs = grad_segments(workers_[0].model);
        for (std::size_t i = 0; i < steps; ++i) {
            const double lr_now = lr_.effective(step_);
            std::vector<Tensor> flats(workers_.size());
            std::vector<Tensor *> ptrs(workers_.size());
            for (std::size_t r = 0; r < workers_.size(); ++r) {
                flats[r] = local_grad_payload(r, segs);
                ptrs[r] = &flats[r];
            }
            dist::all_reduce_average(ptrs, &report_.ledger, step_, tag, "global");
            if (setup_.observer && setup_.observer->on_full_rank_step)
                setup_.observer->on_full_rank_step(step_, flats[0].vec(), lr_now,
                                                   setup_.local_batch);
            for (std::size_t r = 0; r < workers_.size(); ++r)
                apply_update(workers_[r], segs, flats[r], lr_now);
            finish_step();
        }
        check_identical(tag);
    }

    void group_train_steps(std::size_t steps) {
        report_.group_train_steps += steps;
        std::vector<std::vector<Segment>> segs(workers_.size());
        for (std::size_t r = 0; r < workers_.size(); ++r)
            segs[r] = grad_segments(workers_[r].model);
        for (std::size_t i = 0; i < steps; ++i) {
            const double lr_now = lr_.effective(step_);
            std::vector<Tensor> flats(workers_.size());
            for (std::size_t r = 0; r < workers_.size(); ++r)
                flats[r] = local_grad_payload(r, segs[r]);
            if (setup_.mode == RunMode::AbNoGroups) {
                std::vector<Tensor *> ptrs(workers_.size());
                for (std::size_t r = 0; r < workers_.size(); ++r)
                    ptrs[r] = &flats[r];
                dist::all_reduce_average(ptrs, &report_.ledger, step_, "group_train", "global");
            } else {
                for (std::size_t g = 0; g < topo_.num_groups; ++g) {
                    std::vector<Tensor *> ptrs;
                    for (std::size_t rank : topo_.ranks_in_group(g))
                        ptrs.push_back(&flats[rank]);
                    dist::all_reduce_average(ptrs, &report_.ledger, step_, "group_train",
                                             "group" + std::to_string(g));
                }
            }
            for (std::size_t r = 0; r < workers_.size(); ++r)
                apply_update(workers_[r], segs[r], flats[r], lr_now);
            finish_step();
        }
    }

    // Decomposition inputs are bit-identical on every rank and the svd is
    // deterministic, so one computation stands in for the per-rank redundant
    // ones; only the train target differs by role.
    void decompose(std::size_t group_steps) {
        workers_[0].model.decompose_all(setup_.hp.sigma_cutoff, target_for(0));
        for (std::size_t r = 1; r < workers_.size(); ++r) {
            workers_[r].model.params() = workers_[0].model.params();
            retarget(workers_[r].model, target_for(r));
        }
        for (Worker &w : workers_)
            w.adamw.reset_for_shape_change();
        const double ratio = static_cast<double>(workers_[0].model.full_element_count()) /
                             static_cast<double>(workers_[0].model.element_count());
        report_.compression_series.push_back({step_, ratio});
        if (group_steps > 0)
            lr_.start_rebound(step_, report_.counts.lr_rebound);
    }

    void sync(std::size_t rebound_steps) {
        if (setup_.mode != RunMode::AbNoGroups) {
            const std::vector<Segment> segs = value_segments(workers_[0].model);
            std::vector<Tensor> flats(workers_.size());
            std::vector<Tensor *> ptrs(workers_.size());
            for (std::size_t r = 0; r < workers_.size(); ++r) {
                flats[r] = pack_values(workers_[r].model, segs);
                ptrs[r] = &flats[r];
            }
            dist::all_reduce_average(ptrs, &report_.ledger, step_, "sync", "global");
            for (std::size_t r = 0; r < workers_.size(); ++r)
                unpack_values(flats[r], segs, workers_[r].model);
        }
        for (Worker &w : workers_) {
            w.model.reconstruct_all();
            w.adamw.reset_for_shape_change();
        }
        check_identical("sync");
        if (setup_.observer && setup_.observer->on_sync)
            setup_.observer->on_sync(step_);
        if (rebound_steps > 0)
            lr_.start_rebound(step_, report_.counts.lr_rebound);
    }

    Tensor local_grad_payload(std::size_t rank, const std::vector<Segment> &segs) {
        Worker &w = workers_[rank];
        data::Batch batch = data::next_local_batch(plan_, *setup_.train, rank, step_);
        nn::ForwardCache cache;
        w.model.forward(batch.inputs, batch.labels, cache);
        nn::Gradients grads = w.model.backward(cache);
        return pack_grads(grads, segs);
    }

    void apply_update(Worker &w, const std::vector<Segment> &segs, const Tensor &reduced,
                      double lr_now) {
        const double b = static_cast<double>(setup_.local_batch);
        if (setup_.optimizer.kind == OptimizerConfig::Kind::Sgd) {
            for (const Segment &s : segs) {
                Tensor &t = param_piece(w.model.params()[s.param], s.piece);
                kernels::axpy(-(lr_now / b), reduced.data() + s.offset, t.data(), s.n);
            }
            return;
        }
        w.adamw.begin_step();
        for (const Segment &s : segs) {
            Tensor &t = param_piece(w.model.params()[s.param], s.piece);
            Tensor gmean(t.shape());
            std::copy(reduced.data() + s.offset, reduced.data() + s.offset + s.n, gmean.data());
            kernels::scale(gmean.data(), 1.0 / b, s.n);
            w.adamw.update(s.key, t, gmean, lr_now);
        }
    }

    nn::TrainTarget target_for(std::size_t rank) const {
        if (setup_.mode == RunMode::AbNoGroups)
            return nn::TrainTarget::B;
        return topo_.role_of_group(topo_.group_of(rank)) == dist::WorldTopology::Role::A
                   ? nn::TrainTarget::A
                   : nn::TrainTarget::B;
    }

    static void retarget(nn::Model &m, nn::TrainTarget target) {
        for (nn::Parameter &p : m.params())
            if (p.is_factored())
                p.factored().train_target = target;
    }

    void finish_step() {
        ++step_;
        if (setup_.test &&
            (step_ % setup_.eval_interval == 0 || step_ == setup_.hp.total_steps)) {
            if (report_.accuracy_curve.empty() || report_.accuracy_curve.back().first != step_)
                report_.accuracy_curve.push_back(
                    {step_, workers_[0].model.accuracy(setup_.test->inputs, setup_.test->labels)});
        }
    }

    void check_identical(const std::string &where) const {
        for (std::size_t r = 1; r < workers_.size(); ++r) {
            const auto &a = workers_[0].model.params();
            const auto &b = workers_[r].model.params();
            for (std::size_t i = 0; i < a.size(); ++i) {
                const bool same =
                    a[i].is_factored() == b[i].is_factored() &&
                    (a[i].is_factored()
                         ? a[i].factored().a == b[i].factored().a &&
                               a[i].factored().b == b[i].factored().b
                         : a[i].full() == b[i].full());
                if (!same)
                    throw ProtocolError("rank " + std::to_string(r) + " diverged from rank 0 at " +
                                        where + " (" + a[i].name + ")");
            }
        }
    }

    const TrainSetup &setup_;
    dist::WorldTopology topo_;
    data::ShardPlan plan_;
    optim::LrSchedule lr_;
    std::vector<Worker> workers_;
    RunReport report_;
    std::size_t step_ = 0;
};

void validate_setup(const TrainSetup &setup) {
    if (!setup.train)
        throw ConfigError("training needs a dataset");
    if (setup.local_batch == 0)
        throw ConfigError("local batch must be positive");
    if (setup.hp.total_steps == 0)
        throw ConfigError("total step count must be positive");
    if (setup.eval_interval == 0)
        throw ConfigError("eval interval must be positive");
    if (setup.mode == RunMode::AbGroups && setup.topology.num_groups < 2)
        throw ConfigError("grouped mode needs at least two groups");
    if (!setup.initial_model && setup.model_layers.empty())
        throw ConfigError("training needs a model");
}

} // namespace

RunReport run_training(const TrainSetup &setup) {
    validate_setup(setup);
    PhaseSchedule sched;
    if (setup.mode == RunMode::TradDDP) {
        sched.total_steps = setup.hp.total_steps;
        sched.counts.warmup = setup.hp.total_steps;
        sched.phases.push_back({PhaseKind::Warmup, setup.hp.total_steps});
    } else {
        sched = resolve_schedule(setup.hp);
    }
    Orchestrator orch(setup);
    return orch.run(sched);
}

} // namespace ablab::abtrain
