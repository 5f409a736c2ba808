#include "ablab/config.hpp"

#include "ablab/error.hpp"
#include "ablab/rng.hpp"

#include <fstream>
#include <set>

namespace ablab::config {

namespace {

using nlohmann::json;

void expect_keys(const json &j, const std::string &where,
                 const std::set<std::string> &allowed) {
    if (!j.is_object())
        throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (allowed.count(it.key()) == 0)
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
T get_or(const json &j, const std::string &key, T fallback) {
    if (!j.contains(key))
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &e) {
        throw ConfigError("bad value for '" + key + "': " + e.what());
    }
}

template <typename T>
T get_req(const json &j, const std::string &where, const std::string &key) {
    if (!j.contains(key))
        throw ConfigError(where + " is missing required key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &e) {
        throw ConfigError("bad value for '" + key + "': " + e.what());
    }
}

ModelSpec model_from_json(const json &j) {
    ModelSpec m;
    const std::string kind = get_req<std::string>(j, "model", "kind");
    if (kind == "mlp") {
        expect_keys(j, "model", {"kind", "inDim", "hidden", "classes"});
        m.kind = ModelSpec::Kind::Mlp;
        m.in_dim = get_req<std::size_t>(j, "model", "inDim");
        m.hidden = get_or<std::vector<std::size_t>>(j, "hidden", {});
        m.classes = get_req<std::size_t>(j, "model", "classes");
    } else if (kind == "conv") {
        expect_keys(j, "model",
                    {"kind", "inChannels", "height", "width", "convChannels", "kernel",
                     "classes"});
        m.kind = ModelSpec::Kind::Conv;
        m.in_channels = get_or<std::size_t>(j, "inChannels", 1);
        m.height = get_req<std::size_t>(j, "model", "height");
        m.width = get_req<std::size_t>(j, "model", "width");
        m.conv_channels = get_or<std::size_t>(j, "convChannels", 8);
        m.kernel = get_or<std::size_t>(j, "kernel", 3);
        m.classes = get_req<std::size_t>(j, "model", "classes");
    } else {
        throw ConfigError("unknown model kind '" + kind + "' (expected mlp | conv)");
    }
    return m;
}

json model_to_json(const ModelSpec &m) {
    json j;
    if (m.kind == ModelSpec::Kind::Mlp) {
        j["kind"] = "mlp";
        j["inDim"] = m.in_dim;
        j["hidden"] = m.hidden;
        j["classes"] = m.classes;
    } else {
        j["kind"] = "conv";
        j["inChannels"] = m.in_channels;
        j["height"] = m.height;
        j["width"] = m.width;
        j["convChannels"] = m.conv_channels;
        j["kernel"] = m.kernel;
        j["classes"] = m.classes;
    }
    return j;
}

DatasetSpec dataset_from_json(const json &j) {
    DatasetSpec d;
    const std::string kind = get_req<std::string>(j, "dataset", "kind");
    if (kind == "teacher_student") {
        expect_keys(j, "dataset",
                    {"kind", "trainSamples", "testSamples", "inDim", "classes", "seed"});
        d.kind = DatasetSpec::Kind::TeacherStudent;
        d.train_samples = get_req<std::size_t>(j, "dataset", "trainSamples");
        d.test_samples = get_or<std::size_t>(j, "testSamples", 0);
        d.in_dim = get_req<std::size_t>(j, "dataset", "inDim");
        d.classes = get_req<std::size_t>(j, "dataset", "classes");
        if (j.contains("seed"))
            d.seed = j.at("seed").get<std::uint64_t>();
    } else if (kind == "idx") {
        expect_keys(j, "dataset",
                    {"kind", "trainImages", "trainLabels", "testImages", "testLabels"});
        d.kind = DatasetSpec::Kind::Idx;
        d.train_images = get_req<std::string>(j, "dataset", "trainImages");
        d.train_labels = get_req<std::string>(j, "dataset", "trainLabels");
        d.test_images = get_or<std::string>(j, "testImages", "");
        d.test_labels = get_or<std::string>(j, "testLabels", "");
    } else {
        throw ConfigError("unknown dataset kind '" + kind + "' (expected teacher_student | idx)");
    }
    return d;
}

json dataset_to_json(const DatasetSpec &d) {
    json j;
    if (d.kind == DatasetSpec::Kind::TeacherStudent) {
        j["kind"] = "teacher_student";
        j["trainSamples"] = d.train_samples;
        j["testSamples"] = d.test_samples;
        j["inDim"] = d.in_dim;
        j["classes"] = d.classes;
        if (d.seed)
            j["seed"] = *d.seed;
    } else {
        j["kind"] = "idx";
        j["trainImages"] = d.train_images;
        j["trainLabels"] = d.train_labels;
        j["testImages"] = d.test_images;
        j["testLabels"] = d.test_labels;
    }
    return j;
}

abtrain::OptimizerConfig optimizer_from_json(const json &j) {
    expect_keys(j, "optimizer",
                {"kind", "lr", "weightDecay", "beta1", "beta2", "eps", "cosine",
                 "lrWarmupSteps"});
    abtrain::OptimizerConfig o;
    const std::string kind = get_or<std::string>(j, "kind", "adamw");
    if (kind == "sgd")
        o.kind = abtrain::OptimizerConfig::Kind::Sgd;
    else if (kind == "adamw")
        o.kind = abtrain::OptimizerConfig::Kind::Adamw;
    else
        throw ConfigError("unknown optimizer kind '" + kind + "' (expected sgd | adamw)");
    o.lr = get_or<double>(j, "lr", o.lr);
    o.adamw.weight_decay = get_or<double>(j, "weightDecay", o.adamw.weight_decay);
    o.adamw.beta1 = get_or<double>(j, "beta1", o.adamw.beta1);
    o.adamw.beta2 = get_or<double>(j, "beta2", o.adamw.beta2);
    o.adamw.eps = get_or<double>(j, "eps", o.adamw.eps);
    o.cosine = get_or<bool>(j, "cosine", o.cosine);
    o.lr_warmup_steps = get_or<std::size_t>(j, "lrWarmupSteps", o.lr_warmup_steps);
    return o;
}

json optimizer_to_json(const abtrain::OptimizerConfig &o) {
    json j;
    j["kind"] = o.kind == abtrain::OptimizerConfig::Kind::Sgd ? "sgd" : "adamw";
    j["lr"] = o.lr;
    j["weightDecay"] = o.adamw.weight_decay;
    j["beta1"] = o.adamw.beta1;
    j["beta2"] = o.adamw.beta2;
    j["eps"] = o.adamw.eps;
    j["cosine"] = o.cosine;
    j["lrWarmupSteps"] = o.lr_warmup_steps;
    return j;
}

abtrain::AbHyperparams ab_from_json(const json &j) {
    expect_keys(j, "ab",
                {"warmupFrac", "numAbFrac", "fullRankReboundFactor", "lrReboundFactor",
                 "sigmaCutoff", "totalSteps"});
    abtrain::AbHyperparams hp;
    hp.warmup_frac = get_or<double>(j, "warmupFrac", hp.warmup_frac);
    hp.num_ab_frac = get_or<double>(j, "numAbFrac", hp.num_ab_frac);
    hp.full_rank_rebound_factor =
        get_or<double>(j, "fullRankReboundFactor", hp.full_rank_rebound_factor);
    hp.lr_rebound_factor = get_or<double>(j, "lrReboundFactor", hp.lr_rebound_factor);
    hp.sigma_cutoff = get_or<double>(j, "sigmaCutoff", hp.sigma_cutoff);
    hp.total_steps = get_req<std::size_t>(j, "ab", "totalSteps");
    return hp;
}

json ab_to_json(const abtrain::AbHyperparams &hp) {
    json j;
    j["warmupFrac"] = hp.warmup_frac;
    j["numAbFrac"] = hp.num_ab_frac;
    j["fullRankReboundFactor"] = hp.full_rank_rebound_factor;
    j["lrReboundFactor"] = hp.lr_rebound_factor;
    j["sigmaCutoff"] = hp.sigma_cutoff;
    j["totalSteps"] = hp.total_steps;
    return j;
}

} // namespace

std::vector<nn::LayerSpec> ModelSpec::layers() const {
    std::vector<nn::LayerSpec> ls;
    if (kind == Kind::Mlp) {
        if (in_dim == 0 || classes == 0)
            throw ConfigError("mlp model needs positive inDim and classes");
        std::size_t prev = in_dim;
        for (std::size_t h : hidden) {
            ls.push_back(nn::Linear{prev, h, true});
            ls.push_back(nn::Relu{});
            prev = h;
        }
        ls.push_back(nn::Linear{prev, classes, true});
    } else {
        if (height == 0 || width == 0 || classes == 0)
            throw ConfigError("conv model needs positive height, width and classes");
        ls.push_back(nn::Conv2d{in_channels, conv_channels, kernel, kernel, true});
        ls.push_back(nn::Relu{});
        ls.push_back(nn::Flatten{});
        ls.push_back(nn::Linear{conv_channels * height * width, classes, true});
    }
    return ls;
}

data::Split DatasetSpec::load(std::uint64_t run_seed) const {
    if (kind == Kind::TeacherStudent) {
        const std::uint64_t s = seed ? *seed : mix_seed(run_seed, 3);
        if (test_samples == 0) {
            data::Split split;
            split.train = data::make_teacher_student(s, train_samples, in_dim, classes);
            return split;
        }
        return data::make_teacher_student_split(s, train_samples, test_samples, in_dim, classes);
    }
    data::Split split;
    split.train.inputs = data::load_idx_images(train_images);
    split.train.labels = data::load_idx_labels(train_labels);
    if (split.train.inputs.shape()[0] != split.train.labels.size())
        throw IoError("image/label count mismatch between " + train_images + " and " +
                      train_labels);
    std::size_t classes_seen = 0;
    for (std::size_t l : split.train.labels)
        classes_seen = std::max(classes_seen, l + 1);
    split.train.num_classes = classes_seen;
    if (!test_images.empty()) {
        split.test.inputs = data::load_idx_images(test_images);
        split.test.labels = data::load_idx_labels(test_labels);
        if (split.test.inputs.shape()[0] != split.test.labels.size())
            throw IoError("image/label count mismatch between " + test_images + " and " +
                          test_labels);
        for (std::size_t l : split.test.labels)
            classes_seen = std::max(classes_seen, l + 1);
        split.train.num_classes = split.test.num_classes = classes_seen;
    }
    return split;
}

std::size_t RunConfig::resolved_local_batch() const {
    if (local_batch.has_value() == global_batch.has_value())
        throw ConfigError("set exactly one of localBatchSize and globalBatchSize");
    if (local_batch)
        return *local_batch;
    if (*global_batch % world_size != 0)
        throw ConfigError("global batch " + std::to_string(*global_batch) +
                          " is not divisible by world size " + std::to_string(world_size));
    return *global_batch / world_size;
}

RunConfig config_from_json(const nlohmann::json &j) {
    expect_keys(j, "config",
                {"mode", "seed", "worldSize", "numGroups", "localBatchSize", "globalBatchSize",
                 "model", "dataset", "optimizer", "ab", "precision", "evalInterval", "outDir",
                 "backwardFraction", "ecrFullRankFrac", "ecrFinalStateFrac"});
    RunConfig cfg;
    cfg.mode = abtrain::parse_run_mode(get_or<std::string>(j, "mode", "traddp"));
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.world_size = get_or<std::size_t>(j, "worldSize", cfg.world_size);
    cfg.num_groups = get_or<std::size_t>(j, "numGroups", cfg.num_groups);
    if (j.contains("localBatchSize"))
        cfg.local_batch = j.at("localBatchSize").get<std::size_t>();
    if (j.contains("globalBatchSize"))
        cfg.global_batch = j.at("globalBatchSize").get<std::size_t>();
    cfg.model = model_from_json(j.at("model"));
    cfg.dataset = dataset_from_json(j.at("dataset"));
    if (j.contains("optimizer"))
        cfg.optimizer = optimizer_from_json(j.at("optimizer"));
    cfg.ab = ab_from_json(j.at("ab"));
    cfg.precision = get_or<std::size_t>(j, "precision", cfg.precision);
    cfg.eval_interval = get_or<std::size_t>(j, "evalInterval", cfg.eval_interval);
    cfg.out_dir = get_or<std::string>(j, "outDir", cfg.out_dir);
    cfg.backward_fraction = get_or<double>(j, "backwardFraction", cfg.backward_fraction);
    cfg.ecr_full_rank_frac = get_or<double>(j, "ecrFullRankFrac", cfg.ecr_full_rank_frac);
    cfg.ecr_final_state_frac = get_or<double>(j, "ecrFinalStateFrac", cfg.ecr_final_state_frac);
    cfg.resolved_local_batch(); // validates the batch-size exclusivity early
    return cfg;
}

nlohmann::json config_to_json(const RunConfig &cfg) {
    nlohmann::json j;
    j["mode"] = abtrain::run_mode_name(cfg.mode);
    j["seed"] = cfg.seed;
    j["worldSize"] = cfg.world_size;
    j["numGroups"] = cfg.num_groups;
    if (cfg.local_batch)
        j["localBatchSize"] = *cfg.local_batch;
    if (cfg.global_batch)
        j["globalBatchSize"] = *cfg.global_batch;
    j["model"] = model_to_json(cfg.model);
    j["dataset"] = dataset_to_json(cfg.dataset);
    j["optimizer"] = optimizer_to_json(cfg.optimizer);
    j["ab"] = ab_to_json(cfg.ab);
    j["precision"] = cfg.precision;
    j["evalInterval"] = cfg.eval_interval;
    j["outDir"] = cfg.out_dir;
    j["backwardFraction"] = cfg.backward_fraction;
    j["ecrFullRankFrac"] = cfg.ecr_full_rank_frac;
    j["ecrFinalStateFrac"] = cfg.ecr_final_state_frac;
    return j;
}

RunConfig load_config_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(j);
}

Scaling parse_scaling(const std::string &name) {
    if (name == "local")
        return Scaling::ConstantLocal;
    if (name == "global")
        return Scaling::ConstantGlobal;
    throw ConfigError("unknown scaling '" + name + "' (expected local | global)");
}

std::string scaling_name(Scaling s) {
    return s == Scaling::ConstantLocal ? "local" : "global";
}

RunConfig apply_scaling(const RunConfig &base, std::size_t nodes, Scaling scaling) {
    if (nodes == 0)
        throw ConfigError("node count must be positive");
    RunConfig cfg = base;
    cfg.world_size = nodes;
    if (scaling == Scaling::ConstantLocal) {
        const std::size_t local = base.local_batch ? *base.local_batch
                                                   : base.resolved_local_batch();
        cfg.local_batch = local;
        cfg.global_batch.reset();
    } else {
        const std::size_t global =
            base.global_batch ? *base.global_batch
                              : *base.local_batch * base.world_size;
        if (global % nodes != 0)
            throw ConfigError("global batch " + std::to_string(global) +
                              " is not divisible across " + std::to_string(nodes) + " nodes");
        cfg.global_batch = global;
        cfg.local_batch.reset();
    }
    return cfg;
}

} // namespace ablab::config
