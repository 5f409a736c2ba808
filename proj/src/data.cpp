#include "ablab/data.hpp"

#include "ablab/error.hpp"
#include "ablab/nn.hpp"
#include "ablab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <utility>

namespace ablab::data {

namespace {

constexpr std::size_t kTeacherHidden = 64;
constexpr std::size_t kTeacherDraws = 64;
constexpr std::uint64_t kInputStream = 17;
constexpr std::uint64_t kTeacherStream = 23;

// The relu hidden layer keeps activations non-negative, so a raw random
// readout systematically favors the classes whose rows point into the
// positive orthant. Subtracting each class's mean logit over the calibration
// draw removes that bias; the offsets become part of the teacher and apply
// to any later input unchanged.
struct CalibratedTeacher {
    nn::Model net;
    std::vector<double> offsets;
};

std::vector<std::size_t> teacher_readout(const CalibratedTeacher &t, const Tensor &inputs) {
    Tensor logits = t.net.forward_logits(inputs);
    std::vector<std::size_t> labels(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::size_t best = 0;
        double top = logits(i, 0) + t.offsets[0];
        for (std::size_t j = 1; j < logits.cols(); ++j) {
            const double v = logits(i, j) + t.offsets[j];
            if (v > top) {
                top = v;
                best = j;
            }
        }
        labels[i] = best;
    }
    return labels;
}

// Deterministically searches teacher draws until the calibrated argmax
// histogram over the calibration inputs stays within 3x of uniform, keeping
// the most balanced draw as a fallback.
CalibratedTeacher make_teacher(const Tensor &calib_inputs, std::size_t classes,
                               std::uint64_t teacher_seed) {
    const std::size_t n = calib_inputs.shape()[0];
    CalibratedTeacher best;
    std::size_t best_peak = n + 1;
    for (std::size_t attempt = 0; attempt < kTeacherDraws; ++attempt) {
        CalibratedTeacher t;
        t.net = nn::Model::build({nn::Linear{calib_inputs.cols(), kTeacherHidden, false},
                                  nn::Relu{},
                                  nn::Linear{kTeacherHidden, classes, false}},
                                 mix_seed(teacher_seed, attempt));
        Tensor logits = t.net.forward_logits(calib_inputs);
        t.offsets.assign(classes, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < classes; ++j)
                t.offsets[j] -= logits(i, j);
        for (std::size_t j = 0; j < classes; ++j)
            t.offsets[j] /= static_cast<double>(n);

        std::vector<std::size_t> counts(classes, 0);
        for (std::size_t y : teacher_readout(t, calib_inputs))
            ++counts[y];
        const std::size_t peak = *std::max_element(counts.begin(), counts.end());
        if (peak < best_peak) {
            best = std::move(t);
            best_peak = peak;
        }
        if (static_cast<double>(best_peak) * static_cast<double>(classes) <=
            3.0 * static_cast<double>(n))
            break;
    }
    return best;
}

Tensor draw_inputs(Rng &rng, std::size_t n, std::size_t in_dim) {
    Tensor x({n, in_dim});
    rng.fill_normal(x.data(), x.size());
    return x;
}

} // namespace

Dataset make_teacher_student(std::uint64_t seed, std::size_t n_samples, std::size_t in_dim,
                             std::size_t classes) {
    if (n_samples == 0 || in_dim == 0 || classes == 0)
        throw ConfigError("make_teacher_student: all arguments must be positive");
    Rng rng(mix_seed(seed, kInputStream));
    Dataset d;
    d.inputs = draw_inputs(rng, n_samples, in_dim);
    CalibratedTeacher t = make_teacher(d.inputs, classes, mix_seed(seed, kTeacherStream));
    d.labels = teacher_readout(t, d.inputs);
    d.num_classes = classes;
    standardize_features(d.inputs);
    return d;
}

Split make_teacher_student_split(std::uint64_t seed, std::size_t n_train, std::size_t n_test,
                                 std::size_t in_dim, std::size_t classes) {
    if (n_train == 0 || n_test == 0 || in_dim == 0 || classes == 0)
        throw ConfigError("make_teacher_student_split: all arguments must be positive");
    Rng rng(mix_seed(seed, kInputStream));
    Split s;
    s.train.inputs = draw_inputs(rng, n_train, in_dim);
    s.test.inputs = draw_inputs(rng, n_test, in_dim);
    // one teacher, calibrated on the training draw, labels both sides
    CalibratedTeacher t =
        make_teacher(s.train.inputs, classes, mix_seed(seed, kTeacherStream));
    s.train.labels = teacher_readout(t, s.train.inputs);
    s.test.labels = teacher_readout(t, s.test.inputs);
    s.train.num_classes = s.test.num_classes = classes;
    FeatureStats stats = feature_stats(s.train.inputs);
    apply_standardization(s.train.inputs, stats);
    apply_standardization(s.test.inputs, stats);
    return s;
}

ShardPlan::ShardPlan(std::uint64_t seed, std::size_t world_size, std::size_t local_batch,
                     std::size_t dataset_size)
    : seed_(seed), world_size_(world_size), local_batch_(local_batch),
      dataset_size_(dataset_size), cached_epoch_(static_cast<std::size_t>(-1)) {
    if (world_size_ == 0 || local_batch_ == 0)
        throw ConfigError("shard plan needs positive world size and local batch");
    if (dataset_size_ < global_batch())
        throw ConfigError("dataset of " + std::to_string(dataset_size_) +
                          " samples cannot fill a global batch of " +
                          std::to_string(global_batch()));
    steps_per_epoch_ = dataset_size_ / global_batch();
}

const std::vector<std::size_t> &ShardPlan::permutation_for(std::size_t epoch) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (cached_epoch_ != epoch) {
        Rng rng(mix_seed(seed_, epoch));
        perm_ = rng.permutation(dataset_size_);
        cached_epoch_ = epoch;
    }
    return perm_;
}

std::vector<std::size_t> ShardPlan::global_indices(std::size_t step) const {
    const std::size_t epoch = step / steps_per_epoch_;
    const std::size_t pos = step % steps_per_epoch_;
    const std::vector<std::size_t> &perm = permutation_for(epoch);
    const std::size_t g = global_batch();
    return std::vector<std::size_t>(perm.begin() + pos * g, perm.begin() + (pos + 1) * g);
}

std::vector<std::size_t> ShardPlan::local_indices(std::size_t rank, std::size_t step) const {
    if (rank >= world_size_)
        throw ConfigError("rank " + std::to_string(rank) + " outside world of " +
                          std::to_string(world_size_));
    const std::size_t epoch = step / steps_per_epoch_;
    const std::size_t pos = step % steps_per_epoch_;
    const std::vector<std::size_t> &perm = permutation_for(epoch);
    const std::size_t base = pos * global_batch();
    std::vector<std::size_t> out(local_batch_);
    for (std::size_t i = 0; i < local_batch_; ++i)
        out[i] = perm[base + rank + i * world_size_];
    return out;
}

Batch gather(const Dataset &d, const std::vector<std::size_t> &indices) {
    const std::size_t n = d.size();
    if (n == 0)
        throw ConfigError("gather from empty dataset");
    const std::size_t row = d.inputs.size() / n;
    Shape bshape = d.inputs.shape();
    bshape[0] = indices.size();
    Batch b{Tensor(bshape), std::vector<std::size_t>(indices.size())};
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= n)
            throw ConfigError("sample index " + std::to_string(src) + " out of range");
        std::copy(d.inputs.data() + src * row, d.inputs.data() + (src + 1) * row,
                  b.inputs.data() + i * row);
        b.labels[i] = d.labels[src];
    }
    return b;
}

Batch next_local_batch(const ShardPlan &plan, const Dataset &d, std::size_t rank,
                       std::size_t step) {
    return gather(d, plan.local_indices(rank, step));
}

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t be32(const std::vector<unsigned char> &b, std::size_t off) {
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

} // namespace

Tensor load_idx_images(const std::string &path) {
    std::vector<unsigned char> bytes = read_file(path);
    if (bytes.size() < 16)
        throw IoError(path + ": truncated image header");
    if (be32(bytes, 0) != kImageMagic)
        throw IoError(path + ": bad image magic");
    const std::size_t n = be32(bytes, 4);
    const std::size_t rows = be32(bytes, 8);
    const std::size_t cols = be32(bytes, 12);
    if (n == 0 || rows == 0 || cols == 0)
        throw IoError(path + ": empty image file");
    if (bytes.size() != 16 + n * rows * cols)
        throw IoError(path + ": truncated image payload");
    Tensor x({n, 1, rows, cols});
    for (std::size_t i = 0; i < n * rows * cols; ++i)
        x.data()[i] = static_cast<double>(bytes[16 + i]) / 255.0;
    return x;
}

std::vector<std::size_t> load_idx_labels(const std::string &path) {
    std::vector<unsigned char> bytes = read_file(path);
    if (bytes.size() < 8)
        throw IoError(path + ": truncated label header");
    if (be32(bytes, 0) != kLabelMagic)
        throw IoError(path + ": bad label magic");
    const std::size_t n = be32(bytes, 4);
    if (bytes.size() != 8 + n)
        throw IoError(path + ": truncated label payload");
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i)
        labels[i] = bytes[8 + i];
    return labels;
}

FeatureStats feature_stats(const Tensor &inputs) {
    const std::size_t n = inputs.shape()[0];
    const std::size_t features = inputs.size() / n;
    FeatureStats stats{std::vector<double>(features, 0.0), std::vector<double>(features, 0.0)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < features; ++j)
            stats.mean[j] += inputs.data()[i * features + j];
    for (std::size_t j = 0; j < features; ++j)
        stats.mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < features; ++j) {
            const double d = inputs.data()[i * features + j] - stats.mean[j];
            stats.stddev[j] += d * d;
        }
    for (std::size_t j = 0; j < features; ++j) {
        const double sd = std::sqrt(stats.stddev[j] / static_cast<double>(n));
        stats.stddev[j] = sd > 0.0 ? sd : 1.0;
    }
    return stats;
}

void apply_standardization(Tensor &inputs, const FeatureStats &stats) {
    const std::size_t n = inputs.shape()[0];
    const std::size_t features = inputs.size() / n;
    if (stats.mean.size() != features)
        throw ShapeError("standardization statistics cover " +
                         std::to_string(stats.mean.size()) + " features, tensor has " +
                         std::to_string(features));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < features; ++j) {
            double &v = inputs.data()[i * features + j];
            v = (v - stats.mean[j]) / stats.stddev[j];
        }
}

void standardize_features(Tensor &inputs) {
    apply_standardization(inputs, feature_stats(inputs));
}

} // namespace ablab::data
