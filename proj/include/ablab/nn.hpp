#pragma once

#include "ablab/tensor.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace ablab::nn {

enum class TrainTarget { A, B };

struct FullRank {
    Tensor w;
};

// Low-rank pair w2d ~= a * b. Only the factor named by train_target receives
// gradient; the other stays frozen at its decomposition value.
struct Factored {
    Tensor a; // rows x k
    Tensor b; // k x cols
    TrainTarget train_target = TrainTarget::B;
};

struct Parameter {
    std::string name;
    std::variant<FullRank, Factored> repr;
    Shape orig_shape;
    bool transposed = false;  // 2-D view was transposed before decomposition
    bool decomposable = false;

    bool is_factored() const { return std::holds_alternative<Factored>(repr); }
    const Tensor &full() const { return std::get<FullRank>(repr).w; }
    Tensor &full() { return std::get<FullRank>(repr).w; }
    const Factored &factored() const { return std::get<Factored>(repr); }
    Factored &factored() { return std::get<Factored>(repr); }

    // element count of the current representation
    std::size_t element_count() const;
    std::size_t full_element_count() const { return shape_numel(orig_shape); }
};

struct Flat2d {
    Tensor m; // rows >= cols
    bool transposed;
};

// Collapse trailing dimensions into columns, then transpose if the result
// would be wider than tall. 1-D input is not decomposable.
Flat2d flatten_to_2d(const Tensor &w);
Tensor unflatten_from_2d(const Tensor &m2d, const Shape &orig_shape, bool transposed);

// Truncated-SVD split of a full-rank parameter: a = u_k sqrt(s_k),
// b = sqrt(s_k) vt_k, with k chosen by truncate_rank(s, sigma_cutoff).
// An all-zero weight cannot be decomposed; it is returned unchanged and
// *degenerate is set when the out-param is provided.
Parameter ab_decompose(const Parameter &p, double sigma_cutoff, TrainTarget target,
                       bool *degenerate = nullptr);

// Inverse of ab_decompose up to the truncation error: w = a * b, transpose
// undone, reshaped to the original extents.
Parameter reconstruct(const Parameter &p);

struct Linear {
    std::size_t in = 0;
    std::size_t out = 0;
    bool bias = true;
};

// stride 1, zero-padded "same" convolution
struct Conv2d {
    std::size_t cin = 0;
    std::size_t cout = 0;
    std::size_t kh = 1;
    std::size_t kw = 1;
    bool bias = true;
};

struct Relu {};
struct Flatten {};

using LayerSpec = std::variant<Linear, Conv2d, Relu, Flatten>;

struct FactoredGrad {
    Tensor a;
    Tensor b;
};

// One entry per parameter, aligned with Model::params(). Gradients are sums
// of per-sample loss gradients over the batch (pair with sgd_step's lr/B
// scaling); frozen factors carry exact zeros.
using ParamGrad = std::variant<Tensor, FactoredGrad>;
using Gradients = std::vector<ParamGrad>;

struct ForwardCache {
    std::vector<std::vector<Tensor>> stash; // per layer
    Tensor logits;
    std::vector<std::size_t> labels;
    std::size_t batch = 0;
};

class Model {
  public:
    // Builds the model with orthogonally-initialized weights (zero biases),
    // deterministically from the seed.
    static Model build(std::vector<LayerSpec> layers, std::uint64_t seed);

    const std::vector<LayerSpec> &layers() const { return layers_; }
    const std::vector<Parameter> &params() const { return params_; }
    std::vector<Parameter> &params() { return params_; }

    Tensor forward_logits(const Tensor &input, ForwardCache *cache = nullptr) const;

    // mean softmax cross-entropy over the batch
    double forward(const Tensor &input, const std::vector<std::size_t> &labels,
                   ForwardCache &cache) const;
    Gradients backward(const ForwardCache &cache) const;

    double accuracy(const Tensor &inputs, const std::vector<std::size_t> &labels) const;

    std::size_t element_count() const;      // current representations
    std::size_t full_element_count() const; // all parameters at full rank

    // Representation changes, applied to every decomposable parameter.
    // ab_decompose leaves degenerate (all-zero) weights full-rank and
    // reports how many parameters were actually factored.
    std::size_t decompose_all(double sigma_cutoff, TrainTarget target);
    void reconstruct_all();

  private:
    struct Binding {
        int weight = -1;
        int bias = -1;
    };
    std::vector<LayerSpec> layers_;
    std::vector<Parameter> params_;
    std::vector<Binding> bindings_;
};

double softmax_cross_entropy(const Tensor &logits, const std::vector<std::size_t> &labels,
                             Tensor *dlogits_sum = nullptr);

} // namespace ablab::nn
