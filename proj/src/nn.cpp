#include "ablab/nn.hpp"

#include "ablab/error.hpp"
#include "ablab/kernels.hpp"
#include "ablab/linalg.hpp"
#include "ablab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

namespace ablab::nn {

namespace {

// y(n x out) = x(n x in) * W^T with W the effective 2-D weight. For factored
// parameters the product goes through the rank-k bottleneck; the intermediate
// t(n x k) is stashed for backward when t_out is given.
Tensor weight_forward(const Parameter &p, const Tensor &x, Tensor *t_out) {
    const std::size_t n = x.rows();
    if (!p.is_factored()) {
        // the weight acts as its 2-D view: first extent out, the rest in
        const Tensor &w = p.full();
        const std::size_t out = w.shape()[0];
        const std::size_t in = w.size() / out;
        if (in != x.cols())
            throw ShapeError("weight_forward: " + p.name + " does not match input " +
                             shape_to_string(x.shape()));
        Tensor y({n, out});
        kernels::gemm_nt(n, out, in, x.data(), w.data(), y.data());
        return y;
    }
    const Factored &f = p.factored();
    const std::size_t k = f.a.cols();
    if (!p.transposed) {
        // w2d = a(out x k) * b(k x in); y = x b^T a^T
        if (f.b.cols() != x.cols())
            throw ShapeError("weight_forward: " + p.name + " does not match input");
        Tensor t({n, k});
        kernels::gemm_nt(n, k, x.cols(), x.data(), f.b.data(), t.data());
        Tensor y({n, f.a.rows()});
        kernels::gemm_nt(n, f.a.rows(), k, t.data(), f.a.data(), y.data());
        if (t_out)
            *t_out = std::move(t);
        return y;
    }
    // w2d^T = a(in x k) * b(k x out); y = x a b
    if (f.a.rows() != x.cols())
        throw ShapeError("weight_forward: " + p.name + " does not match input");
    Tensor t({n, k});
    kernels::gemm_nn(n, k, x.cols(), x.data(), f.a.data(), t.data());
    Tensor y({n, f.b.cols()});
    kernels::gemm_nn(n, f.b.cols(), k, t.data(), f.b.data(), y.data());
    if (t_out)
        *t_out = std::move(t);
    return y;
}

// Gradients of sum-of-per-sample losses w.r.t. the weight representation and
// the layer input. x and t are the stashed forward operands. Only the factor
// named by train_target is differentiated; the other gets exact zeros.
ParamGrad weight_backward(const Parameter &p, const Tensor &x, const Tensor &t,
                          const Tensor &dy, Tensor &dx) {
    const std::size_t n = x.rows();
    if (!p.is_factored()) {
        const Tensor &w = p.full();
        const std::size_t out = w.shape()[0];
        const std::size_t in = w.size() / out;
        dx = Tensor({n, in});
        kernels::gemm_nn(n, in, out, dy.data(), w.data(), dx.data());
        Tensor dw(w.shape());
        kernels::gemm_tn(out, in, n, dy.data(), x.data(), dw.data());
        return dw;
    }
    const Factored &f = p.factored();
    const std::size_t k = f.a.cols();
    FactoredGrad g{Tensor::zeros(f.a.shape()), Tensor::zeros(f.b.shape())};
    if (!p.transposed) {
        // y = x b^T a^T, t = x b^T
        Tensor u({n, k}); // dL/dt = dy * a
        kernels::gemm_nn(n, k, f.a.rows(), dy.data(), f.a.data(), u.data());
        dx = Tensor({n, f.b.cols()});
        kernels::gemm_nn(n, f.b.cols(), k, u.data(), f.b.data(), dx.data());
        if (f.train_target == TrainTarget::A)
            kernels::gemm_tn(f.a.rows(), k, n, dy.data(), t.data(), g.a.data());
        else
            kernels::gemm_tn(k, f.b.cols(), n, u.data(), x.data(), g.b.data());
    } else {
        // y = x a b, t = x a
        Tensor u({n, k}); // dL/dt = dy * b^T
        kernels::gemm_nt(n, k, f.b.cols(), dy.data(), f.b.data(), u.data());
        dx = Tensor({n, f.a.rows()});
        kernels::gemm_nt(n, f.a.rows(), k, u.data(), f.a.data(), dx.data());
        if (f.train_target == TrainTarget::A)
            kernels::gemm_tn(f.a.rows(), k, n, x.data(), u.data(), g.a.data());
        else
            kernels::gemm_tn(k, f.b.cols(), n, t.data(), dy.data(), g.b.data());
    }
    return g;
}

Tensor bias_grad(const Tensor &dy) {
    Tensor g({dy.cols()});
    for (std::size_t i = 0; i < dy.rows(); ++i)
        kernels::add(g.data(), dy.data() + i * dy.cols(), dy.cols());
    return g;
}

void add_bias(Tensor &y, const Tensor &b) {
    if (b.size() != y.cols())
        throw ShapeError("bias length " + std::to_string(b.size()) + " vs " +
                         std::to_string(y.cols()) + " outputs");
    for (std::size_t i = 0; i < y.rows(); ++i)
        kernels::add(y.data() + i * y.cols(), b.data(), y.cols());
}

// x(n, c, h, w) -> cols(n*h*w, c*kh*kw) for a stride-1 zero-padded "same"
// convolution. Row (i, r, s) of the patch maps to column (c*kh + r)*kw + s,
// matching the row-major flattening of a (cout, cin, kh, kw) kernel.
Tensor im2col(const Tensor &x, std::size_t kh, std::size_t kw) {
    const Shape &s = x.shape();
    const std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
    const std::size_t pt = (kh - 1) / 2, pl = (kw - 1) / 2;
    Tensor cols({n * h * w, c * kh * kw});
    double *out = cols.data();
    const double *in = x.data();
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t hi = 0; hi < h; ++hi)
            for (std::size_t wi = 0; wi < w; ++wi) {
                double *row = out + ((ni * h + hi) * w + wi) * c * kh * kw;
                for (std::size_t ci = 0; ci < c; ++ci)
                    for (std::size_t r = 0; r < kh; ++r) {
                        const std::ptrdiff_t src_h =
                            static_cast<std::ptrdiff_t>(hi + r) - static_cast<std::ptrdiff_t>(pt);
                        double *dst = row + (ci * kh + r) * kw;
                        if (src_h < 0 || src_h >= static_cast<std::ptrdiff_t>(h))
                            continue; // stays zero
                        const double *src = in + ((ni * c + ci) * h + src_h) * w;
                        for (std::size_t q = 0; q < kw; ++q) {
                            const std::ptrdiff_t src_w =
                                static_cast<std::ptrdiff_t>(wi + q) - static_cast<std::ptrdiff_t>(pl);
                            if (src_w >= 0 && src_w < static_cast<std::ptrdiff_t>(w))
                                dst[q] = src[src_w];
                        }
                    }
            }
    return cols;
}

// scatter-add inverse of im2col
Tensor col2im(const Tensor &dcols, const Shape &xshape, std::size_t kh, std::size_t kw) {
    const std::size_t n = xshape[0], c = xshape[1], h = xshape[2], w = xshape[3];
    const std::size_t pt = (kh - 1) / 2, pl = (kw - 1) / 2;
    Tensor dx(xshape);
    double *out = dx.data();
    const double *in = dcols.data();
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t hi = 0; hi < h; ++hi)
            for (std::size_t wi = 0; wi < w; ++wi) {
                const double *row = in + ((ni * h + hi) * w + wi) * c * kh * kw;
                for (std::size_t ci = 0; ci < c; ++ci)
                    for (std::size_t r = 0; r < kh; ++r) {
                        const std::ptrdiff_t src_h =
                            static_cast<std::ptrdiff_t>(hi + r) - static_cast<std::ptrdiff_t>(pt);
                        if (src_h < 0 || src_h >= static_cast<std::ptrdiff_t>(h))
                            continue;
                        const double *src = row + (ci * kh + r) * kw;
                        double *dst = out + ((ni * c + ci) * h + src_h) * w;
                        for (std::size_t q = 0; q < kw; ++q) {
                            const std::ptrdiff_t src_w =
                                static_cast<std::ptrdiff_t>(wi + q) - static_cast<std::ptrdiff_t>(pl);
                            if (src_w >= 0 && src_w < static_cast<std::ptrdiff_t>(w))
                                dst[src_w] += src[q];
                        }
                    }
            }
    return dx;
}

// (n, h, w) x cout rows -> (n, cout, h, w)
Tensor rows_to_nchw(const Tensor &y2d, std::size_t n, std::size_t cout, std::size_t h,
                    std::size_t w) {
    Tensor y({n, cout, h, w});
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t hi = 0; hi < h; ++hi)
            for (std::size_t wi = 0; wi < w; ++wi) {
                const double *src = y2d.data() + ((ni * h + hi) * w + wi) * cout;
                for (std::size_t co = 0; co < cout; ++co)
                    y.data()[((ni * cout + co) * h + hi) * w + wi] = src[co];
            }
    return y;
}

Tensor nchw_to_rows(const Tensor &y4) {
    const Shape &s = y4.shape();
    const std::size_t n = s[0], cout = s[1], h = s[2], w = s[3];
    Tensor y2d({n * h * w, cout});
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t hi = 0; hi < h; ++hi)
                for (std::size_t wi = 0; wi < w; ++wi)
                    y2d.data()[((ni * h + hi) * w + wi) * cout + co] =
                        y4.data()[((ni * cout + co) * h + hi) * w + wi];
    return y2d;
}

Tensor conv_bias_grad(const Tensor &dy4) {
    const Shape &s = dy4.shape();
    Tensor g({s[1]});
    for (std::size_t ni = 0; ni < s[0]; ++ni)
        for (std::size_t co = 0; co < s[1]; ++co) {
            const double *plane = dy4.data() + (ni * s[1] + co) * s[2] * s[3];
            double acc = g[co];
            for (std::size_t i = 0; i < s[2] * s[3]; ++i)
                acc += plane[i];
            g[co] = acc;
        }
    return g;
}

} // namespace

std::size_t Parameter::element_count() const {
    if (is_factored())
        return factored().a.size() + factored().b.size();
    return full().size();
}

Flat2d flatten_to_2d(const Tensor &w) {
    if (w.ndim() < 2)
        throw ShapeError("flatten_to_2d: rank-" + std::to_string(w.ndim()) +
                         " tensor is not decomposable");
    const std::size_t rows = w.shape()[0];
    const std::size_t cols = w.size() / rows;
    Tensor m = w.reshaped({rows, cols});
    if (cols > rows)
        return {linalg::transpose(m), true};
    return {std::move(m), false};
}

Tensor unflatten_from_2d(const Tensor &m2d, const Shape &orig_shape, bool transposed) {
    Tensor t = transposed ? linalg::transpose(m2d) : m2d;
    if (t.size() != shape_numel(orig_shape))
        throw ShapeError("unflatten_from_2d: " + std::to_string(t.size()) +
                         " elements cannot fill " + shape_to_string(orig_shape));
    return t.reshaped(orig_shape);
}

Parameter ab_decompose(const Parameter &p, double sigma_cutoff, TrainTarget target,
                       bool *degenerate) {
    if (degenerate)
        *degenerate = false;
    if (p.is_factored())
        throw ConfigError("ab_decompose: " + p.name + " is already factored");
    if (!p.decomposable)
        throw ConfigError("ab_decompose: " + p.name + " is not decomposable");
    Flat2d flat = flatten_to_2d(p.full());
    linalg::SvdResult svd = linalg::svd(flat.m);
    if (svd.s.empty() || svd.s[0] == 0.0) {
        if (degenerate)
            *degenerate = true;
        return p;
    }
    const std::size_t k = linalg::truncate_rank(svd.s, sigma_cutoff);
    const std::size_t rows = flat.m.rows(), cols = flat.m.cols();
    std::vector<double> root(k);
    for (std::size_t j = 0; j < k; ++j)
        root[j] = std::sqrt(svd.s[j]);
    Tensor a({rows, k});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < k; ++j)
            a(i, j) = svd.u(i, j) * root[j];
    Tensor b({k, cols});
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < cols; ++i)
            b(j, i) = root[j] * svd.vt(j, i);
    Parameter out;
    out.name = p.name;
    out.repr = Factored{std::move(a), std::move(b), target};
    out.orig_shape = p.orig_shape;
    out.transposed = flat.transposed;
    out.decomposable = true;
    return out;
}

Parameter reconstruct(const Parameter &p) {
    if (!p.is_factored())
        throw ConfigError("reconstruct: " + p.name + " is not factored");
    const Factored &f = p.factored();
    Tensor w2d = linalg::matmul(f.a, f.b);
    Parameter out;
    out.name = p.name;
    out.repr = FullRank{unflatten_from_2d(w2d, p.orig_shape, p.transposed)};
    out.orig_shape = p.orig_shape;
    out.transposed = false;
    out.decomposable = true;
    return out;
}

Model Model::build(std::vector<LayerSpec> layers, std::uint64_t seed) {
    Model m;
    m.layers_ = std::move(layers);
    m.bindings_.resize(m.layers_.size());
    for (std::size_t li = 0; li < m.layers_.size(); ++li) {
        const std::string prefix = "layer" + std::to_string(li);
        auto add_param = [&](Tensor w, bool decomposable) {
            Parameter p;
            p.name = prefix + (decomposable ? ".weight" : ".bias");
            p.orig_shape = w.shape();
            p.decomposable = decomposable;
            p.repr = FullRank{std::move(w)};
            m.params_.push_back(std::move(p));
            return static_cast<int>(m.params_.size() - 1);
        };
        if (const auto *lin = std::get_if<Linear>(&m.layers_[li])) {
            if (lin->in == 0 || lin->out == 0)
                throw ConfigError("linear layer " + std::to_string(li) + " has zero extent");
            const std::uint64_t pseed = mix_seed(seed, m.params_.size());
            m.bindings_[li].weight =
                add_param(linalg::orthogonal_init(lin->out, lin->in, pseed), true);
            if (lin->bias)
                m.bindings_[li].bias = add_param(Tensor::zeros({lin->out}), false);
        } else if (const auto *cv = std::get_if<Conv2d>(&m.layers_[li])) {
            if (cv->cin == 0 || cv->cout == 0 || cv->kh == 0 || cv->kw == 0)
                throw ConfigError("conv layer " + std::to_string(li) + " has zero extent");
            const std::uint64_t pseed = mix_seed(seed, m.params_.size());
            Tensor w = linalg::orthogonal_init(cv->cout, cv->cin * cv->kh * cv->kw, pseed)
                           .reshaped({cv->cout, cv->cin, cv->kh, cv->kw});
            m.bindings_[li].weight = add_param(std::move(w), true);
            if (cv->bias)
                m.bindings_[li].bias = add_param(Tensor::zeros({cv->cout}), false);
        }
    }
    return m;
}

Tensor Model::forward_logits(const Tensor &input, ForwardCache *cache) const {
    if (input.ndim() < 2)
        throw ShapeError("model input must carry a batch dimension, got " +
                         shape_to_string(input.shape()));
    if (cache) {
        cache->stash.assign(layers_.size(), {});
        cache->batch = input.shape()[0];
    }
    Tensor cur = input;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        auto stash = [&](Tensor t) {
            if (cache)
                cache->stash[li].push_back(std::move(t));
        };
        if (const auto *lin = std::get_if<Linear>(&layers_[li])) {
            if (cur.ndim() != 2 || cur.cols() != lin->in)
                throw ShapeError("linear layer " + std::to_string(li) + " expects (n, " +
                                 std::to_string(lin->in) + "), got " +
                                 shape_to_string(cur.shape()));
            const Parameter &wp = params_[bindings_[li].weight];
            Tensor t;
            Tensor y = weight_forward(wp, cur, cache ? &t : nullptr);
            if (bindings_[li].bias >= 0)
                add_bias(y, params_[bindings_[li].bias].full());
            stash(std::move(cur));
            if (wp.is_factored())
                stash(std::move(t));
            cur = std::move(y);
        } else if (const auto *cv = std::get_if<Conv2d>(&layers_[li])) {
            if (cur.ndim() != 4 || cur.shape()[1] != cv->cin)
                throw ShapeError("conv layer " + std::to_string(li) + " expects (n, " +
                                 std::to_string(cv->cin) + ", h, w), got " +
                                 shape_to_string(cur.shape()));
            const Shape xshape = cur.shape();
            Tensor cols = im2col(cur, cv->kh, cv->kw);
            const Parameter &wp = params_[bindings_[li].weight];
            Tensor t;
            Tensor y2d = weight_forward(wp, cols, cache ? &t : nullptr);
            if (bindings_[li].bias >= 0)
                add_bias(y2d, params_[bindings_[li].bias].full());
            Tensor y = rows_to_nchw(y2d, xshape[0], cv->cout, xshape[2], xshape[3]);
            stash(Tensor(xshape)); // records the input extents for col2im
            stash(std::move(cols));
            if (wp.is_factored())
                stash(std::move(t));
            cur = std::move(y);
        } else if (std::holds_alternative<Relu>(layers_[li])) {
            Tensor y(cur.shape());
            kernels::relu_forward(cur.data(), y.data(), cur.size());
            stash(std::move(cur));
            cur = std::move(y);
        } else { // Flatten
            const Shape before = cur.shape();
            const std::size_t n = before[0];
            stash(Tensor(before));
            cur = cur.reshaped({n, cur.size() / n});
        }
    }
    if (cur.ndim() != 2)
        throw ShapeError("model output is not a logit matrix: " + shape_to_string(cur.shape()));
    if (cache)
        cache->logits = cur;
    return cur;
}

double Model::forward(const Tensor &input, const std::vector<std::size_t> &labels,
                      ForwardCache &cache) const {
    Tensor logits = forward_logits(input, &cache);
    cache.labels = labels;
    return softmax_cross_entropy(logits, labels);
}

Gradients Model::backward(const ForwardCache &cache) const {
    if (cache.stash.size() != layers_.size())
        throw ConfigError("backward called without a matching forward cache");
    Gradients grads(params_.size());
    Tensor dcur;
    softmax_cross_entropy(cache.logits, cache.labels, &dcur);
    for (std::size_t ri = layers_.size(); ri-- > 0;) {
        const auto &stash = cache.stash[ri];
        if (std::holds_alternative<Linear>(layers_[ri])) {
            const Parameter &wp = params_[bindings_[ri].weight];
            const Tensor &x = stash[0];
            const Tensor &t = wp.is_factored() ? stash[1] : x;
            if (bindings_[ri].bias >= 0)
                grads[bindings_[ri].bias] = bias_grad(dcur);
            Tensor dx;
            grads[bindings_[ri].weight] = weight_backward(wp, x, t, dcur, dx);
            dcur = std::move(dx);
        } else if (const auto *cv = std::get_if<Conv2d>(&layers_[ri])) {
            const Parameter &wp = params_[bindings_[ri].weight];
            const Shape &xshape = stash[0].shape();
            const Tensor &cols = stash[1];
            const Tensor &t = wp.is_factored() ? stash[2] : cols;
            if (bindings_[ri].bias >= 0)
                grads[bindings_[ri].bias] = conv_bias_grad(dcur);
            Tensor dy2d = nchw_to_rows(dcur);
            Tensor dcols;
            grads[bindings_[ri].weight] = weight_backward(wp, cols, t, dy2d, dcols);
            dcur = col2im(dcols, xshape, cv->kh, cv->kw);
        } else if (std::holds_alternative<Relu>(layers_[ri])) {
            const Tensor &x = stash[0];
            Tensor dx(x.shape());
            kernels::relu_backward(x.data(), dcur.data(), dx.data(), x.size());
            dcur = std::move(dx);
        } else { // Flatten
            dcur = dcur.reshaped(stash[0].shape());
        }
    }
    return grads;
}

double Model::accuracy(const Tensor &inputs, const std::vector<std::size_t> &labels) const {
    Tensor logits = forward_logits(inputs);
    if (logits.rows() != labels.size())
        throw ShapeError("accuracy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (logits(i, j) > logits(i, best))
                best = j;
        if (best == labels[i])
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

std::size_t Model::element_count() const {
    std::size_t n = 0;
    for (const Parameter &p : params_)
        n += p.element_count();
    return n;
}

std::size_t Model::full_element_count() const {
    std::size_t n = 0;
    for (const Parameter &p : params_)
        n += p.full_element_count();
    return n;
}

std::size_t Model::decompose_all(double sigma_cutoff, TrainTarget target) {
    std::size_t converted = 0;
    for (Parameter &p : params_) {
        if (!p.decomposable || p.is_factored())
            continue;
        bool degenerate = false;
        Parameter q = ab_decompose(p, sigma_cutoff, target, &degenerate);
        if (!degenerate) {
            p = std::move(q);
            ++converted;
        }
    }
    return converted;
}

void Model::reconstruct_all() {
    for (Parameter &p : params_)
        if (p.is_factored())
            p = reconstruct(p);
}

double softmax_cross_entropy(const Tensor &logits, const std::vector<std::size_t> &labels,
                             Tensor *dlogits_sum) {
    if (logits.ndim() != 2)
        throw ShapeError("softmax_cross_entropy expects 2-D logits");
    const std::size_t n = logits.rows(), c = logits.cols();
    if (labels.size() != n)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
    if (dlogits_sum)
        *dlogits_sum = Tensor({n, c});
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= c)
            throw ConfigError("label " + std::to_string(labels[i]) + " out of range for " +
                              std::to_string(c) + " classes");
        const double *row = logits.data() + i * c;
        double hi = row[0];
        for (std::size_t j = 1; j < c; ++j)
            hi = std::max(hi, row[j]);
        double se = 0.0;
        for (std::size_t j = 0; j < c; ++j)
            se += std::exp(row[j] - hi);
        total += hi + std::log(se) - row[labels[i]];
        if (dlogits_sum) {
            double *drow = dlogits_sum->data() + i * c;
            for (std::size_t j = 0; j < c; ++j)
                drow[j] = std::exp(row[j] - hi) / se - (j == labels[i] ? 1.0 : 0.0);
        }
    }
    return total / static_cast<double>(n);
}

} // namespace ablab::nn
