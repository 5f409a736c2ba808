#include "ablab/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ablab {

std::string shape_to_string(const Shape &shape) {
    std::ostringstream out;
    out << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? ", " : "") << shape[i];
    }
    out << ")";
    return out.str();
}

std::size_t shape_numel(const Shape &shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        n *= e;
    }
    return shape.empty() ? 0 : n;
}

namespace {
void validate_shape(const Shape &shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must have at least one extent");
    }
    for (std::size_t e : shape) {
        if (e == 0) {
            throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
        }
    }
}
} // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_numel(shape_), 0.0);
    cols_cached_ = shape_.back();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
    }
    cols_cached_ = shape_.back();
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        t(i, i) = 1.0;
    }
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto &row : rows) {
        if (row.size() != c) {
            throw ShapeError("ragged initializer rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
    if (ndim() != 2) {
        throw ShapeError("rows() on non-2-D tensor " + shape_to_string(shape_));
    }
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (ndim() != 2) {
        throw ShapeError("cols() on non-2-D tensor " + shape_to_string(shape_));
    }
    return shape_[1];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    validate_shape(new_shape);
    if (shape_numel(new_shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

void Tensor::fill(double value) {
    data_.assign(data_.size(), value);
}

void check_same_shape(const Tensor &a, const Tensor &b, const char *what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
}

} // namespace ablab
