#pragma once

#include "ablab/error.hpp"

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace ablab {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape &shape);
std::size_t shape_numel(const Shape &shape);

// Dense n-dimensional array of doubles, row-major, contiguous.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor identity(std::size_t n);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    const Shape &shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // 2-D accessors; throw on rank mismatch
    std::size_t rows() const;
    std::size_t cols() const;
    double &operator()(std::size_t i, std::size_t j) { return data_[i * cols_cached_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_cached_ + j]; }

    double &operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double *data() { return data_.data(); }
    const double *data() const { return data_.data(); }
    const std::vector<double> &vec() const { return data_; }

    bool same_shape(const Tensor &other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    // same data, new shape (element counts must agree)
    Tensor reshaped(Shape new_shape) const;

    void fill(double value);

    bool operator==(const Tensor &other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

  private:
    Shape shape_;
    std::vector<double> data_;
    std::size_t cols_cached_ = 0; // last extent, for 2-D indexing
};

void check_same_shape(const Tensor &a, const Tensor &b, const char *what);

} // namespace ablab
