#pragma once

#include "ablab/tensor.hpp"

#include <cstdint>
#include <vector>

namespace ablab::linalg {

// Thin SVD m = u * diag(s) * vt with r = min(rows, cols).
// s is sorted non-increasing; u columns / vt rows are orthonormal. The sign
// convention (largest-magnitude entry of each u column is non-negative)
// makes the decomposition unique up to ties, so identical inputs give
// bit-identical outputs everywhere.
struct SvdResult {
    Tensor u;              // rows x r
    std::vector<double> s; // length r
    Tensor vt;             // r x cols
};

Tensor matmul(const Tensor &a, const Tensor &b);
Tensor transpose(const Tensor &a);

double frobenius_norm(const Tensor &a);
double frobenius_dist(const Tensor &a, const Tensor &b);

// One-sided Jacobi SVD. Converges when every column pair's Gram ratio
// |a_i . a_j| / (|a_i| |a_j|) drops below 1e-12, capped at 60 sweeps.
SvdResult svd(const Tensor &m);

// Number of singular values to keep: count of s[i] >= cutoff * s[0]
// (ties at the threshold are retained, so k >= 1). Throws NumericError when
// s[0] == 0 -- an all-zero matrix cannot be meaningfully decomposed.
std::size_t truncate_rank(const std::vector<double> &s, double sigma_cutoff);

// QR of a seeded standard-normal matrix, diagonal of R forced non-negative.
// rows >= cols: orthonormal columns; otherwise orthonormal rows.
Tensor orthogonal_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

} // namespace ablab::linalg
