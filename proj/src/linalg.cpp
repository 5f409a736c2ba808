#include "ablab/linalg.hpp"

#include "ablab/kernels.hpp"
#include "ablab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ablab::linalg {

namespace {

void require_2d(const Tensor &t, const char *what) {
    if (t.ndim() != 2) {
        throw ShapeError(std::string(what) + " requires a 2-D tensor, got " +
                         shape_to_string(t.shape()));
    }
}

void require_finite(const Tensor &t, const char *what) {
    if (!t.all_finite()) {
        throw NumericError(std::string(what) + ": input has non-finite entries");
    }
}

constexpr double kJacobiTol = 1e-12;
constexpr int kJacobiMaxSweeps = 60;

// One-sided Jacobi on a tall matrix (rows >= cols), columns stored
// contiguously. cols_a[j] is rotated toward mutual orthogonality; v
// accumulates the rotations (cols x cols, columns contiguous).
void jacobi_orthogonalize(std::vector<double> &a, std::vector<double> &v,
                          std::size_t rows, std::size_t cols) {
    // v starts as identity
    v.assign(cols * cols, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
        v[j * cols + j] = 1.0;
    }
    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < cols; ++i) {
            for (std::size_t j = i + 1; j < cols; ++j) {
                double *ci = a.data() + i * rows;
                double *cj = a.data() + j * rows;
                const double alpha = kernels::sumsq(ci, rows);
                const double beta = kernels::sumsq(cj, rows);
                const double gamma = kernels::dot(ci, cj, rows);
                if (alpha == 0.0 || beta == 0.0) {
                    continue;
                }
                if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                kernels::rot(ci, cj, c, s, rows);
                kernels::rot(v.data() + i * cols, v.data() + j * cols, c, s, cols);
            }
        }
        if (!rotated) {
            break;
        }
    }
}

// SVD of a tall matrix; outputs u (rows x cols, column-contiguous),
// s (cols, descending), vt (cols x cols, row-major).
void svd_tall(const Tensor &m, std::vector<double> &u, std::vector<double> &s,
              std::vector<double> &vt) {
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    u.resize(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            u[j * rows + i] = m(i, j);
        }
    }
    std::vector<double> v;
    jacobi_orthogonalize(u, v, rows, cols);

    s.resize(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        s[j] = std::sqrt(kernels::sumsq(u.data() + j * rows, rows));
    }

    // order by singular value, descending; stable so exact ties keep the
    // sweep order and stay deterministic
    std::vector<std::size_t> order(cols);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&s](std::size_t a, std::size_t b) { return s[a] > s[b]; });

    std::vector<double> u_sorted(rows * cols);
    std::vector<double> v_sorted(cols * cols);
    std::vector<double> s_sorted(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t src = order[j];
        s_sorted[j] = s[src];
        std::copy_n(u.data() + src * rows, rows, u_sorted.data() + j * rows);
        std::copy_n(v.data() + src * cols, cols, v_sorted.data() + j * cols);
    }
    u.swap(u_sorted);
    s.swap(s_sorted);

    // normalize nonzero columns of u
    for (std::size_t j = 0; j < cols; ++j) {
        if (s[j] > 0.0) {
            kernels::scale(u.data() + j * rows, 1.0 / s[j], rows);
        }
    }

    // complete any zero columns (rank-deficient input) to an orthonormal set
    for (std::size_t j = 0; j < cols; ++j) {
        if (s[j] > 0.0) {
            continue;
        }
        double *cj = u.data() + j * rows;
        for (std::size_t cand = 0; cand < rows; ++cand) {
            std::fill(cj, cj + rows, 0.0);
            cj[cand] = 1.0;
            for (std::size_t f = 0; f < cols; ++f) {
                if (f == j) {
                    continue;
                }
                if (f > j && s[f] == 0.0) {
                    continue; // not yet filled
                }
                const double proj = kernels::dot(cj, u.data() + f * rows, rows);
                kernels::axpy(-proj, u.data() + f * rows, cj, rows);
            }
            const double norm = std::sqrt(kernels::sumsq(cj, rows));
            if (norm > 0.5) {
                kernels::scale(cj, 1.0 / norm, rows);
                break;
            }
        }
    }

    // sign convention: largest-magnitude entry of each u column non-negative
    for (std::size_t j = 0; j < cols; ++j) {
        double *cj = u.data() + j * rows;
        std::size_t arg = 0;
        double best = std::abs(cj[0]);
        for (std::size_t i = 1; i < rows; ++i) {
            const double m_i = std::abs(cj[i]);
            if (m_i > best) {
                best = m_i;
                arg = i;
            }
        }
        if (cj[arg] < 0.0) {
            kernels::scale(cj, -1.0, rows);
            kernels::scale(v_sorted.data() + j * cols, -1.0, cols);
        }
    }

    // vt row i is v column i, which is already contiguous
    vt.swap(v_sorted);
}

} // namespace

Tensor matmul(const Tensor &a, const Tensor &b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul inner dimensions disagree: " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
    }
    Tensor c({a.rows(), b.cols()});
    kernels::gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), b.data(), c.data());
    return c;
}

Tensor transpose(const Tensor &a) {
    require_2d(a, "transpose");
    Tensor t({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

double frobenius_norm(const Tensor &a) {
    return std::sqrt(kernels::sumsq(a.data(), a.size()));
}

double frobenius_dist(const Tensor &a, const Tensor &b) {
    check_same_shape(a, b, "frobenius_dist");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

SvdResult svd(const Tensor &m) {
    require_2d(m, "svd");
    require_finite(m, "svd");
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();

    std::vector<double> u_cols, s, vt_rows;
    if (rows >= cols) {
        svd_tall(m, u_cols, s, vt_rows);
        Tensor u({rows, cols});
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                u(i, j) = u_cols[j * rows + i];
            }
        }
        return SvdResult{std::move(u), std::move(s), Tensor({cols, cols}, std::move(vt_rows))};
    }

    // wide input: decompose the transpose and swap the roles of u and v
    svd_tall(transpose(m), u_cols, s, vt_rows);
    // m = (u' s v'^t)^t = v' s u'^t, with u' (cols x rows), v' (rows x rows)
    Tensor u = transpose(Tensor({rows, rows}, std::move(vt_rows))); // v' as rows x r
    Tensor vt({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            vt(i, j) = u_cols[i * cols + j]; // u'^t row i = u' column i
        }
    }
    return SvdResult{std::move(u), std::move(s), std::move(vt)};
}

std::size_t truncate_rank(const std::vector<double> &s, double sigma_cutoff) {
    if (s.empty()) {
        throw ShapeError("truncate_rank: empty singular value vector");
    }
    if (sigma_cutoff < 0.0 || sigma_cutoff >= 1.0) {
        throw ConfigError("sigma_cutoff must lie in [0, 1), got " + std::to_string(sigma_cutoff));
    }
    if (s[0] == 0.0) {
        throw NumericError("truncate_rank: degenerate all-zero spectrum");
    }
    const double threshold = sigma_cutoff * s[0];
    std::size_t k = 0;
    while (k < s.size() && s[k] >= threshold) {
        ++k;
    }
    return k == 0 ? 1 : k;
}

Tensor orthogonal_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("orthogonal_init extents must be positive");
    }
    const std::size_t big = std::max(rows, cols);
    const std::size_t small = std::min(rows, cols);

    Rng rng(seed);
    std::vector<double> a(big * small);
    rng.fill_normal(a.data(), a.size());

    // Householder QR of the big x small matrix, reflectors kept in-place
    std::vector<double> tau(small, 0.0);
    std::vector<double> rdiag(small, 0.0);
    for (std::size_t j = 0; j < small; ++j) {
        double norm_sq = 0.0;
        for (std::size_t i = j; i < big; ++i) {
            norm_sq += a[i * small + j] * a[i * small + j];
        }
        const double norm = std::sqrt(norm_sq);
        const double x0 = a[j * small + j];
        if (norm == 0.0) {
            tau[j] = 0.0;
            rdiag[j] = 0.0;
            continue;
        }
        const double sign = x0 >= 0.0 ? 1.0 : -1.0;
        const double v0 = x0 + sign * norm;
        rdiag[j] = -sign * norm;
        // v = [1, a[j+1..]/v0]; tau = v0 / (sign*norm) gives H = I - tau v v^T
        for (std::size_t i = j + 1; i < big; ++i) {
            a[i * small + j] /= v0;
        }
        tau[j] = sign * v0 / norm;
        // apply reflector to remaining columns
        for (std::size_t c = j + 1; c < small; ++c) {
            double dotv = a[j * small + c];
            for (std::size_t i = j + 1; i < big; ++i) {
                dotv += a[i * small + j] * a[i * small + c];
            }
            const double f = tau[j] * dotv;
            a[j * small + c] -= f;
            for (std::size_t i = j + 1; i < big; ++i) {
                a[i * small + c] -= f * a[i * small + j];
            }
        }
    }

    // accumulate thin Q by applying reflectors to identity, last first
    std::vector<double> q(big * small, 0.0);
    for (std::size_t j = 0; j < small; ++j) {
        q[j * small + j] = 1.0;
    }
    for (std::size_t j = small; j-- > 0;) {
        if (tau[j] == 0.0) {
            continue;
        }
        for (std::size_t c = 0; c < small; ++c) {
            double dotv = q[j * small + c];
            for (std::size_t i = j + 1; i < big; ++i) {
                dotv += a[i * small + j] * q[i * small + c];
            }
            const double f = tau[j] * dotv;
            q[j * small + c] -= f;
            for (std::size_t i = j + 1; i < big; ++i) {
                q[i * small + c] -= f * a[i * small + j];
            }
        }
    }

    // make the decomposition canonical: diag(R) >= 0
    for (std::size_t j = 0; j < small; ++j) {
        if (rdiag[j] < 0.0) {
            for (std::size_t i = 0; i < big; ++i) {
                q[i * small + j] = -q[i * small + j];
            }
        }
    }

    Tensor qt({big, small}, std::move(q));
    return rows >= cols ? qt : transpose(qt);
}

} // namespace ablab::linalg
