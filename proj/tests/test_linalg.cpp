#include "doctest.h"

#include "ablab/error.hpp"
#include "ablab/linalg.hpp"
#include "ablab/rng.hpp"
#include "ablab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace ablab;

namespace {

Tensor random_matrix(Rng &rng, std::size_t rows, std::size_t cols) {
    Tensor t({rows, cols});
    rng.fill_normal(t.data(), t.size());
    return t;
}

// Independent oracle: eigenvalues of the Gram matrix W^T W through a cyclic
// two-sided Jacobi iteration on the symmetric matrix. Shares no code with the
// library's one-sided svd.
std::vector<double> gram_singular_values(const Tensor &w0) {
    const Tensor w = w0.rows() >= w0.cols() ? w0 : linalg::transpose(w0);
    const std::size_t n = w.cols();
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < w.rows(); ++r)
                acc += w(r, i) * w(r, j);
            a[i * n + j] = acc;
        }
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                off += a[i * n + j] * a[i * n + j];
        if (off < 1e-26)
            break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::fabs(apq) < 1e-300)
                    continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double sign = theta >= 0.0 ? 1.0 : -1.0;
                const double t = sign / (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
            }
    }
    std::vector<double> sv(n);
    for (std::size_t i = 0; i < n; ++i)
        sv[i] = std::sqrt(std::max(0.0, a[i * n + i]));
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

Tensor compose(const linalg::SvdResult &r) {
    const std::size_t m = r.u.rows(), k = r.s.size();
    Tensor us({m, k});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j)
            us(i, j) = r.u(i, j) * r.s[j];
    return linalg::matmul(us, r.vt);
}

double max_offdiag_identity(const Tensor &q) {
    // largest |Q^T Q - I| entry
    Tensor g = linalg::matmul(linalg::transpose(q), q);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j)
            worst = std::max(worst, std::fabs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return worst;
}

} // namespace

TEST_CASE("matmul and transpose basics") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor c = linalg::matmul(a, b);
    CHECK(c(0, 0) == 58.0);
    CHECK(c(0, 1) == 64.0);
    CHECK(c(1, 0) == 139.0);
    CHECK(c(1, 1) == 154.0);
    Tensor at = linalg::transpose(a);
    CHECK(at.rows() == 3);
    CHECK(at(2, 1) == 6.0);
    CHECK_THROWS_AS(linalg::matmul(a, a), ShapeError);
}

TEST_CASE("svd reconstructs tall, wide and square matrices") {
    Rng rng(101);
    for (auto [m, n] : {std::pair<std::size_t, std::size_t>{12, 12},
                        {20, 7},
                        {7, 20},
                        {1, 9},
                        {9, 1},
                        {33, 16}}) {
        Tensor w = random_matrix(rng, m, n);
        linalg::SvdResult r = linalg::svd(w);
        REQUIRE(r.s.size() == std::min(m, n));
        for (std::size_t i = 1; i < r.s.size(); ++i)
            CHECK(r.s[i - 1] >= r.s[i]);
        const double rel =
            linalg::frobenius_dist(w, compose(r)) / std::max(1e-300, linalg::frobenius_norm(w));
        CHECK(rel <= 1e-12);
        CHECK(max_offdiag_identity(r.u) <= 1e-12);
        CHECK(max_offdiag_identity(linalg::transpose(r.vt)) <= 1e-12);
    }
}

TEST_CASE("singular values match the gram-eigen oracle") {
    Rng rng(202);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t m = 6 + rng.next_below(20);
        const std::size_t n = 2 + rng.next_below(12);
        Tensor w = random_matrix(rng, m, n);
        linalg::SvdResult r = linalg::svd(w);
        std::vector<double> oracle = gram_singular_values(w);
        REQUIRE(r.s.size() == oracle.size());
        for (std::size_t i = 0; i < oracle.size(); ++i)
            CHECK(std::fabs(r.s[i] - oracle[i]) <= 1e-8 * std::max(1.0, oracle[0]));
    }
}

TEST_CASE("svd handles rank-deficient and degenerate inputs") {
    Rng rng(303);
    Tensor base = random_matrix(rng, 10, 3);
    // rank-3 matrix embedded in 10x6
    Tensor ext({3, 6});
    rng.fill_normal(ext.data(), ext.size());
    Tensor w = linalg::matmul(base, ext);
    linalg::SvdResult r = linalg::svd(w);
    for (std::size_t i = 3; i < r.s.size(); ++i)
        CHECK(r.s[i] <= 1e-10 * r.s[0]);
    const double rel = linalg::frobenius_dist(w, compose(r)) / linalg::frobenius_norm(w);
    CHECK(rel <= 1e-12);
    CHECK(max_offdiag_identity(r.u) <= 1e-12);

    Tensor zero({4, 5});
    linalg::SvdResult rz = linalg::svd(zero);
    for (double s : rz.s)
        CHECK(s == 0.0);
    CHECK(max_offdiag_identity(rz.u) <= 1e-12);
    CHECK(max_offdiag_identity(linalg::transpose(rz.vt)) <= 1e-12);
}

TEST_CASE("svd is deterministic and sign-fixed") {
    Rng rng(404);
    Tensor w = random_matrix(rng, 17, 9);
    linalg::SvdResult a = linalg::svd(w);
    linalg::SvdResult b = linalg::svd(w);
    CHECK(a.u == b.u);
    CHECK(a.vt == b.vt);
    CHECK(a.s == b.s);
    for (std::size_t j = 0; j < a.u.cols(); ++j) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < a.u.rows(); ++i)
            if (std::fabs(a.u(i, j)) > std::fabs(a.u(arg, j)))
                arg = i;
        CHECK(a.u(arg, j) >= 0.0);
    }
}

TEST_CASE("truncated reconstruction satisfies the discarded-energy identity") {
    Rng rng(505);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t m = 4 + rng.next_below(24);
        const std::size_t n = 4 + rng.next_below(24);
        Tensor w = random_matrix(rng, m, n);
        linalg::SvdResult r = linalg::svd(w);
        const double cutoff = rng.next_uniform() * 0.9;
        const std::size_t k = linalg::truncate_rank(r.s, cutoff);
        Tensor uk({w.rows(), k});
        for (std::size_t i = 0; i < w.rows(); ++i)
            for (std::size_t j = 0; j < k; ++j)
                uk(i, j) = r.u(i, j) * r.s[j];
        Tensor vk({k, w.cols()});
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t i = 0; i < w.cols(); ++i)
                vk(j, i) = r.vt(j, i);
        const double diff = std::pow(linalg::frobenius_dist(w, linalg::matmul(uk, vk)), 2);
        double discarded = 0.0;
        for (std::size_t i = k; i < r.s.size(); ++i)
            discarded += r.s[i] * r.s[i];
        const double tol = 1e-6 * std::max(discarded, 1e-10);
        CHECK(std::fabs(diff - discarded) <= tol);
    }
}

TEST_CASE("truncate_rank applies the relative threshold with ties kept") {
    const std::vector<double> s{10.0, 5.0, 1.0, 0.5, 0.01};
    CHECK(linalg::truncate_rank(s, 0.1) == 3);   // threshold 1.0, the tie stays
    CHECK(linalg::truncate_rank(s, 0.0) == 5);   // lossless
    CHECK(linalg::truncate_rank(s, 0.99) == 1);  // never below one
    CHECK(linalg::truncate_rank({3.0}, 0.5) == 1);
    CHECK_THROWS_AS(linalg::truncate_rank({}, 0.1), ShapeError);
    CHECK_THROWS_AS(linalg::truncate_rank({1.0}, 1.0), ConfigError);
    CHECK_THROWS_AS(linalg::truncate_rank({1.0}, -0.1), ConfigError);
    CHECK_THROWS_AS(linalg::truncate_rank({0.0, 0.0}, 0.1), NumericError);
}

TEST_CASE("orthogonal_init produces orthonormal frames deterministically") {
    for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{16, 16},
                              {40, 12},
                              {12, 40},
                              {1, 8},
                              {8, 1}}) {
        Tensor q = linalg::orthogonal_init(rows, cols, 77);
        REQUIRE(q.rows() == rows);
        REQUIRE(q.cols() == cols);
        const Tensor frame = rows >= cols ? q : linalg::transpose(q);
        CHECK(max_offdiag_identity(frame) <= 1e-12);
        Tensor again = linalg::orthogonal_init(rows, cols, 77);
        CHECK(q == again);
        Tensor other = linalg::orthogonal_init(rows, cols, 78);
        if (q.size() > 1)
            CHECK_FALSE(q == other);
    }
}

TEST_CASE("svd rejects invalid input") {
    CHECK_THROWS_AS(linalg::svd(Tensor({2, 2, 2})), ShapeError);
    Tensor bad({2, 2}, {1.0, std::nan(""), 0.0, 1.0});
    CHECK_THROWS_AS(linalg::svd(bad), NumericError);
}
