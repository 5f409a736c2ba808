#include "ablab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ablab::kernels::scalar {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const double *a, const double *b, double *c) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double *ci = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = a[i * k + l];
            const double *bl = b + l * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += ail * bl[j];
            }
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const double *a, const double *b, double *c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double *ai = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            c[i * n + j] = dot(ai, b + j * k, k);
        }
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const double *a, const double *b, double *c) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t l = 0; l < k; ++l) {
        const double *al = a + l * m;
        const double *bl = b + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double ali = al[i];
            double *ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += ali * bl[j];
            }
        }
    }
}

void add(double *y, const double *x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += x[i];
    }
}

void axpy(double alpha, const double *x, double *y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void scale(double *x, double alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        x[i] *= alpha;
    }
}

// Reductions accumulate into four interleaved lanes and combine as
// (s0+s1)+(s2+s3); the AVX2 backend follows the same pattern so both
// produce identical bits.
double dot(const double *x, const double *y, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += x[i + 0] * y[i + 0];
        s1 += x[i + 1] * y[i + 1];
        s2 += x[i + 2] * y[i + 2];
        s3 += x[i + 3] * y[i + 3];
    }
    double lanes[4] = {s0, s1, s2, s3};
    for (std::size_t l = 0; i < n; ++i, ++l) {
        lanes[l] += x[i] * y[i];
    }
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

double sumsq(const double *x, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += x[i + 0] * x[i + 0];
        s1 += x[i + 1] * x[i + 1];
        s2 += x[i + 2] * x[i + 2];
        s3 += x[i + 3] * x[i + 3];
    }
    double lanes[4] = {s0, s1, s2, s3};
    for (std::size_t l = 0; i < n; ++i, ++l) {
        lanes[l] += x[i] * x[i];
    }
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

void rot(double *x, double *y, double c, double s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

void relu_forward(const double *x, double *y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
    }
}

void relu_backward(const double *x, const double *dy, double *dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
    }
}

void adamw_update(double *w, double *m, double *v, const double *g, std::size_t n,
                  double lr, double beta1, double beta2, double eps,
                  double weight_decay, double bc1, double bc2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[i]);
    }
}

} // namespace ablab::kernels::scalar
