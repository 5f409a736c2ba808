#include "ablab/kernels.hpp"

#if ABLAB_HAVE_AVX2_TU

#include <immintrin.h>

#include <cmath>
#include <cstring>

// AVX2 variants. Multiplies and adds are issued as separate instructions
// (no FMA) and contraction order matches the scalar reference exactly, so
// outputs are bit-identical to kernels::scalar. Tails run the scalar code.

namespace ablab::kernels::avx2 {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const double *a, const double *b, double *c) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double *ci = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = a[i * k + l];
            const double *bl = b + l * n;
            const __m256d va = _mm256_set1_pd(ail);
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d vc = _mm256_loadu_pd(ci + j);
                __m256d vb = _mm256_loadu_pd(bl + j);
                vc = _mm256_add_pd(vc, _mm256_mul_pd(va, vb));
                _mm256_storeu_pd(ci + j, vc);
            }
            for (; j < n; ++j) {
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
            const __m256d va = _mm256_set1_pd(ali);
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d vc = _mm256_loadu_pd(ci + j);
                __m256d vb = _mm256_loadu_pd(bl + j);
                vc = _mm256_add_pd(vc, _mm256_mul_pd(va, vb));
                _mm256_storeu_pd(ci + j, vc);
            }
            for (; j < n; ++j) {
                ci[j] += ali * bl[j];
            }
        }
    }
}

void add(double *y, const double *x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        __m256d vx = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(y + i, _mm256_add_pd(vy, vx));
    }
    for (; i < n; ++i) {
        y[i] += x[i];
    }
}

void axpy(double alpha, const double *x, double *y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        __m256d vx = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
    }
    for (; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void scale(double *x, double alpha, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
    }
    for (; i < n; ++i) {
        x[i] *= alpha;
    }
}

double dot(const double *x, const double *y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d vy = _mm256_loadu_pd(y + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(vx, vy));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    for (std::size_t l = 0; i < n; ++i, ++l) {
        lanes[l] += x[i] * y[i];
    }
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

double sumsq(const double *x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(vx, vx));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    for (std::size_t l = 0; i < n; ++i, ++l) {
        lanes[l] += x[i] * x[i];
    }
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

void rot(double *x, double *y, double c, double s, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d vy = _mm256_loadu_pd(y + i);
        __m256d nx = _mm256_sub_pd(_mm256_mul_pd(vc, vx), _mm256_mul_pd(vs, vy));
        __m256d ny = _mm256_add_pd(_mm256_mul_pd(vs, vx), _mm256_mul_pd(vc, vy));
        _mm256_storeu_pd(x + i, nx);
        _mm256_storeu_pd(y + i, ny);
    }
    for (; i < n; ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

void relu_forward(const double *x, double *y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    }
    for (; i < n; ++i) {
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
    }
}

void relu_backward(const double *x, const double *dy, double *dx, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(dy + i)));
    }
    for (; i < n; ++i) {
        dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
    }
}

void adamw_update(double *w, double *m, double *v, const double *g, std::size_t n,
                  double lr, double beta1, double beta2, double eps,
                  double weight_decay, double bc1, double bc2) {
    const __m256d vb1 = _mm256_set1_pd(beta1);
    const __m256d vb2 = _mm256_set1_pd(beta2);
    const __m256d vomb1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d vomb2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d vbc1 = _mm256_set1_pd(bc1);
    const __m256d vbc2 = _mm256_set1_pd(bc2);
    const __m256d veps = _mm256_set1_pd(eps);
    const __m256d vlr = _mm256_set1_pd(lr);
    const __m256d vwd = _mm256_set1_pd(weight_decay);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vg = _mm256_loadu_pd(g + i);
        __m256d vm = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                                   _mm256_mul_pd(vomb1, vg));
        __m256d vv = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(vomb2, _mm256_mul_pd(vg, vg)));
        _mm256_storeu_pd(m + i, vm);
        _mm256_storeu_pd(v + i, vv);
        __m256d mhat = _mm256_div_pd(vm, vbc1);
        __m256d vhat = _mm256_div_pd(vv, vbc2);
        __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
        __m256d vw = _mm256_loadu_pd(w + i);
        __m256d upd = _mm256_add_pd(_mm256_div_pd(mhat, denom), _mm256_mul_pd(vwd, vw));
        _mm256_storeu_pd(w + i, _mm256_sub_pd(vw, _mm256_mul_pd(vlr, upd)));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[i]);
    }
}

} // namespace ablab::kernels::avx2

#endif // ABLAB_HAVE_AVX2_TU
