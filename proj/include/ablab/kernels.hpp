#pragma once

#include <cstddef>
#include <string>

// Dense arithmetic inner loops. Every kernel exists twice: a scalar reference
// in kernels::scalar and an AVX2 variant in kernels::avx2. Both use the same
// accumulation geometry (serial contraction per output element; reductions
// split into four interleaved partial sums), so with FP contraction disabled
// the two backends produce bit-identical results. The top-level functions
// dispatch through a table selected at startup.
namespace ablab::kernels {

enum class Backend { Scalar, Avx2 };

// True when this binary contains the AVX2 translation unit and the CPU
// reports AVX2 support.
bool avx2_available();

// Active backend. Defaults to Avx2 when available, else Scalar. The
// ABLAB_KERNELS environment variable ("scalar" | "avx2") overrides the
// default at startup; set_backend() overrides it at runtime.
Backend active_backend();
void set_backend(Backend b);
std::string backend_name(Backend b);

// c(m x n) = a(m x k) * b(k x n), c overwritten
void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const double *a, const double *b, double *c);
// c(m x n) = a(m x k) * b(n x k)^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const double *a, const double *b, double *c);
// c(m x n) = a(k x m)^T * b(k x n)
void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const double *a, const double *b, double *c);

void add(double *y, const double *x, std::size_t n);           // y += x
void axpy(double alpha, const double *x, double *y, std::size_t n); // y += alpha*x
void scale(double *x, double alpha, std::size_t n);             // x *= alpha

double dot(const double *x, const double *y, std::size_t n);
double sumsq(const double *x, std::size_t n);

// plane rotation of two contiguous vectors:
// x' = c*x - s*y ; y' = s*x + c*y
void rot(double *x, double *y, double c, double s, std::size_t n);

void relu_forward(const double *x, double *y, std::size_t n);
// dx = (x > 0) ? dy : 0
void relu_backward(const double *x, const double *dy, double *dx, std::size_t n);

// Decoupled-weight-decay Adam update on one buffer. bc1/bc2 are the bias
// corrections 1-beta1^t and 1-beta2^t for the post-increment step count.
void adamw_update(double *w, double *m, double *v, const double *g, std::size_t n,
                  double lr, double beta1, double beta2, double eps,
                  double weight_decay, double bc1, double bc2);

namespace scalar {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double *a, const double *b, double *c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double *a, const double *b, double *c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double *a, const double *b, double *c);
void add(double *y, const double *x, std::size_t n);
void axpy(double alpha, const double *x, double *y, std::size_t n);
void scale(double *x, double alpha, std::size_t n);
double dot(const double *x, const double *y, std::size_t n);
double sumsq(const double *x, std::size_t n);
void rot(double *x, double *y, double c, double s, std::size_t n);
void relu_forward(const double *x, double *y, std::size_t n);
void relu_backward(const double *x, const double *dy, double *dx, std::size_t n);
void adamw_update(double *w, double *m, double *v, const double *g, std::size_t n,
                  double lr, double beta1, double beta2, double eps,
                  double weight_decay, double bc1, double bc2);
} // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define ABLAB_HAVE_AVX2_TU 1
namespace avx2 {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double *a, const double *b, double *c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double *a, const double *b, double *c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double *a, const double *b, double *c);
void add(double *y, const double *x, std::size_t n);
void axpy(double alpha, const double *x, double *y, std::size_t n);
void scale(double *x, double alpha, std::size_t n);
double dot(const double *x, const double *y, std::size_t n);
double sumsq(const double *x, std::size_t n);
void rot(double *x, double *y, double c, double s, std::size_t n);
void relu_forward(const double *x, double *y, std::size_t n);
void relu_backward(const double *x, const double *dy, double *dx, std::size_t n);
void adamw_update(double *w, double *m, double *v, const double *g, std::size_t n,
                  double lr, double beta1, double beta2, double eps,
                  double weight_decay, double bc1, double bc2);
} // namespace avx2
#else
#define ABLAB_HAVE_AVX2_TU 0
#endif

} // namespace ablab::kernels
