#include "ablab/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace ablab::kernels {

namespace {

struct Table {
    void (*gemm_nn)(std::size_t, std::size_t, std::size_t, const double *, const double *, double *);
    void (*gemm_nt)(std::size_t, std::size_t, std::size_t, const double *, const double *, double *);
    void (*gemm_tn)(std::size_t, std::size_t, std::size_t, const double *, const double *, double *);
    void (*add)(double *, const double *, std::size_t);
    void (*axpy)(double, const double *, double *, std::size_t);
    void (*scale)(double *, double, std::size_t);
    double (*dot)(const double *, const double *, std::size_t);
    double (*sumsq)(const double *, std::size_t);
    void (*rot)(double *, double *, double, double, std::size_t);
    void (*relu_forward)(const double *, double *, std::size_t);
    void (*relu_backward)(const double *, const double *, double *, std::size_t);
    void (*adamw_update)(double *, double *, double *, const double *, std::size_t,
                         double, double, double, double, double, double, double);
};

constexpr Table kScalarTable = {
    scalar::gemm_nn, scalar::gemm_nt, scalar::gemm_tn,
    scalar::add,     scalar::axpy,    scalar::scale,
    scalar::dot,     scalar::sumsq,   scalar::rot,
    scalar::relu_forward, scalar::relu_backward, scalar::adamw_update,
};

#if ABLAB_HAVE_AVX2_TU
constexpr Table kAvx2Table = {
    avx2::gemm_nn, avx2::gemm_nt, avx2::gemm_tn,
    avx2::add,     avx2::axpy,    avx2::scale,
    avx2::dot,     avx2::sumsq,   avx2::rot,
    avx2::relu_forward, avx2::relu_backward, avx2::adamw_update,
};
#endif

Backend pick_default() {
    if (const char *env = std::getenv("ABLAB_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) {
            return Backend::Scalar;
        }
        if (std::strcmp(env, "avx2") == 0 && avx2_available()) {
            return Backend::Avx2;
        }
        if (std::strcmp(env, "avx2") == 0) {
            return Backend::Scalar; // requested ISA not present, fall back
        }
    }
    return avx2_available() ? Backend::Avx2 : Backend::Scalar;
}

struct State {
    Backend backend = pick_default();
    const Table *table =
#if ABLAB_HAVE_AVX2_TU
        backend == Backend::Avx2 ? &kAvx2Table : &kScalarTable;
#else
        &kScalarTable;
#endif
};

State &state() {
    static State s;
    return s;
}

} // namespace

bool avx2_available() {
#if ABLAB_HAVE_AVX2_TU
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

Backend active_backend() { return state().backend; }

void set_backend(Backend b) {
    State &s = state();
    if (b == Backend::Avx2 && !avx2_available()) {
        b = Backend::Scalar;
    }
    s.backend = b;
#if ABLAB_HAVE_AVX2_TU
    s.table = b == Backend::Avx2 ? &kAvx2Table : &kScalarTable;
#else
    s.table = &kScalarTable;
#endif
}

std::string backend_name(Backend b) {
    return b == Backend::Avx2 ? "avx2" : "scalar";
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double *a, const double *b, double *c) {
    state().table->gemm_nn(m, n, k, a, b, c);
}
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double *a, const double *b, double *c) {
    state().table->gemm_nt(m, n, k, a, b, c);
}
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double *a, const double *b, double *c) {
    state().table->gemm_tn(m, n, k, a, b, c);
}
void add(double *y, const double *x, std::size_t n) { state().table->add(y, x, n); }
void axpy(double alpha, const double *x, double *y, std::size_t n) { state().table->axpy(alpha, x, y, n); }
void scale(double *x, double alpha, std::size_t n) { state().table->scale(x, alpha, n); }
double dot(const double *x, const double *y, std::size_t n) { return state().table->dot(x, y, n); }
double sumsq(const double *x, std::size_t n) { return state().table->sumsq(x, n); }
void rot(double *x, double *y, double c, double s, std::size_t n) { state().table->rot(x, y, c, s, n); }
void relu_forward(const double *x, double *y, std::size_t n) { state().table->relu_forward(x, y, n); }
void relu_backward(const double *x, const double *dy, double *dx, std::size_t n) {
    state().table->relu_backward(x, dy, dx, n);
}
void adamw_update(double *w, double *m, double *v, const double *g, std::size_t n,
                  double lr, double beta1, double beta2, double eps,
                  double weight_decay, double bc1, double bc2) {
    state().table->adamw_update(w, m, v, g, n, lr, beta1, beta2, eps, weight_decay, bc1, bc2);
}

} // namespace ablab::kernels
