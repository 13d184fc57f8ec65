#include "tokalign/kernels.hpp"

#include <cstdlib>
#include <cstring>

#if defined(__x86_64__) || defined(_M_X64)
#define TOKALIGN_X86 1
#include <immintrin.h>
#endif

namespace tokalign::kernels {

bool avx2_available() {
#if defined(TOKALIGN_X86) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

#if defined(TOKALIGN_X86)

namespace {

__attribute__((target("avx2,fma"))) void axpy_avx2(double* y, double a, const double* x, size_t n) {
    __m256d va = _mm256_set1_pd(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        __m256d vx = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, vx, vy));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

__attribute__((target("avx2,fma"))) double dot_avx2(const double* a, const double* b, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    }
    double buf[4];
    _mm256_storeu_pd(buf, acc);
    double s = buf[0] + buf[1] + buf[2] + buf[3];
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

__attribute__((target("avx2,fma"))) void matmul_nn_avx2(double* c, const double* a, const double* b,
                                                        int p, int r, int q) {
    for (int i = 0; i < p; ++i) {
        double* crow = c + static_cast<size_t>(i) * q;
        const double* arow = a + static_cast<size_t>(i) * r;
        for (int k = 0; k < r; ++k) {
            axpy_avx2(crow, arow[k], b + static_cast<size_t>(k) * q, static_cast<size_t>(q));
        }
    }
}

__attribute__((target("avx2,fma"))) void matmul_tn_avx2(double* c, const double* a, const double* b,
                                                        int p, int r, int q) {
    for (int k = 0; k < r; ++k) {
        const double* arow = a + static_cast<size_t>(k) * p;
        const double* brow = b + static_cast<size_t>(k) * q;
        for (int i = 0; i < p; ++i) {
            axpy_avx2(c + static_cast<size_t>(i) * q, arow[i], brow, static_cast<size_t>(q));
        }
    }
}

__attribute__((target("avx2,fma"))) void matmul_nt_avx2(double* c, const double* a, const double* b,
                                                        int p, int r, int q) {
    for (int i = 0; i < p; ++i) {
        const double* arow = a + static_cast<size_t>(i) * r;
        double* crow = c + static_cast<size_t>(i) * q;
        for (int j = 0; j < q; ++j) {
            crow[j] += dot_avx2(arow, b + static_cast<size_t>(j) * r, static_cast<size_t>(r));
        }
    }
}

__attribute__((target("avx2"))) void add_avx2(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

__attribute__((target("avx2"))) void mul_avx2(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

__attribute__((target("avx2"))) void scale_avx2(double* x, double s, size_t n) {
    __m256d vs = _mm256_set1_pd(s);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), vs));
    for (; i < n; ++i) x[i] *= s;
}

__attribute__((target("avx2"))) double sum_avx2(const double* a, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double buf[4];
    _mm256_storeu_pd(buf, acc);
    double s = buf[0] + buf[1] + buf[2] + buf[3];
    for (; i < n; ++i) s += a[i];
    return s;
}

const KernelTable avx2_table = {
    "avx2", axpy_avx2,   dot_avx2,   matmul_nn_avx2, matmul_tn_avx2,
    matmul_nt_avx2, add_avx2, mul_avx2, scale_avx2, sum_avx2,
};

}  // namespace

#endif  // TOKALIGN_X86

const KernelTable& simd_kernels() {
#if defined(TOKALIGN_X86)
    if (avx2_available()) return avx2_table;
#endif
    return scalar_kernels();
}

const KernelTable& active() {
    static const KernelTable* table = [] {
        const char* force = std::getenv("TOKALIGN_FORCE_SCALAR");
        if (force && std::strcmp(force, "1") == 0) return &scalar_kernels();
        return &simd_kernels();
    }();
    return *table;
}

}  // namespace tokalign::kernels
