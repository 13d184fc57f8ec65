#pragma once

#include <cstddef>
#include <string>

namespace tokalign::kernels {

// Inner-loop kernels over contiguous double arrays. A scalar reference
// implementation always exists; an AVX2/FMA variant is selected at runtime
// when the CPU supports it. The two variants are equivalence-tested.
struct KernelTable {
    const char* name;

    // y[i] += a * x[i]
    void (*axpy)(double* y, double a, const double* x, size_t n);
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, size_t n);
    // C(p x q) += A(p x r) * B(r x q), all row-major
    void (*matmul_nn)(double* c, const double* a, const double* b, int p, int r, int q);
    // C(p x q) += A(r x p)^T * B(r x q)
    void (*matmul_tn)(double* c, const double* a, const double* b, int p, int r, int q);
    // C(p x q) += A(p x r) * B(q x r)^T
    void (*matmul_nt)(double* c, const double* a, const double* b, int p, int r, int q);
    // out[i] = a[i] + b[i]
    void (*add)(double* out, const double* a, const double* b, size_t n);
    // out[i] = a[i] * b[i]
    void (*mul)(double* out, const double* a, const double* b, size_t n);
    // x[i] *= s
    void (*scale)(double* x, double s, size_t n);
    double (*sum)(const double* a, size_t n);
};

const KernelTable& scalar_kernels();
bool avx2_available();
// AVX2 table when compiled in and supported, otherwise scalar.
const KernelTable& simd_kernels();

// Active table: simd unless TOKALIGN_FORCE_SCALAR=1 is set in the environment.
const KernelTable& active();

}  // namespace tokalign::kernels
