#include "tokalign/kernels.hpp"

namespace tokalign::kernels {

namespace {

void axpy_scalar(double* y, double a, const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(const double* a, const double* b, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// C += A * B with the classic i-k-j loop so the inner loop streams rows of B.
void matmul_nn_scalar(double* c, const double* a, const double* b, int p, int r, int q) {
    for (int i = 0; i < p; ++i) {
        double* crow = c + static_cast<size_t>(i) * q;
        const double* arow = a + static_cast<size_t>(i) * r;
        for (int k = 0; k < r; ++k) {
            axpy_scalar(crow, arow[k], b + static_cast<size_t>(k) * q, q);
        }
    }
}

void matmul_tn_scalar(double* c, const double* a, const double* b, int p, int r, int q) {
    // A is r x p, walk its rows and scatter into C rows.
    for (int k = 0; k < r; ++k) {
        const double* arow = a + static_cast<size_t>(k) * p;
        const double* brow = b + static_cast<size_t>(k) * q;
        for (int i = 0; i < p; ++i) {
            axpy_scalar(c + static_cast<size_t>(i) * q, arow[i], brow, q);
        }
    }
}

void matmul_nt_scalar(double* c, const double* a, const double* b, int p, int r, int q) {
    // B is q x r; each C entry is a dot of two rows.
    for (int i = 0; i < p; ++i) {
        const double* arow = a + static_cast<size_t>(i) * r;
        double* crow = c + static_cast<size_t>(i) * q;
        for (int j = 0; j < q; ++j) {
            crow[j] += dot_scalar(arow, b + static_cast<size_t>(j) * r, static_cast<size_t>(r));
        }
    }
}

void add_scalar(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_scalar(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(double* x, double s, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= s;
}

double sum_scalar(const double* a, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i];
    return s;
}

}  // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable t = {
        "scalar",
        axpy_scalar,
        dot_scalar,
        matmul_nn_scalar,
        matmul_tn_scalar,
        matmul_nt_scalar,
        add_scalar,
        mul_scalar,
        scale_scalar,
        sum_scalar,
    };
    return t;
}

}  // namespace tokalign::kernels
