#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tokalign {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 as convenient.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative dims");
    }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    double* row_ptr(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row_ptr(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return v.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }
};

inline void require_shape(const Matrix& m, int r, int c, const char* what) {
    if (m.rows != r || m.cols != c)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(r) + "x" +
                                    std::to_string(c) + ", got " + m.shape_str());
}

}  // namespace tokalign
