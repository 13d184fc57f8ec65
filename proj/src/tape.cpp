#include "tokalign/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "tokalign/kernels.hpp"

namespace tokalign {

using kernels::active;

int Tape::push(Matrix value, std::function<void(Tape&)> back) {
    Node n;
    n.grad = Matrix(value.rows, value.cols, 0.0);
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward(int scalar_node) {
    const Matrix& v = nodes_[scalar_node].value;
    if (v.rows != 1 || v.cols != 1) throw std::invalid_argument("backward: node is not scalar");
    nodes_[scalar_node].grad.at(0, 0) = 1.0;
    for (int i = scalar_node; i >= 0; --i) {
        if (nodes_[i].back) nodes_[i].back(*this);
    }
}

int Tape::leaf(Matrix value) { return push(std::move(value), nullptr); }

int Tape::matmul(int a, int b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    if (A.cols != B.rows)
        throw std::invalid_argument("matmul: " + A.shape_str() + " * " + B.shape_str());
    Matrix C(A.rows, B.cols);
    active().matmul_nn(C.v.data(), A.v.data(), B.v.data(), A.rows, A.cols, B.cols);
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, b, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        const Matrix& A = t.val(a);
        const Matrix& B = t.val(b);
        // dA += dC * B^T ; dB += A^T * dC
        active().matmul_nt(t.grad(a).v.data(), dC.v.data(), B.v.data(), dC.rows, dC.cols, B.rows);
        active().matmul_tn(t.grad(b).v.data(), A.v.data(), dC.v.data(), A.cols, A.rows, dC.cols);
    };
    return out;
}

int Tape::matmul_nt(int a, int b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    if (A.cols != B.cols)
        throw std::invalid_argument("matmul_nt: " + A.shape_str() + " , " + B.shape_str());
    Matrix C(A.rows, B.rows);
    active().matmul_nt(C.v.data(), A.v.data(), B.v.data(), A.rows, A.cols, B.rows);
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, b, out](Tape& t) {
        const Matrix& dC = t.grad(out);  // p x q, where B is q x r
        const Matrix& A = t.val(a);
        const Matrix& B = t.val(b);
        // C = A B^T : dA += dC * B ; dB += dC^T * A
        active().matmul_nn(t.grad(a).v.data(), dC.v.data(), B.v.data(), dC.rows, dC.cols, B.cols);
        active().matmul_tn(t.grad(b).v.data(), dC.v.data(), A.v.data(), dC.cols, dC.rows, A.cols);
    };
    return out;
}

int Tape::transpose(int a) {
    const Matrix& A = val(a);
    Matrix T(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) T.at(j, i) = A.at(i, j);
    int out = push(std::move(T), nullptr);
    nodes_[out].back = [a, out](Tape& t) {
        const Matrix& dT = t.grad(out);
        Matrix& dA = t.grad(a);
        for (int i = 0; i < dA.rows; ++i)
            for (int j = 0; j < dA.cols; ++j) dA.at(i, j) += dT.at(j, i);
    };
    return out;
}

int Tape::add(int a, int b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("add: " + A.shape_str() + " vs " + B.shape_str());
    Matrix C(A.rows, A.cols);
    active().add(C.v.data(), A.v.data(), B.v.data(), A.size());
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, b, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        active().axpy(t.grad(a).v.data(), 1.0, dC.v.data(), dC.size());
        active().axpy(t.grad(b).v.data(), 1.0, dC.v.data(), dC.size());
    };
    return out;
}

int Tape::add_rowvec(int x, int bias) {
    const Matrix& X = val(x);
    const Matrix& B = val(bias);
    if (B.rows != 1 || B.cols != X.cols)
        throw std::invalid_argument("add_rowvec: " + X.shape_str() + " + " + B.shape_str());
    Matrix C = X;
    for (int i = 0; i < C.rows; ++i) active().axpy(C.row_ptr(i), 1.0, B.v.data(), C.cols);
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [x, bias, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        active().axpy(t.grad(x).v.data(), 1.0, dC.v.data(), dC.size());
        Matrix& dB = t.grad(bias);
        for (int i = 0; i < dC.rows; ++i) active().axpy(dB.v.data(), 1.0, dC.row_ptr(i), dC.cols);
    };
    return out;
}

int Tape::mul(int a, int b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("mul: " + A.shape_str() + " vs " + B.shape_str());
    Matrix C(A.rows, A.cols);
    active().mul(C.v.data(), A.v.data(), B.v.data(), A.size());
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, b, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        const Matrix& A = t.val(a);
        const Matrix& B = t.val(b);
        Matrix tmp(dC.rows, dC.cols);
        active().mul(tmp.v.data(), dC.v.data(), B.v.data(), dC.size());
        active().axpy(t.grad(a).v.data(), 1.0, tmp.v.data(), dC.size());
        active().mul(tmp.v.data(), dC.v.data(), A.v.data(), dC.size());
        active().axpy(t.grad(b).v.data(), 1.0, tmp.v.data(), dC.size());
    };
    return out;
}

int Tape::scale(int a, double c) {
    Matrix C = val(a);
    active().scale(C.v.data(), c, C.size());
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, c, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        active().axpy(t.grad(a).v.data(), c, dC.v.data(), dC.size());
    };
    return out;
}

int Tape::tanh_op(int a) {
    Matrix C = val(a);
    for (double& x : C.v) x = std::tanh(x);
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, out](Tape& t) {
        const Matrix& y = t.val(out);
        const Matrix& dC = t.grad(out);
        Matrix& dA = t.grad(a);
        for (size_t i = 0; i < y.size(); ++i) dA.v[i] += dC.v[i] * (1.0 - y.v[i] * y.v[i]);
    };
    return out;
}

int Tape::sigmoid_op(int a) {
    Matrix C = val(a);
    for (double& x : C.v) x = 1.0 / (1.0 + std::exp(-x));
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, out](Tape& t) {
        const Matrix& y = t.val(out);
        const Matrix& dC = t.grad(out);
        Matrix& dA = t.grad(a);
        for (size_t i = 0; i < y.size(); ++i) dA.v[i] += dC.v[i] * y.v[i] * (1.0 - y.v[i]);
    };
    return out;
}

int Tape::softmax_rows(int a) {
    Matrix C = val(a);
    for (int i = 0; i < C.rows; ++i) {
        double* r = C.row_ptr(i);
        double mx = r[0];
        for (int j = 1; j < C.cols; ++j) mx = std::max(mx, r[j]);
        double s = 0.0;
        for (int j = 0; j < C.cols; ++j) {
            r[j] = std::exp(r[j] - mx);
            s += r[j];
        }
        for (int j = 0; j < C.cols; ++j) r[j] /= s;
    }
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, out](Tape& t) {
        const Matrix& y = t.val(out);
        const Matrix& dC = t.grad(out);
        Matrix& dA = t.grad(a);
        for (int i = 0; i < y.rows; ++i) {
            double dotv = active().dot(dC.row_ptr(i), y.row_ptr(i), y.cols);
            const double* yr = y.row_ptr(i);
            const double* dr = dC.row_ptr(i);
            double* da = dA.row_ptr(i);
            for (int j = 0; j < y.cols; ++j) da[j] += yr[j] * (dr[j] - dotv);
        }
    };
    return out;
}

int Tape::log_softmax_rows(int a) {
    Matrix C = val(a);
    for (int i = 0; i < C.rows; ++i) {
        double* r = C.row_ptr(i);
        double mx = r[0];
        for (int j = 1; j < C.cols; ++j) mx = std::max(mx, r[j]);
        double s = 0.0;
        for (int j = 0; j < C.cols; ++j) s += std::exp(r[j] - mx);
        double lse = mx + std::log(s);
        for (int j = 0; j < C.cols; ++j) r[j] -= lse;
    }
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, out](Tape& t) {
        const Matrix& y = t.val(out);
        const Matrix& dC = t.grad(out);
        Matrix& dA = t.grad(a);
        for (int i = 0; i < y.rows; ++i) {
            double rowsum = active().sum(dC.row_ptr(i), y.cols);
            const double* yr = y.row_ptr(i);
            const double* dr = dC.row_ptr(i);
            double* da = dA.row_ptr(i);
            for (int j = 0; j < y.cols; ++j) da[j] += dr[j] - std::exp(yr[j]) * rowsum;
        }
    };
    return out;
}

int Tape::trace(int a) {
    const Matrix& A = val(a);
    int n = std::min(A.rows, A.cols);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += A.at(i, i);
    Matrix C(1, 1);
    C.at(0, 0) = s;
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, n, out](Tape& t) {
        double g = t.grad(out).at(0, 0);
        Matrix& dA = t.grad(a);
        for (int i = 0; i < n; ++i) dA.at(i, i) += g;
    };
    return out;
}

int Tape::sum_all(int a) {
    const Matrix& A = val(a);
    Matrix C(1, 1);
    C.at(0, 0) = active().sum(A.v.data(), A.size());
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, out](Tape& t) {
        double g = t.grad(out).at(0, 0);
        Matrix& dA = t.grad(a);
        for (double& x : dA.v) x += g;
    };
    return out;
}

int Tape::mean_rows(int a) {
    const Matrix& A = val(a);
    if (A.rows < 1) throw std::invalid_argument("mean_rows: empty");
    Matrix C(1, A.cols);
    for (int i = 0; i < A.rows; ++i) active().axpy(C.v.data(), 1.0 / A.rows, A.row_ptr(i), A.cols);
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        Matrix& dA = t.grad(a);
        for (int i = 0; i < dA.rows; ++i)
            active().axpy(dA.row_ptr(i), 1.0 / dA.rows, dC.v.data(), dA.cols);
    };
    return out;
}

int Tape::concat_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    int cols = val(parts[0]).cols;
    int rows = 0;
    for (int p : parts) {
        if (val(p).cols != cols) throw std::invalid_argument("concat_rows: col mismatch");
        rows += val(p).rows;
    }
    Matrix C(rows, cols);
    int r = 0;
    for (int p : parts) {
        const Matrix& P = val(p);
        std::copy(P.v.begin(), P.v.end(), C.row_ptr(r));
        r += P.rows;
    }
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [parts, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        int r = 0;
        for (int p : parts) {
            Matrix& dP = t.grad(p);
            active().axpy(dP.v.data(), 1.0, dC.row_ptr(r), dP.size());
            r += dP.rows;
        }
    };
    return out;
}

int Tape::concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    int rows = val(parts[0]).rows;
    int cols = 0;
    for (int p : parts) {
        if (val(p).rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += val(p).cols;
    }
    Matrix C(rows, cols);
    int c0 = 0;
    for (int p : parts) {
        const Matrix& P = val(p);
        for (int i = 0; i < rows; ++i)
            std::copy(P.row_ptr(i), P.row_ptr(i) + P.cols, C.row_ptr(i) + c0);
        c0 += P.cols;
    }
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [parts, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        int c0 = 0;
        for (int p : parts) {
            Matrix& dP = t.grad(p);
            for (int i = 0; i < dP.rows; ++i)
                active().axpy(dP.row_ptr(i), 1.0, dC.row_ptr(i) + c0, dP.cols);
            c0 += dP.cols;
        }
    };
    return out;
}

int Tape::slice_rows(int a, int r0, int r1) {
    const Matrix& A = val(a);
    if (r0 < 0 || r1 > A.rows || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
    Matrix C(r1 - r0, A.cols);
    std::copy(A.row_ptr(r0), A.row_ptr(r0) + C.size(), C.v.data());
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, r0, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        active().axpy(t.grad(a).row_ptr(r0), 1.0, dC.v.data(), dC.size());
    };
    return out;
}

int Tape::slice_cols(int a, int c0, int c1) {
    const Matrix& A = val(a);
    if (c0 < 0 || c1 > A.cols || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    Matrix C(A.rows, c1 - c0);
    for (int i = 0; i < A.rows; ++i)
        std::copy(A.row_ptr(i) + c0, A.row_ptr(i) + c1, C.row_ptr(i));
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [a, c0, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        Matrix& dA = t.grad(a);
        for (int i = 0; i < dC.rows; ++i)
            active().axpy(dA.row_ptr(i) + c0, 1.0, dC.row_ptr(i), dC.cols);
    };
    return out;
}

int Tape::rows_lookup(int table, const std::vector<int>& ids) {
    const Matrix& T = val(table);
    Matrix C(static_cast<int>(ids.size()), T.cols);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= T.rows) throw std::out_of_range("rows_lookup: id out of range");
        std::copy(T.row_ptr(ids[i]), T.row_ptr(ids[i]) + T.cols, C.row_ptr(static_cast<int>(i)));
    }
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [table, ids, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        Matrix& dT = t.grad(table);
        for (size_t i = 0; i < ids.size(); ++i)
            active().axpy(dT.row_ptr(ids[i]), 1.0, dC.row_ptr(static_cast<int>(i)), dC.cols);
    };
    return out;
}

int Tape::linear(int x, int w, int bias) {
    int y = matmul(x, w);
    if (bias >= 0) y = add_rowvec(y, bias);
    return y;
}

int Tape::lstm_dir(int x, int wx, int wh, int b, bool reverse) {
    const Matrix& X = val(x);
    const Matrix& Wx = val(wx);
    const Matrix& Wh = val(wh);
    const Matrix& B = val(b);
    int n = X.rows;
    int a = X.cols;
    if (n < 1) throw std::invalid_argument("lstm_dir: empty sequence");
    if (Wx.cols % 4 != 0) throw std::invalid_argument("lstm_dir: gate width");
    int h = Wx.cols / 4;
    if (Wx.rows != a || Wh.rows != h || Wh.cols != 4 * h || B.rows != 1 || B.cols != 4 * h)
        throw std::invalid_argument("lstm_dir: weight shapes");

    // Stored activations for BPTT, indexed by step (0..n-1 in processing order).
    auto gates = std::make_shared<Matrix>(n, 4 * h);  // post-nonlinearity i,f,g,o
    auto cells = std::make_shared<Matrix>(n, h);
    auto tanhc = std::make_shared<Matrix>(n, h);

    Matrix H(n, h);
    std::vector<double> hprev(h, 0.0), cprev(h, 0.0);
    for (int step = 0; step < n; ++step) {
        int pos = reverse ? n - 1 - step : step;
        double* g = gates->row_ptr(step);
        std::copy(B.v.data(), B.v.data() + 4 * h, g);
        active().matmul_nn(g, X.row_ptr(pos), Wx.v.data(), 1, a, 4 * h);
        active().matmul_nn(g, hprev.data(), Wh.v.data(), 1, h, 4 * h);
        for (int j = 0; j < h; ++j) {
            g[j] = 1.0 / (1.0 + std::exp(-g[j]));              // i
            g[h + j] = 1.0 / (1.0 + std::exp(-g[h + j]));      // f
            g[2 * h + j] = std::tanh(g[2 * h + j]);            // g
            g[3 * h + j] = 1.0 / (1.0 + std::exp(-g[3 * h + j]));  // o
        }
        double* c = cells->row_ptr(step);
        double* tc = tanhc->row_ptr(step);
        double* ho = H.row_ptr(pos);
        for (int j = 0; j < h; ++j) {
            c[j] = g[h + j] * cprev[j] + g[j] * g[2 * h + j];
            tc[j] = std::tanh(c[j]);
            ho[j] = g[3 * h + j] * tc[j];
        }
        std::copy(c, c + h, cprev.data());
        std::copy(ho, ho + h, hprev.data());
    }

    int out = push(std::move(H), nullptr);
    nodes_[out].back = [x, wx, wh, b, reverse, n, a, h, gates, cells, tanhc, out](Tape& t) {
        const Matrix& dH = t.grad(out);
        const Matrix& X = t.val(x);
        const Matrix& Wx = t.val(wx);
        const Matrix& Wh = t.val(wh);
        Matrix& dX = t.grad(x);
        Matrix& dWx = t.grad(wx);
        Matrix& dWh = t.grad(wh);
        Matrix& dB = t.grad(b);

        std::vector<double> dh(h, 0.0), dc(h, 0.0), dz(4 * h);
        for (int step = n - 1; step >= 0; --step) {
            int pos = reverse ? n - 1 - step : step;
            const double* g = gates->row_ptr(step);
            const double* tc = tanhc->row_ptr(step);
            const double* cpr = step > 0 ? cells->row_ptr(step - 1) : nullptr;
            // accumulate incoming grad for this timestep's h
            active().axpy(dh.data(), 1.0, dH.row_ptr(pos), h);
            for (int j = 0; j < h; ++j) {
                double i_ = g[j], f_ = g[h + j], g_ = g[2 * h + j], o_ = g[3 * h + j];
                double dho = dh[j];
                double do_ = dho * tc[j];
                double dcj = dc[j] + dho * o_ * (1.0 - tc[j] * tc[j]);
                double cprev = cpr ? cpr[j] : 0.0;
                double df = dcj * cprev;
                double di = dcj * g_;
                double dg = dcj * i_;
                dz[j] = di * i_ * (1.0 - i_);
                dz[h + j] = df * f_ * (1.0 - f_);
                dz[2 * h + j] = dg * (1.0 - g_ * g_);
                dz[3 * h + j] = do_ * o_ * (1.0 - o_);
                dc[j] = dcj * f_;  // carried to previous step
            }
            // dx_pos += dz * Wx^T ; dWx += x_pos^T dz ; dh_prev = dz * Wh^T ; dWh += h_prev^T dz
            active().matmul_nt(dX.row_ptr(pos), dz.data(), Wx.v.data(), 1, 4 * h, a);
            active().matmul_tn(dWx.v.data(), X.row_ptr(pos), dz.data(), a, 1, 4 * h);
            std::fill(dh.begin(), dh.end(), 0.0);
            active().matmul_nt(dh.data(), dz.data(), Wh.v.data(), 1, 4 * h, h);
            if (step > 0) {
                int prev_pos = reverse ? n - step : step - 1;
                // h_prev lives in the output matrix at prev_pos
                active().matmul_tn(dWh.v.data(), t.val(out).row_ptr(prev_pos), dz.data(), h, 1, 4 * h);
            }
            active().axpy(dB.v.data(), 1.0, dz.data(), 4 * h);
        }
    };
    return out;
}

int Tape::layer_norm_residual(int x, int sub, int gain, int bias) {
    const Matrix& X = val(x);
    const Matrix& S = val(sub);
    const Matrix& G = val(gain);
    const Matrix& Bi = val(bias);
    if (!X.same_shape(S)) throw std::invalid_argument("layer_norm_residual: shape mismatch");
    int d = X.cols;
    if (d < 2) throw std::invalid_argument("layer_norm_residual: degenerate dimension");
    if (G.rows != 1 || G.cols != d || Bi.rows != 1 || Bi.cols != d)
        throw std::invalid_argument("layer_norm_residual: affine shapes");

    auto xhat = std::make_shared<Matrix>(X.rows, d);
    auto inv_std = std::make_shared<std::vector<double>>(X.rows);
    Matrix Y(X.rows, d);
    for (int i = 0; i < X.rows; ++i) {
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += X.at(i, j) + S.at(i, j);
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            double c = X.at(i, j) + S.at(i, j) - mu;
            var += c * c;
        }
        var /= d;
        double is = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_std)[i] = is;
        for (int j = 0; j < d; ++j) {
            double xh = (X.at(i, j) + S.at(i, j) - mu) * is;
            xhat->at(i, j) = xh;
            Y.at(i, j) = G.at(0, j) * xh + Bi.at(0, j);
        }
    }
    int out = push(std::move(Y), nullptr);
    nodes_[out].back = [x, sub, gain, bias, xhat, inv_std, out](Tape& t) {
        const Matrix& dY = t.grad(out);
        const Matrix& G = t.val(gain);
        Matrix& dX = t.grad(x);
        Matrix& dS = t.grad(sub);
        Matrix& dG = t.grad(gain);
        Matrix& dB = t.grad(bias);
        int d = dY.cols;
        for (int i = 0; i < dY.rows; ++i) {
            double m1 = 0.0, m2 = 0.0;
            for (int j = 0; j < d; ++j) {
                double dxh = dY.at(i, j) * G.at(0, j);
                m1 += dxh;
                m2 += dxh * xhat->at(i, j);
                dG.at(0, j) += dY.at(i, j) * xhat->at(i, j);
                dB.at(0, j) += dY.at(i, j);
            }
            m1 /= d;
            m2 /= d;
            double is = (*inv_std)[i];
            for (int j = 0; j < d; ++j) {
                double dxh = dY.at(i, j) * G.at(0, j);
                double dy = is * (dxh - m1 - xhat->at(i, j) * m2);
                dX.at(i, j) += dy;
                dS.at(i, j) += dy;
            }
        }
    };
    return out;
}

int Tape::dropout(int x, double rate, bool training, uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    const Matrix& X = val(x);
    if (!training || rate == 0.0) {
        Matrix C = X;
        int out = push(std::move(C), nullptr);
        nodes_[out].back = [x, out](Tape& t) {
            const Matrix& dC = t.grad(out);
            active().axpy(t.grad(x).v.data(), 1.0, dC.v.data(), dC.size());
        };
        return out;
    }
    auto mask = std::make_shared<std::vector<double>>(X.size());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double keep = 1.0 / (1.0 - rate);
    for (size_t i = 0; i < X.size(); ++i) (*mask)[i] = uni(rng) < rate ? 0.0 : keep;
    Matrix C(X.rows, X.cols);
    active().mul(C.v.data(), X.v.data(), mask->data(), X.size());
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [x, mask, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        Matrix& dX = t.grad(x);
        for (size_t i = 0; i < dC.size(); ++i) dX.v[i] += dC.v[i] * (*mask)[i];
    };
    return out;
}

int Tape::pyramid_reduce(int x) {
    const Matrix& X = val(x);
    if (X.rows < 2) throw std::invalid_argument("pyramid_reduce: sequence too short");
    int n2 = X.rows / 2;
    Matrix C(n2, 2 * X.cols);
    for (int i = 0; i < n2; ++i) {
        std::copy(X.row_ptr(2 * i), X.row_ptr(2 * i) + 2 * X.cols, C.row_ptr(i));
    }
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [x, n2, out](Tape& t) {
        const Matrix& dC = t.grad(out);
        Matrix& dX = t.grad(x);
        for (int i = 0; i < n2; ++i)
            active().axpy(dX.row_ptr(2 * i), 1.0, dC.row_ptr(i), dC.cols);
    };
    return out;
}

int Tape::cosine_sim(int a, int b, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("cosine_sim: tau must be positive");
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    if (A.cols != B.cols) throw std::invalid_argument("cosine_sim: width mismatch");
    auto na = std::make_shared<std::vector<double>>(A.rows);
    auto nb = std::make_shared<std::vector<double>>(B.rows);
    for (int i = 0; i < A.rows; ++i) {
        (*na)[i] = std::sqrt(active().dot(A.row_ptr(i), A.row_ptr(i), A.cols));
        if ((*na)[i] < 1e-12) throw std::domain_error("cosine_sim: degenerate row norm");
    }
    for (int j = 0; j < B.rows; ++j) {
        (*nb)[j] = std::sqrt(active().dot(B.row_ptr(j), B.row_ptr(j), B.cols));
        if ((*nb)[j] < 1e-12) throw std::domain_error("cosine_sim: degenerate row norm");
    }
    Matrix S(A.rows, B.rows);
    active().matmul_nt(S.v.data(), A.v.data(), B.v.data(), A.rows, A.cols, B.rows);
    for (int i = 0; i < S.rows; ++i)
        for (int j = 0; j < S.cols; ++j) S.at(i, j) /= tau * (*na)[i] * (*nb)[j];
    int out = push(std::move(S), nullptr);
    nodes_[out].back = [a, b, tau, na, nb, out](Tape& t) {
        const Matrix& S = t.val(out);
        const Matrix& dS = t.grad(out);
        const Matrix& A = t.val(a);
        const Matrix& B = t.val(b);
        Matrix& dA = t.grad(a);
        Matrix& dB = t.grad(b);
        int d = A.cols;
        for (int i = 0; i < S.rows; ++i) {
            for (int j = 0; j < S.cols; ++j) {
                double g = dS.at(i, j);
                if (g == 0.0) continue;
                double denom = tau * (*na)[i] * (*nb)[j];
                double s = S.at(i, j);
                const double* ai = A.row_ptr(i);
                const double* bj = B.row_ptr(j);
                double* dai = dA.row_ptr(i);
                double* dbj = dB.row_ptr(j);
                double ca = g / denom;
                double cna = g * s / ((*na)[i] * (*na)[i]);
                double cnb = g * s / ((*nb)[j] * (*nb)[j]);
                for (int k = 0; k < d; ++k) {
                    dai[k] += ca * bj[k] - cna * ai[k];
                    dbj[k] += ca * ai[k] - cnb * bj[k];
                }
            }
        }
    };
    return out;
}

int Tape::cross_entropy(int logits, const std::vector<int>& labels) {
    const Matrix& L = val(logits);
    if (static_cast<int>(labels.size()) != L.rows)
        throw std::invalid_argument("cross_entropy: label count");
    for (int y : labels)
        if (y < 0 || y >= L.cols) throw std::out_of_range("cross_entropy: label out of range");
    auto probs = std::make_shared<Matrix>(L);
    double loss = 0.0;
    for (int i = 0; i < L.rows; ++i) {
        double* r = probs->row_ptr(i);
        double mx = r[0];
        for (int j = 1; j < L.cols; ++j) mx = std::max(mx, r[j]);
        double s = 0.0;
        for (int j = 0; j < L.cols; ++j) {
            r[j] = std::exp(r[j] - mx);
            s += r[j];
        }
        for (int j = 0; j < L.cols; ++j) r[j] /= s;
        loss -= std::log(std::max(r[labels[i]], 1e-300));
    }
    loss /= L.rows;
    Matrix C(1, 1);
    C.at(0, 0) = loss;
    int out = push(std::move(C), nullptr);
    nodes_[out].back = [logits, labels, probs, out](Tape& t) {
        double g = t.grad(out).at(0, 0) / probs->rows;
        Matrix& dL = t.grad(logits);
        for (int i = 0; i < probs->rows; ++i) {
            const double* p = probs->row_ptr(i);
            double* dr = dL.row_ptr(i);
            for (int j = 0; j < probs->cols; ++j) dr[j] += g * p[j];
            dr[labels[i]] -= g;
        }
    };
    return out;
}

}  // namespace tokalign
