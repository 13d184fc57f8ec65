#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tokalign/matrix.hpp"

namespace tokalign {

// Reverse-mode tape over Matrix values. Nodes are referenced by index; the
// graph is rebuilt per forward pass (dynamic graph). backward() walks nodes
// in reverse creation order.
class Tape {
public:
    int leaf(Matrix value);

    const Matrix& val(int id) const { return nodes_[id].value; }
    Matrix& grad(int id) { return nodes_[id].grad; }
    const Matrix& grad(int id) const { return nodes_[id].grad; }
    int size() const { return static_cast<int>(nodes_.size()); }

    // Seeds d(scalar)/d(scalar)=1 and propagates to all ancestors.
    void backward(int scalar_node);

    // --- primitive ops ---
    int matmul(int a, int b);           // A(p x r) * B(r x q)
    int matmul_nt(int a, int b);        // A(p x r) * B(q x r)^T
    int transpose(int a);
    int add(int a, int b);              // same shape
    int add_rowvec(int x, int bias);    // x(p x q) + bias(1 x q) broadcast
    int mul(int a, int b);              // elementwise
    int scale(int a, double c);
    int tanh_op(int a);
    int sigmoid_op(int a);
    int softmax_rows(int a);
    int log_softmax_rows(int a);
    int trace(int a);                   // sum of diagonal -> 1x1
    int sum_all(int a);                 // -> 1x1
    int mean_rows(int a);               // p x q -> 1 x q
    int concat_rows(const std::vector<int>& parts);
    int concat_cols(const std::vector<int>& parts);
    int slice_rows(int a, int r0, int r1);
    int slice_cols(int a, int c0, int c1);
    int rows_lookup(int table, const std::vector<int>& ids);

    // --- composite / fused ops ---
    int linear(int x, int w, int bias = -1);
    // Single-direction LSTM over x(n x a) with wx(a x 4h), wh(h x 4h), b(1 x 4h).
    // Gate order i,f,g,o. Returns n x h hidden states in input time order.
    int lstm_dir(int x, int wx, int wh, int b, bool reverse);
    // LN(x + sub) with affine gain/bias (each 1 x d).
    int layer_norm_residual(int x, int sub, int gain, int bias);
    int dropout(int x, double rate, bool training, uint64_t seed);
    // n x a -> floor(n/2) x 2a by concatenating adjacent frame pairs.
    int pyramid_reduce(int x);
    // s_ij = <a_i, b_j> / (tau * |a_i| * |b_j|); throws on near-zero row norm.
    int cosine_sim(int a, int b, double tau);
    // Mean cross-entropy of row-softmax logits against integer labels -> 1x1.
    int cross_entropy(int logits, const std::vector<int>& labels);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(Tape&)> back;  // empty for leaves
    };

    int push(Matrix value, std::function<void(Tape&)> back);
    std::vector<Node> nodes_;
};

constexpr double kLayerNormEps = 1e-5;

}  // namespace tokalign
