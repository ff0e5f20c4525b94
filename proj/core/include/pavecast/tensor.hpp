#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pavecast {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Shapes here are tiny (window length x
// model width), so there is no attempt at blocking or sparsity.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    Matrix(int r, int c, std::vector<double> d);

    static Matrix zeros(int r, int c) { return Matrix(r, c); }
    static Matrix filled(int r, int c, double v);
    static Matrix identity(int n);
    static Matrix row_vector(std::vector<double> d);

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;

    bool operator==(const Matrix& o) const = default;
};

std::string shape_str(const Matrix& m);

// Plain (untaped) kernels.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

// Row-wise softmax with max-shift; every output row sums to 1.
Matrix softmax_rows(const Matrix& m);

// Row-wise layer normalization with population variance:
// (x - mean) / sqrt(popvar + eps) * gain + bias.
Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps = 1e-5);

// Reverse-mode gradient tape over Matrix values. Operations append nodes in
// topological order; backward() replays them in reverse, so each node is
// visited exactly once after all of its consumers. A tape is confined to a
// single thread.
class Tape {
public:
    using NodeId = int;

    // Leaf holding a value whose gradient will be tracked.
    NodeId leaf(Matrix value);

    const Matrix& value(NodeId id) const { return nodes_[id].value; }
    const Matrix& grad(NodeId id) const { return nodes_[id].grad; }

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    // Adds a 1 x cols bias row to every row of m.
    NodeId add_row_broadcast(NodeId m, NodeId bias);
    NodeId scale(NodeId a, double s);
    NodeId relu(NodeId a);
    NodeId transpose(NodeId a);
    NodeId softmax_rows(NodeId a);
    NodeId layer_norm_rows(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    // Extracts row r as a 1 x cols matrix.
    NodeId select_row(NodeId a, int r);
    // Mean squared error of 1x1 prediction nodes against fixed targets.
    NodeId mean_squared_error(const std::vector<NodeId>& predictions, const std::vector<double>& targets);
    // Mean squared error of an n x 1 prediction column against fixed targets.
    NodeId mean_squared_error_column(NodeId predictions, const std::vector<double>& targets);

    // Seeds d(output)/d(output) = 1 and propagates to every leaf.
    // `output` must be 1x1.
    void backward(NodeId output);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void()> backward;
    };

    NodeId push(Matrix value, std::function<void()> backward = nullptr);

    std::vector<Node> nodes_;
};

// Central-difference gradient check. `f(params, grads)` returns the scalar
// value; when `grads` is non-null it must also fill the taped gradient for
// every parameter. Returns the max over coordinates of
// |g_fd - g_ad| / max(1, |g_fd|, |g_ad|).
double grad_check(
    const std::function<double(const std::vector<Matrix>&, std::vector<Matrix>*)>& f,
    std::vector<Matrix> params, double h = 1e-5);

}  // namespace pavecast
