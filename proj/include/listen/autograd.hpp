#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace listen::ag {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// A named trainable (or frozen) array. Gradients accumulate into `grad` only
// when `trainable` is set.
struct Param {
    Mat value;
    Mat grad;
    bool trainable = true;

    Param() = default;
    explicit Param(Mat v, bool trainable_ = true) : value(std::move(v)), trainable(trainable_) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

// Handle to a node on a tape; cheap to copy.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Mat& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

// Records a computation so that gradients can be pulled back through it.
// Single-owner, not thread-safe; use one tape per forward pass.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    explicit Tape(bool record = true) : record_(record) {}

    Var constant(Mat value);
    // Leaf whose gradient can be read back with grad().
    Var input(Mat value);
    // Leaf bound to a Param; gradients flow into param.grad when trainable.
    Var param(Param& p);
    // Read-only binding: a constant copy of the value.
    Var param(const Param& p) { return constant(p.value); }

    Var push(Mat value, std::initializer_list<int> parents, BackwardFn fn);
    Var push(Mat value, const std::vector<int>& parents, BackwardFn fn);

    // Seeds d(out)/d(out) = 1 for a 1x1 node and runs the reverse sweep.
    void backward(Var out);

    const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Mat& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    bool recording() const { return record_; }
    std::size_t size() const { return nodes_.size(); }

    // Gradient buffer of a node, zero-initialised on first touch.
    Mat& grad_buffer(int id);
    const Mat& upstream(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        BackwardFn backward;
        Param* param = nullptr;
    };

    std::vector<Node> nodes_;
    bool record_;
};

// ----- ops ---------------------------------------------------------------

Var matmul(Var a, Var b);      // a * b
Var matmul_bt(Var a, Var b);   // a * b^T
Var add(Var a, Var b);
Var add_row(Var a, Var row);   // broadcast a 1 x n row over every row of a
Var scale(Var a, double s);
Var gelu(Var a);
Var tanh(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// Row-wise softmax; with `causal`, entry (i, j) for j > i is masked out.
Var softmax_rows(Var a, bool causal = false);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index n);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(Var table, std::span<const int> ids);
// sum_l softmax(logits)_l * layers[l]; logits is 1 x L.
Var softmax_weighted_sum(Var logits, std::span<const Mat* const> layers);
// Sum over masked rows of -log softmax(logits[i])[targets[i]]; returns 1 x 1.
Var nll_sum(Var logits, std::span<const int> targets, std::span<const char> mask);
Var sum_scalars(const std::vector<Var>& parts);

// ----- plain helpers -----------------------------------------------------

RowVec softmax(const RowVec& logits);
Mat softmax_rows(const Mat& a);

}  // namespace listen::ag
