#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Activations of a batch are stored as stacked row blocks
// ("groups"): a batch of B samples with n tokens each is a (B*n) x d matrix.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <vector>

namespace featrestore {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace ag {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    /// Leaf that requires grad. After backward(), its gradient is added into
    /// *grad_sink when grad_sink is non-null.
    Var parameter(const Matrix& value, Matrix* grad_sink);

    Var push(Matrix value, bool requires_grad, Backward backward);

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    /// Gradient of the last backward() pass; empty matrix when none flowed.
    const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

    void accumulate(Var v, const Matrix& contribution);

    /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
    void backward(Var out);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Matrix* grad_sink = nullptr;
        Backward backward;
    };
    std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Row i multiplied by coef[i].
Var scale_rows(Var a, const Vector& coef);
/// Adds a 1 x c row to every row of a.
Var add_row(Var a, Var row);
/// (B x c) -> (B*n x c), each row repeated n times consecutively.
Var repeat_rows(Var a, Eigen::Index n);
/// (n x c) -> (copies*n x c), the whole block stacked `copies` times.
Var tile(Var a, Eigen::Index copies);
/// Row-major reshape preserving element order.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// Per sample, stacks a's group (ga rows) on top of b's group (gb rows).
Var concat_groups(Var a, Eigen::Index ga, Var b, Eigen::Index gb);
/// Per group of `group` rows, keeps rows [offset, offset+count).
Var take_groups(Var a, Eigen::Index group, Eigen::Index offset, Eigen::Index count);
Var gather_rows(Var a, const std::vector<Eigen::Index>& rows);

Var sigmoid(Var a);
Var silu(Var a);
/// tanh approximation of GELU.
Var gelu(Var a);

/// Row-wise layer normalization followed by gamma * x + beta (both 1 x c).
Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);

/// Multi-head scaled dot-product attention over per-sample groups.
/// q: (B*gq x d), k: (B*gk x d), v: (B*gk x dv); d and dv divisible by heads.
Var attention(Var q, Var k, Var v, Eigen::Index gq, Eigen::Index gk, Eigen::Index heads);

/// Sum of squared differences against a constant target, as a 1x1 node.
Var sum_squared_error(Var a, const Matrix& target);
/// Mean softmax cross-entropy of logit rows against class labels.
Var cross_entropy(Var logits, const std::vector<int>& labels);

}  // namespace ag
}  // namespace featrestore
