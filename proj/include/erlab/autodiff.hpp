#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "erlab/tensor.hpp"

namespace erlab::ad {

// Reverse-mode autodiff over a dynamically built graph of dense tensors.
// Backward rules are themselves expressed through graph ops, so gradients
// are ordinary graph values and can be differentiated again (double
// backprop). Ops evaluate eagerly; the graph is retained after backward.

enum class OpKind {
    leaf,
    add,
    sub,
    mul,
    scale,       // multiply by compile-time constant
    add_const,   // add compile-time constant
    pow_const,   // elementwise power with constant exponent
    matmul,
    transpose,
    reshape,
    softmax_rows,
    tanh_fn,
    relu_fn,
    abs_fn,
    exp_fn,
    log_fn,
    embedding_gather,  // gather rows of a matrix by index
    row_scatter,       // scatter-add rows into a larger matrix (adjoint of gather)
    slice,             // contiguous submatrix
    pad,               // embed a matrix into a larger zero matrix (adjoint of slice)
    sum_all,
    mean_all,
    row_sum,        // (n,m) -> (n,1)
    col_sum,        // (n,m) -> (1,m)
    bcast_row,      // (1,m) -> (n,m)
    bcast_col,      // (n,1) -> (n,m)
    bcast_scalar,   // () -> arbitrary shape
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    OpKind op = OpKind::leaf;
    std::vector<NodePtr> parents;
    Tensor value;              // cached forward value
    double scalar_arg = 0.0;   // scale factor / added constant / exponent
    std::vector<int> int_args; // gather ids, slice bounds, broadcast dims
    bool requires_grad = false;
    bool from_backward = false;  // produced by gradient_vars (marks a recorded backward pass)
};

// Value-semantics handle to a graph node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    // leaf that participates in differentiation (model parameter / probed input)
    static Var leaf(Tensor t);
    // leaf excluded from differentiation (data, masks, frozen values)
    static Var constant(Tensor t);
    static Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

    bool defined() const { return node_ != nullptr; }
    const Tensor& val() const { return node_->value; }
    const std::vector<int>& shape() const { return node_->value.shape; }
    double item() const { return node_->value.item(); }
    bool requires_grad() const { return node_->requires_grad; }
    const NodePtr& node() const { return node_; }

    // detached copy of the current value
    Tensor detached() const {
        Tensor t = node_->value;
        t.requires_grad = false;
        return t;
    }

private:
    NodePtr node_;
};

// ---- elementwise / arithmetic ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_const(const Var& a, double c);
Var pow_const(const Var& a, double p);
Var neg(const Var& a);

// ---- matrix ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);

// ---- nonlinearities ----
Var softmax_rows(const Var& a);  // stabilised with per-row max subtraction
Var tanh_fn(const Var& a);
Var relu(const Var& a);
Var abs_fn(const Var& a);
Var exp_fn(const Var& a);
Var log_fn(const Var& a);

// ---- indexing ----
Var embedding_gather(const Var& table, const std::vector<int>& ids);
Var row_scatter(const Var& rows, const std::vector<int>& ids, int out_rows);
Var slice(const Var& a, int r0, int nr, int c0, int nc);
Var pad(const Var& a, int out_rows, int out_cols, int r0, int c0);

// ---- reductions / broadcasts ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var row_sum(const Var& a);
Var col_sum(const Var& a);
Var bcast_row(const Var& a, int n_rows);
Var bcast_col(const Var& a, int n_cols);
Var bcast_scalar(const Var& a, std::vector<int> shape);

// ---- composed helpers ----
// Row-wise layer normalisation with learned gain/bias (shape (1,m)).
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
// L2 normalisation of all entries; the zero tensor maps to the zero tensor.
Var l2_normalize(const Var& x);
// log softmax of a single-row tensor (max-shifted for stability)
Var log_softmax_row(const Var& logits);
// cross entropy of a (1,C) logits row against an integer label
Var cross_entropy(const Var& logits, int label);
// mean absolute error between same-shape tensors
Var mean_abs_error(const Var& a, const Var& b);

// ---- differentiation ----

// Gradients of a scalar loss with respect to `wrt`, returned as graph values
// so they can be differentiated again. Disconnected entries yield zero
// constants. Throws std::invalid_argument for a non-scalar loss or a `wrt`
// entry that does not require grad.
std::vector<Var> gradient_vars(const Var& loss, const std::vector<Var>& wrt);

// Same, detached to plain tensors.
std::vector<Tensor> gradient(const Var& loss, const std::vector<Var>& wrt);

// Gradients of a scalar built from first-order gradient_vars output.
// Throws std::invalid_argument if the scalar was not recorded differentiably
// (i.e. it does not depend on the graph).
std::vector<Tensor> second_order_gradient(const Var& scalar, const std::vector<Var>& wrt);

// ---- finite differences ----

struct FiniteDiffEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
    bool nonfinite = false;  // loss became non-finite under perturbation
};

struct FiniteDiffReport {
    std::vector<FiniteDiffEntry> params;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Central-difference check of autodiff gradients for a deterministic loss
// builder. `max_coords_per_param` limits the probed coordinates per tensor
// (0 = all) using a deterministic stride, which keeps large embedding
// tables affordable. Non-finite losses under perturbation are flagged in
// the report rather than thrown.
FiniteDiffReport finite_difference_check(const std::function<Var()>& loss_builder,
                                         const std::vector<Var>& params,
                                         double h = 1e-4, double tol = 1e-4,
                                         const std::vector<std::string>& names = {},
                                         int max_coords_per_param = 0);

}  // namespace erlab::ad
