#include "erlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace erlab::ad {

namespace {

NodePtr make_node(OpKind op, std::vector<NodePtr> parents, Tensor value) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->parents = std::move(parents);
    n->value = std::move(value);
    for (const auto& p : n->parents) {
        if (p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    return n;
}

Var result(OpKind op, std::vector<NodePtr> parents, Tensor value) {
    return Var(make_node(op, std::move(parents), std::move(value)));
}

void check_same_shape(const Var& a, const Var& b, const char* what) {
    if (!a.val().same_shape(b.val())) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                    a.val().shape_str() + " vs " + b.val().shape_str());
    }
}

void check_rank2(const Var& a, const char* what) {
    if (a.val().rank() != 2) {
        throw std::invalid_argument(std::string(what) + ": expected rank-2 tensor, got " +
                                    a.val().shape_str());
    }
}

}  // namespace

Var Var::leaf(Tensor t) {
    t.requires_grad = true;
    auto n = std::make_shared<Node>();
    n->op = OpKind::leaf;
    n->value = std::move(t);
    n->requires_grad = true;
    return Var(n);
}

Var Var::constant(Tensor t) {
    t.requires_grad = false;
    auto n = std::make_shared<Node>();
    n->op = OpKind::leaf;
    n->value = std::move(t);
    n->requires_grad = false;
    return Var(n);
}

// ---------------------------------------------------------------------------
// forward ops
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.val().shape, a.val().values);
    const double* bv = b.val().values.data();
    double* ov = out.values.data();
    for (size_t i = 0; i < out.values.size(); ++i) ov[i] += bv[i];
    return result(OpKind::add, {a.node(), b.node()}, std::move(out));
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.val().shape, a.val().values);
    const double* bv = b.val().values.data();
    double* ov = out.values.data();
    for (size_t i = 0; i < out.values.size(); ++i) ov[i] -= bv[i];
    return result(OpKind::sub, {a.node(), b.node()}, std::move(out));
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.val().shape, a.val().values);
    const double* bv = b.val().values.data();
    double* ov = out.values.data();
    for (size_t i = 0; i < out.values.size(); ++i) ov[i] *= bv[i];
    return result(OpKind::mul, {a.node(), b.node()}, std::move(out));
}

Var scale(const Var& a, double c) {
    Tensor out(a.val().shape, a.val().values);
    for (double& v : out.values) v *= c;
    Var r = result(OpKind::scale, {a.node()}, std::move(out));
    r.node()->scalar_arg = c;
    return r;
}

Var add_const(const Var& a, double c) {
    Tensor out(a.val().shape, a.val().values);
    for (double& v : out.values) v += c;
    Var r = result(OpKind::add_const, {a.node()}, std::move(out));
    r.node()->scalar_arg = c;
    return r;
}

Var pow_const(const Var& a, double p) {
    Tensor out(a.val().shape, a.val().values);
    for (double& v : out.values) v = std::pow(v, p);
    Var r = result(OpKind::pow_const, {a.node()}, std::move(out));
    r.node()->scalar_arg = p;
    return r;
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var matmul(const Var& a, const Var& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    const int n = a.val().shape[0], k = a.val().shape[1];
    const int k2 = b.val().shape[0], m = b.val().shape[1];
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dimensions differ " + a.val().shape_str() +
                                    " x " + b.val().shape_str());
    }
    Tensor out = Tensor::zeros({n, m});
    const double* av = a.val().values.data();
    const double* bv = b.val().values.data();
    double* ov = out.values.data();
    for (int i = 0; i < n; ++i) {
        const double* arow = av + static_cast<size_t>(i) * k;
        double* orow = ov + static_cast<size_t>(i) * m;
        for (int kk = 0; kk < k; ++kk) {
            const double s = arow[kk];
            if (s == 0.0) continue;
            const double* brow = bv + static_cast<size_t>(kk) * m;
            for (int j = 0; j < m; ++j) orow[j] += s * brow[j];
        }
    }
    return result(OpKind::matmul, {a.node(), b.node()}, std::move(out));
}

Var transpose(const Var& a) {
    check_rank2(a, "transpose");
    const int n = a.val().shape[0], m = a.val().shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(j, i) = a.val().at(i, j);
    return result(OpKind::transpose, {a.node()}, std::move(out));
}

Var reshape(const Var& a, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != a.val().numel()) {
        throw std::invalid_argument("reshape: element count mismatch");
    }
    Tensor out(shape, a.val().values);
    return result(OpKind::reshape, {a.node()}, std::move(out));
}

Var softmax_rows(const Var& a) {
    check_rank2(a, "softmax_rows");
    const int n = a.val().shape[0], m = a.val().shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < n; ++i) {
        double mx = a.val().at(i, 0);
        for (int j = 1; j < m; ++j) mx = std::max(mx, a.val().at(i, j));
        double s = 0.0;
        for (int j = 0; j < m; ++j) {
            const double e = std::exp(a.val().at(i, j) - mx);
            out.at(i, j) = e;
            s += e;
        }
        const double inv = 1.0 / s;
        for (int j = 0; j < m; ++j) out.at(i, j) *= inv;
    }
    return result(OpKind::softmax_rows, {a.node()}, std::move(out));
}

namespace {
template <typename F>
Var unary_map(OpKind op, const Var& a, F f) {
    Tensor out(a.val().shape, a.val().values);
    for (double& v : out.values) v = f(v);
    return result(op, {a.node()}, std::move(out));
}
}  // namespace

Var tanh_fn(const Var& a) { return unary_map(OpKind::tanh_fn, a, [](double v) { return std::tanh(v); }); }
Var relu(const Var& a) { return unary_map(OpKind::relu_fn, a, [](double v) { return v > 0.0 ? v : 0.0; }); }
Var abs_fn(const Var& a) { return unary_map(OpKind::abs_fn, a, [](double v) { return std::fabs(v); }); }
Var exp_fn(const Var& a) { return unary_map(OpKind::exp_fn, a, [](double v) { return std::exp(v); }); }
Var log_fn(const Var& a) { return unary_map(OpKind::log_fn, a, [](double v) { return std::log(v); }); }

Var embedding_gather(const Var& table, const std::vector<int>& ids) {
    check_rank2(table, "embedding_gather");
    const int n = table.val().shape[0], d = table.val().shape[1];
    Tensor out = Tensor::zeros({static_cast<int>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= n) {
            throw std::invalid_argument("embedding_gather: index out of range");
        }
        const double* src = table.val().values.data() + static_cast<size_t>(ids[i]) * d;
        std::copy(src, src + d, out.values.data() + i * d);
    }
    Var r = result(OpKind::embedding_gather, {table.node()}, std::move(out));
    r.node()->int_args = ids;
    return r;
}

Var row_scatter(const Var& rows, const std::vector<int>& ids, int out_rows) {
    check_rank2(rows, "row_scatter");
    const int k = rows.val().shape[0], d = rows.val().shape[1];
    if (static_cast<size_t>(k) != ids.size()) {
        throw std::invalid_argument("row_scatter: id count mismatch");
    }
    Tensor out = Tensor::zeros({out_rows, d});
    for (int i = 0; i < k; ++i) {
        if (ids[i] < 0 || ids[i] >= out_rows) {
            throw std::invalid_argument("row_scatter: index out of range");
        }
        const double* src = rows.val().values.data() + static_cast<size_t>(i) * d;
        double* dst = out.values.data() + static_cast<size_t>(ids[i]) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
    Var r = result(OpKind::row_scatter, {rows.node()}, std::move(out));
    r.node()->int_args = ids;
    r.node()->int_args.push_back(out_rows);
    return r;
}

Var slice(const Var& a, int r0, int nr, int c0, int nc) {
    check_rank2(a, "slice");
    const int n = a.val().shape[0], m = a.val().shape[1];
    if (r0 < 0 || c0 < 0 || nr <= 0 || nc <= 0 || r0 + nr > n || c0 + nc > m) {
        throw std::invalid_argument("slice: bounds out of range");
    }
    Tensor out = Tensor::zeros({nr, nc});
    for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nc; ++j) out.at(i, j) = a.val().at(r0 + i, c0 + j);
    Var r = result(OpKind::slice, {a.node()}, std::move(out));
    r.node()->int_args = {r0, nr, c0, nc, n, m};
    return r;
}

Var pad(const Var& a, int out_rows, int out_cols, int r0, int c0) {
    check_rank2(a, "pad");
    const int n = a.val().shape[0], m = a.val().shape[1];
    if (r0 < 0 || c0 < 0 || r0 + n > out_rows || c0 + m > out_cols) {
        throw std::invalid_argument("pad: bounds out of range");
    }
    Tensor out = Tensor::zeros({out_rows, out_cols});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(r0 + i, c0 + j) = a.val().at(i, j);
    Var r = result(OpKind::pad, {a.node()}, std::move(out));
    r.node()->int_args = {out_rows, out_cols, r0, c0, n, m};
    return r;
}

Var sum_all(const Var& a) {
    double s = 0.0;
    for (double v : a.val().values) s += v;
    return result(OpKind::sum_all, {a.node()}, Tensor::scalar(s));
}

Var mean_all(const Var& a) {
    double s = 0.0;
    for (double v : a.val().values) s += v;
    Var r = result(OpKind::mean_all, {a.node()}, Tensor::scalar(s / static_cast<double>(a.val().numel())));
    r.node()->scalar_arg = static_cast<double>(a.val().numel());
    return r;
}

Var row_sum(const Var& a) {
    check_rank2(a, "row_sum");
    const int n = a.val().shape[0], m = a.val().shape[1];
    Tensor out = Tensor::zeros({n, 1});
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += a.val().at(i, j);
        out.at(i, 0) = s;
    }
    Var r = result(OpKind::row_sum, {a.node()}, std::move(out));
    r.node()->int_args = {m};
    return r;
}

Var col_sum(const Var& a) {
    check_rank2(a, "col_sum");
    const int n = a.val().shape[0], m = a.val().shape[1];
    Tensor out = Tensor::zeros({1, m});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(0, j) += a.val().at(i, j);
    Var r = result(OpKind::col_sum, {a.node()}, std::move(out));
    r.node()->int_args = {n};
    return r;
}

Var bcast_row(const Var& a, int n_rows) {
    check_rank2(a, "bcast_row");
    if (a.val().shape[0] != 1) throw std::invalid_argument("bcast_row: expected (1,m)");
    const int m = a.val().shape[1];
    Tensor out = Tensor::zeros({n_rows, m});
    for (int i = 0; i < n_rows; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) = a.val().at(0, j);
    return result(OpKind::bcast_row, {a.node()}, std::move(out));
}

Var bcast_col(const Var& a, int n_cols) {
    check_rank2(a, "bcast_col");
    if (a.val().shape[1] != 1) throw std::invalid_argument("bcast_col: expected (n,1)");
    const int n = a.val().shape[0];
    Tensor out = Tensor::zeros({n, n_cols});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n_cols; ++j) out.at(i, j) = a.val().at(i, 0);
    return result(OpKind::bcast_col, {a.node()}, std::move(out));
}

Var bcast_scalar(const Var& a, std::vector<int> shape) {
    if (a.val().numel() != 1) throw std::invalid_argument("bcast_scalar: expected scalar");
    Tensor out = Tensor::full(shape, a.val().values[0]);
    return result(OpKind::bcast_scalar, {a.node()}, std::move(out));
}

// ---------------------------------------------------------------------------
// composed helpers
// ---------------------------------------------------------------------------

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
    check_rank2(x, "layer_norm_rows");
    const int n = x.val().shape[0], m = x.val().shape[1];
    Var mu = scale(row_sum(x), 1.0 / m);
    Var centered = sub(x, bcast_col(mu, m));
    Var var = scale(row_sum(mul(centered, centered)), 1.0 / m);
    Var inv_std = pow_const(add_const(var, eps), -0.5);
    Var normalized = mul(centered, bcast_col(inv_std, m));
    return add(mul(normalized, bcast_row(gain, n)), bcast_row(bias, n));
}

Var l2_normalize(const Var& x) {
    Var sq = sum_all(mul(x, x));
    if (sq.item() == 0.0) {
        return Var::constant(Tensor::zeros(x.shape()));
    }
    Var inv_norm = pow_const(sq, -0.5);
    return mul(x, bcast_scalar(inv_norm, x.shape()));
}

Var log_softmax_row(const Var& logits) {
    check_rank2(logits, "log_softmax_row");
    if (logits.val().shape[0] != 1) throw std::invalid_argument("log_softmax_row: expected (1,C)");
    double mx = logits.val().values[0];
    for (double v : logits.val().values) mx = std::max(mx, v);
    Var shifted = add_const(logits, -mx);  // max shift is constant w.r.t. grad
    Var lse = log_fn(sum_all(exp_fn(shifted)));
    return sub(shifted, bcast_scalar(lse, logits.shape()));
}

Var cross_entropy(const Var& logits, int label) {
    const int c = logits.val().shape[1];
    if (label < 0 || label >= c) throw std::invalid_argument("cross_entropy: label out of range");
    Var lsm = log_softmax_row(logits);
    return neg(reshape(slice(lsm, 0, 1, label, 1), {}));
}

Var mean_abs_error(const Var& a, const Var& b) {
    check_same_shape(a, b, "mean_abs_error");
    return mean_all(abs_fn(sub(a, b)));
}

// ---------------------------------------------------------------------------
// backward rules (each expressed through graph ops, keeping gradients
// differentiable)
// ---------------------------------------------------------------------------

namespace {

using GradMap = std::unordered_map<Node*, Var>;

void accumulate(GradMap& gm, const NodePtr& target, const Var& contrib) {
    if (!target->requires_grad) return;
    auto it = gm.find(target.get());
    if (it == gm.end()) {
        gm.emplace(target.get(), contrib);
    } else {
        it->second = add(it->second, contrib);
    }
}

Tensor sign_tensor(const Tensor& t) {
    Tensor s = Tensor::zeros(t.shape);
    for (size_t i = 0; i < t.values.size(); ++i) {
        s.values[i] = t.values[i] > 0.0 ? 1.0 : (t.values[i] < 0.0 ? -1.0 : 0.0);
    }
    return s;
}

Tensor relu_mask(const Tensor& t) {
    Tensor s = Tensor::zeros(t.shape);
    for (size_t i = 0; i < t.values.size(); ++i) s.values[i] = t.values[i] > 0.0 ? 1.0 : 0.0;
    return s;
}

void backward_node(const NodePtr& n, const Var& g, GradMap& gm) {
    const Var self(n);
    switch (n->op) {
        case OpKind::leaf:
            break;
        case OpKind::add:
            accumulate(gm, n->parents[0], g);
            accumulate(gm, n->parents[1], g);
            break;
        case OpKind::sub:
            accumulate(gm, n->parents[0], g);
            accumulate(gm, n->parents[1], neg(g));
            break;
        case OpKind::mul:
            accumulate(gm, n->parents[0], mul(g, Var(n->parents[1])));
            accumulate(gm, n->parents[1], mul(g, Var(n->parents[0])));
            break;
        case OpKind::scale:
            accumulate(gm, n->parents[0], scale(g, n->scalar_arg));
            break;
        case OpKind::add_const:
            accumulate(gm, n->parents[0], g);
            break;
        case OpKind::pow_const: {
            const double p = n->scalar_arg;
            Var d = scale(mul(g, pow_const(Var(n->parents[0]), p - 1.0)), p);
            accumulate(gm, n->parents[0], d);
            break;
        }
        case OpKind::matmul:
            accumulate(gm, n->parents[0], matmul(g, transpose(Var(n->parents[1]))));
            accumulate(gm, n->parents[1], matmul(transpose(Var(n->parents[0])), g));
            break;
        case OpKind::transpose:
            accumulate(gm, n->parents[0], transpose(g));
            break;
        case OpKind::reshape:
            accumulate(gm, n->parents[0], reshape(g, n->parents[0]->value.shape));
            break;
        case OpKind::softmax_rows: {
            // dx = y * (g - rowsum(g*y))
            const int m = n->value.shape[1];
            Var gy = mul(g, self);
            Var corr = bcast_col(row_sum(gy), m);
            accumulate(gm, n->parents[0], mul(self, sub(g, corr)));
            break;
        }
        case OpKind::tanh_fn: {
            Var one_minus_sq = add_const(neg(mul(self, self)), 1.0);
            accumulate(gm, n->parents[0], mul(g, one_minus_sq));
            break;
        }
        case OpKind::relu_fn:
            accumulate(gm, n->parents[0], mul(g, Var::constant(relu_mask(n->parents[0]->value))));
            break;
        case OpKind::abs_fn:
            accumulate(gm, n->parents[0], mul(g, Var::constant(sign_tensor(n->parents[0]->value))));
            break;
        case OpKind::exp_fn:
            accumulate(gm, n->parents[0], mul(g, self));
            break;
        case OpKind::log_fn:
            accumulate(gm, n->parents[0], mul(g, pow_const(Var(n->parents[0]), -1.0)));
            break;
        case OpKind::embedding_gather: {
            const int rows = n->parents[0]->value.shape[0];
            accumulate(gm, n->parents[0], row_scatter(g, n->int_args, rows));
            break;
        }
        case OpKind::row_scatter: {
            std::vector<int> ids(n->int_args.begin(), n->int_args.end() - 1);
            accumulate(gm, n->parents[0], embedding_gather(g, ids));
            break;
        }
        case OpKind::slice: {
            const auto& a = n->int_args;  // r0, nr, c0, nc, n, m
            accumulate(gm, n->parents[0], pad(g, a[4], a[5], a[0], a[2]));
            break;
        }
        case OpKind::pad: {
            const auto& a = n->int_args;  // out_rows, out_cols, r0, c0, n, m
            accumulate(gm, n->parents[0], slice(g, a[2], a[4], a[3], a[5]));
            break;
        }
        case OpKind::sum_all:
            accumulate(gm, n->parents[0], bcast_scalar(g, n->parents[0]->value.shape));
            break;
        case OpKind::mean_all:
            accumulate(gm, n->parents[0],
                       bcast_scalar(scale(g, 1.0 / n->scalar_arg), n->parents[0]->value.shape));
            break;
        case OpKind::row_sum:
            accumulate(gm, n->parents[0], bcast_col(g, n->int_args[0]));
            break;
        case OpKind::col_sum:
            accumulate(gm, n->parents[0], bcast_row(g, n->int_args[0]));
            break;
        case OpKind::bcast_row:
            accumulate(gm, n->parents[0], col_sum(g));
            break;
        case OpKind::bcast_col:
            accumulate(gm, n->parents[0], row_sum(g));
            break;
        case OpKind::bcast_scalar:
            accumulate(gm, n->parents[0], sum_all(g));
            break;
    }
}

// Deterministic reverse topological order over the requires_grad subgraph.
std::vector<NodePtr> topo_order(const NodePtr& root) {
    std::vector<NodePtr> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        NodePtr node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    if (!root->requires_grad) return order;
    stack.push_back({root, 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        bool descended = false;
        while (f.next_parent < f.node->parents.size()) {
            const NodePtr& p = f.node->parents[f.next_parent++];
            if (p->requires_grad && !visited.count(p.get())) {
                visited.insert(p.get());
                stack.push_back({p, 0});
                descended = true;
                break;
            }
        }
        if (!descended && f.next_parent >= f.node->parents.size()) {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    return order;  // postorder: parents before children
}

}  // namespace

std::vector<Var> gradient_vars(const Var& loss, const std::vector<Var>& wrt) {
    if (!loss.defined()) throw std::invalid_argument("gradient: undefined loss");
    if (loss.val().numel() != 1) {
        throw std::invalid_argument("gradient: loss must be scalar, got " + loss.val().shape_str());
    }
    for (const Var& w : wrt) {
        if (!w.defined() || !w.requires_grad()) {
            throw std::invalid_argument("gradient: wrt entry does not require grad");
        }
    }

    GradMap gm;
    if (loss.requires_grad()) {
        std::vector<NodePtr> order = topo_order(loss.node());
        gm.emplace(loss.node().get(), Var::constant(Tensor::full(loss.shape(), 1.0)));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            auto found = gm.find(it->get());
            if (found == gm.end()) continue;  // not on a path from the loss
            backward_node(*it, found->second, gm);
        }
    }

    std::vector<Var> grads;
    grads.reserve(wrt.size());
    for (const Var& w : wrt) {
        auto it = gm.find(w.node().get());
        if (it == gm.end()) {
            grads.push_back(Var::constant(Tensor::zeros(w.shape())));
        } else {
            grads.push_back(it->second);
        }
        grads.back().node()->from_backward = true;
    }
    return grads;
}

std::vector<Tensor> gradient(const Var& loss, const std::vector<Var>& wrt) {
    std::vector<Var> gv = gradient_vars(loss, wrt);
    std::vector<Tensor> out;
    out.reserve(gv.size());
    for (const Var& g : gv) out.push_back(g.detached());
    return out;
}

namespace {

bool reaches_backward_node(const NodePtr& root) {
    std::vector<Node*> stack{root.get()};
    std::unordered_set<Node*> visited{root.get()};
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (n->from_backward) return true;
        for (const auto& p : n->parents) {
            if (visited.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    return false;
}

}  // namespace

std::vector<Tensor> second_order_gradient(const Var& scalar, const std::vector<Var>& wrt) {
    if (!scalar.defined()) throw std::invalid_argument("second_order_gradient: undefined scalar");
    if (!scalar.requires_grad() && !reaches_backward_node(scalar.node())) {
        // A constant scalar built through gradient_vars output is a genuine
        // zero-Hessian case; anything else means the first pass was detached.
        throw std::invalid_argument(
            "second_order_gradient: the first-order pass was not recorded differentiably");
    }
    return gradient(scalar, wrt);
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

FiniteDiffReport finite_difference_check(const std::function<Var()>& loss_builder,
                                         const std::vector<Var>& params,
                                         double h, double tol,
                                         const std::vector<std::string>& names,
                                         int max_coords_per_param) {
    FiniteDiffReport report;
    report.pass = true;

    Var loss = loss_builder();
    std::vector<Tensor> grads = gradient(loss, params);

    for (size_t pi = 0; pi < params.size(); ++pi) {
        FiniteDiffEntry entry;
        entry.name = pi < names.size() ? names[pi] : ("param[" + std::to_string(pi) + "]");
        entry.pass = true;

        std::vector<double>& vals = params[pi].node()->value.values;
        const size_t n = vals.size();
        size_t stride = 1;
        if (max_coords_per_param > 0 && n > static_cast<size_t>(max_coords_per_param)) {
            stride = (n + max_coords_per_param - 1) / max_coords_per_param;
        }
        for (size_t i = 0; i < n; i += stride) {
            const double orig = vals[i];
            vals[i] = orig + h;
            const double up = loss_builder().item();
            vals[i] = orig - h;
            const double down = loss_builder().item();
            vals[i] = orig;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                entry.nonfinite = true;
                entry.pass = false;
                continue;
            }
            const double fd = (up - down) / (2.0 * h);
            const double adg = grads[pi].values[i];
            const double denom = std::max({std::fabs(fd), std::fabs(adg), 1e-6});
            const double rel = std::fabs(fd - adg) / denom;
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        if (entry.max_rel_err >= tol) entry.pass = false;
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        if (!entry.pass) report.pass = false;
        report.params.push_back(std::move(entry));
    }
    return report;
}

}  // namespace erlab::ad
