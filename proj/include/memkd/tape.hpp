#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "memkd/tensor.hpp"

namespace memkd {

/// Named parameter collection. std::map keeps iteration order stable.
using ParamSet = std::map<std::string, Tensor>;
using GradSet = std::map<std::string, Tensor>;

class Tape;

/// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;
};

namespace detail {
using EMat = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CEMat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline CEMat as_mat(const Tensor& t, std::size_t r, std::size_t c) { return CEMat(t.data(), r, c); }
inline EMat as_mat(Tensor& t, std::size_t r, std::size_t c) { return EMat(t.data(), r, c); }
}  // namespace detail

/// Recorded computation: a topologically ordered list of primitive
/// applications. One backward sweep visits each node exactly once.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Tracked input (a parameter): gradients flow into it.
    Var leaf(Tensor v) { return push(std::move(v), true, nullptr); }

    /// Untracked input: no gradient is accumulated into it or through it.
    Var constant(Tensor v) { return push(std::move(v), false, nullptr); }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }

    std::size_t size() const { return nodes_.size(); }

    /// Number of nodes visited by the most recent backward sweep.
    std::size_t last_visit_count() const { return last_visits_; }

    /// Reverse sweep from a scalar root. Returns d(root)/d(leaf) for every
    /// named leaf; leaves the root never touched get zero gradients.
    GradSet backward(Var root, const std::map<std::string, Var>& params) {
        if (!nodes_[root.id].value.is_scalar())
            throw ValueError("backward root must be scalar, got shape " +
                             shape_str(nodes_[root.id].value.shape()));
        for (auto& n : nodes_) n.grad = Tensor();
        grad_ref(root.id)[0] = 1.0;
        last_visits_ = 0;
        for (std::size_t i = root.id + 1; i-- > 0;) {
            ++last_visits_;
            Node& n = nodes_[i];
            if (n.backward && n.tracked && n.grad.numel() > 0) n.backward(*this);
        }
        GradSet out;
        for (const auto& [name, var] : params) {
            const Node& n = nodes_[var.id];
            out[name] = n.grad.numel() > 0 ? n.grad : Tensor::zeros(n.value.shape());
        }
        return out;
    }

    // --- internals used by the primitive ops ---

    bool tracked(std::size_t id) const { return nodes_[id].tracked; }

    Tensor& grad_ref(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape());
        return n.grad;
    }

    /// Accumulate into a node's gradient, skipping untracked nodes.
    void accumulate(std::size_t id, const Tensor& delta) {
        if (!nodes_[id].tracked) return;
        Tensor& g = grad_ref(id);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += delta[i];
    }

    template <typename Fn>
    void accumulate_fn(std::size_t id, std::size_t numel, Fn&& fn) {
        if (!nodes_[id].tracked) return;
        Tensor& g = grad_ref(id);
        for (std::size_t i = 0; i < numel; ++i) g[i] += fn(i);
    }

    Var push(Tensor value, bool tracked, std::function<void(Tape&)> backward) {
        if (!value.all_finite())
            throw ValueError("non-finite value produced at tape node " + std::to_string(nodes_.size()));
        nodes_.push_back(Node{std::move(value), Tensor(), std::move(backward), tracked});
        return Var{this, nodes_.size() - 1};
    }

    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> backward;
        bool tracked;
    };

    const Node& node(std::size_t id) const { return nodes_[id]; }

private:
    std::vector<Node> nodes_;
    std::size_t last_visits_ = 0;
};

namespace detail {
inline Tape& same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape) throw ValueError(std::string(op) + ": vars from different tapes");
    return *a.tape;
}
}  // namespace detail

// ---- elementwise primitives ----

inline Var add(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "add");
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    require_same_shape(va, vb, "add");
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] + vb[i];
    bool tracked = t.tracked(a.id) || t.tracked(b.id);
    std::size_t self = t.size();
    return t.push(std::move(out), tracked, [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        tp.accumulate(a.id, g);
        tp.accumulate(b.id, g);
    });
}

inline Var sub(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "sub");
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    require_same_shape(va, vb, "sub");
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] - vb[i];
    bool tracked = t.tracked(a.id) || t.tracked(b.id);
    std::size_t self = t.size();
    return t.push(std::move(out), tracked, [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        tp.accumulate(a.id, g);
        tp.accumulate_fn(b.id, g.numel(), [&](std::size_t i) { return -g[i]; });
    });
}

inline Var hadamard(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "hadamard");
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    require_same_shape(va, vb, "hadamard");
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] * vb[i];
    bool tracked = t.tracked(a.id) || t.tracked(b.id);
    std::size_t self = t.size();
    return t.push(std::move(out), tracked, [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& xa = tp.value(a);
        const Tensor& xb = tp.value(b);
        tp.accumulate_fn(a.id, g.numel(), [&](std::size_t i) { return g[i] * xb[i]; });
        tp.accumulate_fn(b.id, g.numel(), [&](std::size_t i) { return g[i] * xa[i]; });
    });
}

inline Var div_elem(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "div");
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    require_same_shape(va, vb, "div");
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] / vb[i];
    bool tracked = t.tracked(a.id) || t.tracked(b.id);
    std::size_t self = t.size();
    return t.push(std::move(out), tracked, [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& xa = tp.value(a);
        const Tensor& xb = tp.value(b);
        tp.accumulate_fn(a.id, g.numel(), [&](std::size_t i) { return g[i] / xb[i]; });
        tp.accumulate_fn(b.id, g.numel(),
                         [&](std::size_t i) { return -g[i] * xa[i] / (xb[i] * xb[i]); });
    });
}

inline Var scale(Var a, double c) {
    Tape& t = *a.tape;
    const Tensor& va = t.value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * va[i];
    std::size_t self = t.size();
    return t.push(std::move(out), t.tracked(a.id), [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        tp.accumulate_fn(a.id, g.numel(), [&](std::size_t i) { return c * g[i]; });
    });
}

inline Var add_const(Var a, double c) {
    Tape& t = *a.tape;
    const Tensor& va = t.value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] + c;
    std::size_t self = t.size();
    return t.push(std::move(out), t.tracked(a.id),
                  [=](Tape& tp) { tp.accumulate(a.id, tp.grad_ref(self)); });
}

inline Var sigmoid(Var a) {
    Tape& t = *a.tape;
    const Tensor& va = t.value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-va[i]));
    std::size_t self = t.size();
    return t.push(std::move(out), t.tracked(a.id), [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& y = tp.value(Var{&tp, self});
        tp.accumulate_fn(a.id, g.numel(), [&](std::size_t i) { return g[i] * y[i] * (1.0 - y[i]); });
    });
}

inline Var tanh_op(Var a) {
    Tape& t = *a.tape;
    const Tensor& va = t.value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(va[i]);
    std::size_t self = t.size();
    return t.push(std::move(out), t.tracked(a.id), [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& y = tp.value(Var{&tp, self});
        tp.accumulate_fn(a.id, g.numel(), [&](std::size_t i) { return g[i] * (1.0 - y[i] * y[i]); });
    });
}

// ---- linear algebra ----

inline Var matmul(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "matmul");
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(va.shape()) + " x " +
                         shape_str(vb.shape()));
    std::size_t p = va.dim(0), q = va.dim(1), r = vb.dim(1);
    Tensor out({p, r});
    detail::as_mat(out, p, r).noalias() =
        detail::as_mat(va, p, q) * detail::as_mat(vb, q, r);
    bool tracked = t.tracked(a.id) || t.tracked(b.id);
    std::size_t self = t.size();
    return t.push(std::move(out), tracked, [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        auto gm = detail::as_mat(g, p, r);
        if (tp.tracked(a.id)) {
            Tensor da({p, q});
            detail::as_mat(da, p, q).noalias() = gm * detail::as_mat(tp.value(b), q, r).transpose();
            tp.accumulate(a.id, da);
        }
        if (tp.tracked(b.id)) {
            Tensor db({q, r});
            detail::as_mat(db, q, r).noalias() = detail::as_mat(tp.value(a), p, q).transpose() * gm;
            tp.accumulate(b.id, db);
        }
    });
}

/// y[b x m] = x[b x n] * W[m x n]^T (+ bias[m] broadcast over rows).
/// Weights keep the (out x in) layout used by the LSTM gate blocks.
inline Var linear(Var x, Var w) {
    Tape& t = detail::same_tape(x, w, "linear");
    const Tensor& vx = t.value(x);
    const Tensor& vw = t.value(w);
    if (vx.rank() != 2 || vw.rank() != 2 || vx.dim(1) != vw.dim(1))
        throw ShapeError("linear: incompatible shapes " + shape_str(vx.shape()) + " and W " +
                         shape_str(vw.shape()));
    std::size_t b = vx.dim(0), n = vx.dim(1), m = vw.dim(0);
    Tensor out({b, m});
    detail::as_mat(out, b, m).noalias() =
        detail::as_mat(vx, b, n) * detail::as_mat(vw, m, n).transpose();
    bool tracked = t.tracked(x.id) || t.tracked(w.id);
    std::size_t self = t.size();
    return t.push(std::move(out), tracked, [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        auto gm = detail::as_mat(g, b, m);
        if (tp.tracked(x.id)) {
            Tensor dx({b, n});
            detail::as_mat(dx, b, n).noalias() = gm * detail::as_mat(tp.value(w), m, n);
            tp.accumulate(x.id, dx);
        }
        if (tp.tracked(w.id)) {
            Tensor dw({m, n});
            detail::as_mat(dw, m, n).noalias() = gm.transpose() * detail::as_mat(tp.value(x), b, n);
            tp.accumulate(w.id, dw);
        }
    });
}

/// Row-broadcast bias add: mat[b x m] + bias[m].
inline Var add_bias(Var mat, Var bias) {
    Tape& t = detail::same_tape(mat, bias, "add_bias");
    const Tensor& vm = t.value(mat);
    const Tensor& vb = t.value(bias);
    if (vm.rank() != 2 || vb.numel() != vm.dim(1))
        throw ShapeError("add_bias: " + shape_str(vm.shape()) + " + " + shape_str(vb.shape()));
    std::size_t b = vm.dim(0), m = vm.dim(1);
    Tensor out({b, m});
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t c = 0; c < m; ++c) out.at(r, c) = vm.at(r, c) + vb[c];
    bool tracked = t.tracked(mat.id) || t.tracked(bias.id);
    std::size_t self = t.size();
    return t.push(std::move(out), tracked, [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        tp.accumulate(mat.id, g);
        if (tp.tracked(bias.id)) {
            Tensor db({m});
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t c = 0; c < m; ++c) db[c] += g[r * m + c];
            tp.accumulate(bias.id, db);
        }
    });
}

// ---- reductions ----

inline Var reduce_sum(Var a) {
    Tape& t = *a.tape;
    const Tensor& va = t.value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
    std::size_t self = t.size();
    return t.push(Tensor::scalar(s), t.tracked(a.id), [=](Tape& tp) {
        double g = tp.grad_ref(self)[0];
        tp.accumulate_fn(a.id, tp.value(a).numel(), [&](std::size_t) { return g; });
    });
}

inline Var reduce_mean(Var a) {
    std::size_t n = a.tape->value(a).numel();
    return scale(reduce_sum(a), 1.0 / static_cast<double>(n));
}

/// Euclidean norm over all entries. Gradient is a/|a|; defined as zero at the
/// zero vector (callers guard the denominator separately, see losses).
inline Var l2_norm(Var a) {
    Tape& t = *a.tape;
    const Tensor& va = t.value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < va.numel(); ++i) s += va[i] * va[i];
    double nrm = std::sqrt(s);
    std::size_t self = t.size();
    return t.push(Tensor::scalar(nrm), t.tracked(a.id), [=](Tape& tp) {
        double g = tp.grad_ref(self)[0];
        double y = tp.value(Var{&tp, self})[0];
        if (y == 0.0) return;
        const Tensor& x = tp.value(a);
        tp.accumulate_fn(a.id, x.numel(), [&](std::size_t i) { return g * x[i] / y; });
    });
}

/// Per-row Euclidean norm of a [b x m] matrix -> [b].
inline Var row_l2_norm(Var a) {
    Tape& t = *a.tape;
    const Tensor& va = t.value(a);
    if (va.rank() != 2) throw ShapeError("row_l2_norm: expected matrix, got " + shape_str(va.shape()));
    std::size_t b = va.dim(0), m = va.dim(1);
    Tensor out({b});
    for (std::size_t r = 0; r < b; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < m; ++c) s += va.at(r, c) * va.at(r, c);
        out[r] = std::sqrt(s);
    }
    std::size_t self = t.size();
    return t.push(std::move(out), t.tracked(a.id), [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& y = tp.value(Var{&tp, self});
        const Tensor& x = tp.value(a);
        tp.accumulate_fn(a.id, b * m, [&](std::size_t i) {
            std::size_t r = i / m;
            return y[r] == 0.0 ? 0.0 : g[r] * x[i] / y[r];
        });
    });
}

// ---- softmax / losses ----

namespace detail {
/// Stable row softmax of logits[b x C] into out (same shape).
inline void softmax_rows_kernel(const Tensor& logits, Tensor& out) {
    std::size_t b = logits.dim(0), C = logits.dim(1);
    for (std::size_t r = 0; r < b; ++r) {
        double mx = logits.at(r, 0);
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits.at(r, c));
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            double e = std::exp(logits.at(r, c) - mx);
            out.at(r, c) = e;
            sum += e;
        }
        for (std::size_t c = 0; c < C; ++c) out.at(r, c) /= sum;
    }
}
}  // namespace detail

inline Var softmax_rows(Var logits) {
    Tape& t = *logits.tape;
    const Tensor& v = t.value(logits);
    if (v.rank() != 2) throw ShapeError("softmax_rows: expected matrix, got " + shape_str(v.shape()));
    std::size_t b = v.dim(0), C = v.dim(1);
    Tensor out({b, C});
    detail::softmax_rows_kernel(v, out);
    std::size_t self = t.size();
    return t.push(std::move(out), t.tracked(logits.id), [=](Tape& tp) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& y = tp.value(Var{&tp, self});
        Tensor dx({b, C});
        for (std::size_t r = 0; r < b; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < C; ++c) dot += g.at(r, c) * y.at(r, c);
            for (std::size_t c = 0; c < C; ++c) dx.at(r, c) = y.at(r, c) * (g.at(r, c) - dot);
        }
        tp.accumulate(logits.id, dx);
    });
}

/// Mean cross-entropy of logits[b x C] against integer labels.
inline Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
    Tape& t = *logits.tape;
    const Tensor& v = t.value(logits);
    if (v.rank() != 2 || v.dim(0) != labels.size())
        throw ShapeError("cross_entropy: logits " + shape_str(v.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
    std::size_t b = v.dim(0), C = v.dim(1);
    for (int lab : labels)
        if (lab < 0 || static_cast<std::size_t>(lab) >= C)
            throw ValueError("cross_entropy: label " + std::to_string(lab) + " out of range [0," +
                             std::to_string(C) + ")");
    Tensor probs({b, C});
    detail::softmax_rows_kernel(v, probs);
    double loss = 0.0;
    for (std::size_t r = 0; r < b; ++r) loss -= std::log(probs.at(r, static_cast<std::size_t>(labels[r])));
    loss /= static_cast<double>(b);
    std::size_t self = t.size();
    return t.push(Tensor::scalar(loss), t.tracked(logits.id), [=, probs = std::move(probs)](Tape& tp) {
        double g = tp.grad_ref(self)[0];
        Tensor dx({b, C});
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t c = 0; c < C; ++c) {
                double y = (static_cast<std::size_t>(labels[r]) == c) ? 1.0 : 0.0;
                dx.at(r, c) = g * (probs.at(r, c) - y) / static_cast<double>(b);
            }
        tp.accumulate(logits.id, dx);
    });
}

/// Hinton soft-target loss: tau^2 * mean_b KL(softmax(t/tau) || softmax(s/tau)).
/// Teacher logits are plain data; gradient reaches the student only.
inline Var kd_soft_targets(const Tensor& teacher_logits, Var student_logits, double tau) {
    Tape& t = *student_logits.tape;
    const Tensor& s = t.value(student_logits);
    require_same_shape(teacher_logits, s, "kd_soft_targets");
    if (tau <= 0.0) throw ValueError("kd_soft_targets: tau must be positive");
    std::size_t b = s.dim(0), C = s.dim(1);
    Tensor ts({b, C}), ss({b, C});
    for (std::size_t i = 0; i < b * C; ++i) {
        ts[i] = teacher_logits[i] / tau;
        ss[i] = s[i] / tau;
    }
    Tensor pt({b, C}), ps({b, C});
    detail::softmax_rows_kernel(ts, pt);
    detail::softmax_rows_kernel(ss, ps);
    double kl = 0.0;
    for (std::size_t i = 0; i < b * C; ++i)
        if (pt[i] > 0.0) kl += pt[i] * (std::log(pt[i]) - std::log(ps[i]));
    double loss = tau * tau * kl / static_cast<double>(b);
    std::size_t self = t.size();
    return t.push(Tensor::scalar(loss), t.tracked(student_logits.id),
                  [=, pt = std::move(pt), ps = std::move(ps)](Tape& tp) {
                      double g = tp.grad_ref(self)[0];
                      Tensor dx({b, C});
                      for (std::size_t i = 0; i < b * C; ++i)
                          dx[i] = g * tau * (ps[i] - pt[i]) / static_cast<double>(b);
                      tp.accumulate(student_logits.id, dx);
                  });
}

/// Mean squared error against constant target, over all entries.
inline Var mse_against(Var pred, const Tensor& target) {
    Tape& t = *pred.tape;
    const Tensor& p = t.value(pred);
    require_same_shape(p, target, "mse");
    double s = 0.0;
    std::size_t n = p.numel();
    for (std::size_t i = 0; i < n; ++i) {
        double d = p[i] - target[i];
        s += d * d;
    }
    std::size_t self = t.size();
    return t.push(Tensor::scalar(s / static_cast<double>(n)), t.tracked(pred.id),
                  [=, target = target](Tape& tp) {
        double g = tp.grad_ref(self)[0];
        const Tensor& x = tp.value(pred);
        tp.accumulate_fn(pred.id, n, [&](std::size_t i) {
            return g * 2.0 * (x[i] - target[i]) / static_cast<double>(n);
        });
    });
}

namespace detail {
/// Smooth-L1 kernel: 0.5 x^2 / delta inside |x| < delta, |x| - 0.5 delta outside.
inline double huber(double x, double delta) {
    double ax = std::abs(x);
    return ax < delta ? 0.5 * x * x / delta : ax - 0.5 * delta;
}
inline double huber_grad(double x, double delta) {
    if (x > delta) return 1.0;
    if (x < -delta) return -1.0;
    return x / delta;
}
}  // namespace detail

/// Sum of smooth-L1 penalties of (pred - target) entries.
inline Var huber_sum(Var pred, const Tensor& target, double delta) {
    Tape& t = *pred.tape;
    const Tensor& p = t.value(pred);
    require_same_shape(p, target, "huber_sum");
    if (delta <= 0.0) throw ValueError("huber_sum: delta must be positive");
    double s = 0.0;
    std::size_t n = p.numel();
    Tensor diff(p.shape());
    for (std::size_t i = 0; i < n; ++i) {
        diff[i] = p[i] - target[i];
        s += detail::huber(diff[i], delta);
    }
    std::size_t self = t.size();
    return t.push(Tensor::scalar(s), t.tracked(pred.id), [=, diff = std::move(diff)](Tape& tp) {
        double g = tp.grad_ref(self)[0];
        tp.accumulate_fn(pred.id, n,
                         [&](std::size_t i) { return g * detail::huber_grad(diff[i], delta); });
    });
}

/// Register a named parameter set on the tape, tracked (leaves) or not.
inline std::map<std::string, Var> bind_params(Tape& tape, const ParamSet& params, bool tracked = true) {
    std::map<std::string, Var> out;
    for (const auto& [name, t] : params) out[name] = tracked ? tape.leaf(t) : tape.constant(t);
    return out;
}

/// Norm-ratio relative error between two gradient sets, max over tensors.
inline double grad_rel_error(const GradSet& a, const GradSet& b) {
    double worst = 0.0;
    for (const auto& [name, ga] : a) {
        const Tensor& gb = b.at(name);
        double dn = 0.0, an = 0.0, bn = 0.0;
        for (std::size_t i = 0; i < ga.numel(); ++i) {
            double d = ga[i] - gb[i];
            dn += d * d;
            an += ga[i] * ga[i];
            bn += gb[i] * gb[i];
        }
        double rel = std::sqrt(dn) / (std::sqrt(an) + std::sqrt(bn) + 1e-12);
        worst = std::max(worst, rel);
    }
    return worst;
}

// ---- finite-difference oracle ----

/// Central differences (f(p+h e_i) - f(p-h e_i)) / 2h per coordinate.
template <typename LossFn>
GradSet finite_difference_gradient(LossFn&& loss_fn, const ParamSet& params, double step) {
    if (step <= 0.0) throw ValueError("finite_difference_gradient: step must be positive");
    GradSet out;
    ParamSet work = params;
    for (auto& [name, tensor] : work) {
        Tensor grad(tensor.shape());
        for (std::size_t i = 0; i < tensor.numel(); ++i) {
            double orig = tensor[i];
            tensor[i] = orig + step;
            double fp = loss_fn(work);
            tensor[i] = orig - step;
            double fm = loss_fn(work);
            tensor[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw ValueError("finite_difference_gradient: non-finite loss at " + name + "[" +
                                 std::to_string(i) + "]");
            grad[i] = (fp - fm) / (2.0 * step);
        }
        out[name] = std::move(grad);
    }
    return out;
}

}  // namespace memkd
