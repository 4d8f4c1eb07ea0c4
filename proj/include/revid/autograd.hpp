#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "revid/errors.hpp"
#include "revid/tensor.hpp"

namespace revid::nn {

using revid::Tensor;

// Graph construction is skipped entirely while grad mode is off, so
// inference carries no tape.
inline bool& grad_mode() {
    thread_local bool on = true;
    return on;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
};

template <typename Real>
struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_op;

    void ensure_grad() {
        if (grad.shape != value.shape) grad = Tensor<Real>(value.shape);
    }
    void zero_grad() {
        ensure_grad();
        grad.fill(Real(0));
    }
};

template <typename Real>
using Var = std::shared_ptr<Node<Real>>;

template <typename Real>
Var<Real> make_leaf(Tensor<Real> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad && grad_mode();
    return n;
}

template <typename Real>
Var<Real> make_param(Tensor<Real> value) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    n->requires_grad = true; // params stay differentiable regardless of mode
    return n;
}

template <typename Real>
Var<Real> constant(Tensor<Real> value) {
    return make_leaf(std::move(value), false);
}

// Wires value + parents + backward closure into a node. When grad mode is
// off (or no parent needs gradients) the parents and closure are dropped.
template <typename Real>
Var<Real> make_op(Tensor<Real> value, std::vector<Var<Real>> parents,
                  std::function<void(Node<Real>&)> backward) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    bool need = false;
    if (grad_mode())
        for (const auto& p : parents)
            if (p->requires_grad) { need = true; break; }
    if (need) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        Node<Real>* raw = n.get();
        n->backward_op = [raw, fn = std::move(backward)]() { fn(*raw); };
    }
    return n;
}

// Reverse-mode sweep from a scalar root. Iterative DFS; graphs are deep
// (a UNet forward) so recursion is avoided.
template <typename Real>
void backward(const Var<Real>& root) {
    if (root->value.numel() != 1)
        throw InputError("backward: root must be scalar, got " + shape_str(root->value));
    if (!root->requires_grad) return;

    std::vector<Node<Real>*> order;
    std::unordered_set<Node<Real>*> seen;
    struct Frame {
        Node<Real>* n;
        size_t next;
    };
    std::vector<Frame> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node<Real>* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_op) (*it)->backward_op();
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor<Real> v(a->value.shape);
    for (long i = 0; i < v.numel(); ++i) v[i] = a->value[i] + b->value[i];
    return make_op<Real>(std::move(v), {a, b}, [a, b](Node<Real>& out) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (long i = 0; i < out.grad.numel(); ++i) a->grad[i] += out.grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (long i = 0; i < out.grad.numel(); ++i) b->grad[i] += out.grad[i];
        }
    });
}

template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor<Real> v(a->value.shape);
    for (long i = 0; i < v.numel(); ++i) v[i] = a->value[i] * b->value[i];
    return make_op<Real>(std::move(v), {a, b}, [a, b](Node<Real>& out) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (long i = 0; i < out.grad.numel(); ++i) a->grad[i] += out.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (long i = 0; i < out.grad.numel(); ++i) b->grad[i] += out.grad[i] * a->value[i];
        }
    });
}

template <typename Real>
Var<Real> scale(const Var<Real>& a, Real c) {
    Tensor<Real> v(a->value.shape);
    for (long i = 0; i < v.numel(); ++i) v[i] = c * a->value[i];
    return make_op<Real>(std::move(v), {a}, [a, c](Node<Real>& out) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (long i = 0; i < out.grad.numel(); ++i) a->grad[i] += c * out.grad[i];
    });
}

template <typename Real>
Var<Real> silu(const Var<Real>& a) {
    Tensor<Real> v(a->value.shape);
    for (long i = 0; i < v.numel(); ++i) {
        Real x = a->value[i];
        v[i] = x / (Real(1) + std::exp(-x));
    }
    return make_op<Real>(std::move(v), {a}, [a](Node<Real>& out) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (long i = 0; i < out.grad.numel(); ++i) {
            Real x = a->value[i];
            Real s = Real(1) / (Real(1) + std::exp(-x));
            a->grad[i] += out.grad[i] * s * (Real(1) + x * (Real(1) - s));
        }
    });
}

template <typename Real>
Var<Real> mean_all(const Var<Real>& a) {
    Tensor<Real> v({1});
    Real acc = 0;
    for (long i = 0; i < a->value.numel(); ++i) acc += a->value[i];
    const Real inv = Real(1) / static_cast<Real>(a->value.numel());
    v[0] = acc * inv;
    return make_op<Real>(std::move(v), {a}, [a, inv](Node<Real>& out) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const Real g = out.grad[0] * inv;
        for (long i = 0; i < a->grad.numel(); ++i) a->grad[i] += g;
    });
}

// Mean squared error against a fixed target tensor.
template <typename Real>
Var<Real> mse_loss(const Var<Real>& pred, const Tensor<Real>& target) {
    require_same_shape(pred->value, target, "mse_loss");
    Tensor<Real> v({1});
    Real acc = 0;
    for (long i = 0; i < target.numel(); ++i) {
        Real d = pred->value[i] - target[i];
        acc += d * d;
    }
    const Real inv = Real(1) / static_cast<Real>(target.numel());
    v[0] = acc * inv;
    return make_op<Real>(std::move(v), {pred}, [pred, target, inv](Node<Real>& out) {
        if (!pred->requires_grad) return;
        pred->ensure_grad();
        const Real g = Real(2) * inv * out.grad[0];
        for (long i = 0; i < target.numel(); ++i)
            pred->grad[i] += g * (pred->value[i] - target[i]);
    });
}

} // namespace revid::nn
