#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "icdit/error.hpp"
#include "icdit/rng.hpp"

namespace icdit {

// Reverse-mode tensor engine. Tensors are immutable values once produced by
// an op; each op optionally records its parents and a backprop closure so
// backward() can replay the graph in reverse creation order. The production
// dtype is float; the double instantiation exists so finite-difference
// oracles can evaluate the same graph at higher precision.

namespace detail {

inline std::atomic<uint64_t>& node_counter() {
    static std::atomic<uint64_t> c{0};
    return c;
}

}  // namespace detail

struct grad_mode {
    static bool& enabled() {
        thread_local bool on = true;
        return on;
    }
};

// RAII guard that disables graph recording (sampling / evaluation paths).
struct no_grad_scope {
    bool prev;
    no_grad_scope() : prev(grad_mode::enabled()) { grad_mode::enabled() = false; }
    ~no_grad_scope() { grad_mode::enabled() = prev; }
};

template <class T>
struct NodeT {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated on demand during backward
    bool requires_grad = false;
    uint64_t id = 0;
    std::vector<std::shared_ptr<NodeT<T>>> parents;
    // Reads this->grad and accumulates into parents' grad buffers.
    std::function<void(NodeT<T>&)> backprop;

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) {
            n *= d;
        }
        return n;
    }

    void ensure_grad() {
        if (grad.empty()) {
            grad.assign(value.size(), T(0));
        }
    }
};

template <class T>
class TensorT {
public:
    using value_type = T;

    TensorT() = default;

    static TensorT from(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
        int64_t n = 1;
        for (int d : shape) {
            require(d > 0, errc::invalid_argument, "tensor extents must be positive");
            n *= d;
        }
        require(n == static_cast<int64_t>(data.size()), errc::shape_mismatch,
                "tensor data length does not match shape");
        auto node = std::make_shared<NodeT<T>>();
        node->shape = std::move(shape);
        node->value = std::move(data);
        node->requires_grad = requires_grad;
        node->id = detail::node_counter()++;
        TensorT t;
        t.node_ = std::move(node);
        return t;
    }

    static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
        int64_t n = 1;
        for (int d : shape) {
            n *= d;
        }
        return from(std::move(shape), std::vector<T>(static_cast<size_t>(n), T(0)), requires_grad);
    }

    static TensorT full(std::vector<int> shape, T v, bool requires_grad = false) {
        int64_t n = 1;
        for (int d : shape) {
            n *= d;
        }
        return from(std::move(shape), std::vector<T>(static_cast<size_t>(n), v), requires_grad);
    }

    static TensorT scalar(T v) { return from({1}, {v}); }

    static TensorT randn(std::vector<int> shape, Rng& rng, T stddev = T(1), bool requires_grad = false) {
        int64_t n = 1;
        for (int d : shape) {
            n *= d;
        }
        std::vector<T> data(static_cast<size_t>(n));
        for (auto& x : data) {
            x = static_cast<T>(rng.normal()) * stddev;
        }
        return from(std::move(shape), std::move(data), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int size(int dim) const { return node_->shape[static_cast<size_t>(dim)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int64_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<T>& data() const { return node_->value; }
    // In-place access for initialization; never mutate a tensor that already
    // participates in a recorded graph.
    std::vector<T>& raw_data() { return node_->value; }

    T item() const {
        require(numel() == 1, errc::invalid_argument, "item() requires a single-element tensor");
        return node_->value[0];
    }

    T at(int i, int j) const {
        return node_->value[static_cast<size_t>(i) * static_cast<size_t>(node_->shape[1]) + static_cast<size_t>(j)];
    }

    const std::vector<T>& grad() const { return node_->grad; }

    void zero_grad() { node_->grad.clear(); }

    // Same values, detached from the graph.
    TensorT detach() const { return from(node_->shape, node_->value, false); }

    template <class U>
    TensorT<U> cast() const {
        std::vector<U> data(node_->value.size());
        for (size_t i = 0; i < data.size(); ++i) {
            data[i] = static_cast<U>(node_->value[i]);
        }
        return TensorT<U>::from(node_->shape, std::move(data), false);
    }

    std::shared_ptr<NodeT<T>>& node() { return node_; }
    const std::shared_ptr<NodeT<T>>& node() const { return node_; }

    // Reverse accumulation from a scalar output. Reverse creation order is a
    // valid topological order because every op node is created after its
    // parents.
    void backward() const {
        require(numel() == 1, errc::invalid_argument, "backward() requires a scalar loss");
        std::vector<NodeT<T>*> order;
        std::unordered_set<NodeT<T>*> seen;
        std::vector<NodeT<T>*> stack{node_.get()};
        while (!stack.empty()) {
            NodeT<T>* n = stack.back();
            stack.pop_back();
            if (!n->requires_grad || seen.count(n)) {
                continue;
            }
            seen.insert(n);
            order.push_back(n);
            for (auto& p : n->parents) {
                stack.push_back(p.get());
            }
        }
        std::sort(order.begin(), order.end(),
                  [](const NodeT<T>* a, const NodeT<T>* b) { return a->id > b->id; });
        node_->ensure_grad();
        node_->grad[0] = T(1);
        for (NodeT<T>* n : order) {
            if (n->backprop && !n->grad.empty()) {
                n->backprop(*n);
            }
        }
    }

private:
    std::shared_ptr<NodeT<T>> node_;
};

using Tensor = TensorT<float>;

namespace detail {

template <class T>
void check_finite(const std::vector<T>& v, const char* op) {
    for (T x : v) {
        if (!std::isfinite(x)) {
            throw error(errc::non_finite, std::string("non-finite value produced by ") + op);
        }
    }
}

// Builds the output node of an op: value precomputed, parents recorded only
// while grad mode is on and some parent needs gradients.
template <class T>
TensorT<T> make_result(std::vector<int> shape, std::vector<T> value, const char* op,
                       std::vector<TensorT<T>> parents,
                       std::function<void(NodeT<T>&)> backprop) {
    check_finite(value, op);
    TensorT<T> out = TensorT<T>::from(std::move(shape), std::move(value));
    bool track = false;
    if (grad_mode::enabled()) {
        for (const auto& p : parents) {
            if (p.requires_grad()) {
                track = true;
                break;
            }
        }
    }
    if (track) {
        auto& n = *out.node();
        n.requires_grad = true;
        n.parents.reserve(parents.size());
        for (auto& p : parents) {
            n.parents.push_back(p.node());
        }
        n.backprop = std::move(backprop);
    }
    return out;
}

template <class T>
void accumulate(NodeT<T>& parent, const std::vector<T>& delta) {
    if (!parent.requires_grad) {
        return;
    }
    parent.ensure_grad();
    for (size_t i = 0; i < delta.size(); ++i) {
        parent.grad[i] += delta[i];
    }
}

}  // namespace detail

}  // namespace icdit
