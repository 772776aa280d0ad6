#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "glyphlm/errors.hpp"

namespace glyphlm {

/// Dense row-major tensor with an optional gradient accumulator and the
/// reverse-mode autodiff linkage for define-by-run graphs. Graphs are rebuilt
/// every step: an op stores its parents plus a closure that pushes this
/// node's grad into theirs.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until needed; same length as value when present
    bool requires_grad = false;

    std::vector<std::shared_ptr<Tensor<T>>> parents;
    std::function<void(Tensor<T>&)> backward_fn;

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    T* data() { return value.data(); }
    const T* data() const { return value.data(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }

    void zero_grad() {
        if (!grad.empty()) grad.assign(grad.size(), T(0));
    }

    /// True when backward must propagate into this node.
    bool needs_grad() const { return requires_grad || static_cast<bool>(backward_fn); }

    /// Drop graph linkage, keeping value/grad. Used when a node outlives its step.
    void detach() {
        parents.clear();
        backward_fn = nullptr;
    }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
TensorPtr<T> make_tensor(std::vector<int> shape, bool requires_grad = false) {
    auto t = std::make_shared<Tensor<T>>();
    t->shape = std::move(shape);
    t->value.assign(static_cast<std::size_t>(shape_numel<T>(t->shape)), T(0));
    t->requires_grad = requires_grad;
    return t;
}

template <typename T>
TensorPtr<T> make_tensor(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
    auto t = std::make_shared<Tensor<T>>();
    t->shape = std::move(shape);
    if (static_cast<std::int64_t>(values.size()) != shape_numel<T>(t->shape))
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(t->shape));
    t->value = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

/// Scoped switch that disables graph construction (evaluation paths).
class NoGradGuard {
  public:
    NoGradGuard() : prev_(enabled_ref()) { enabled_ref() = false; }
    ~NoGradGuard() { enabled_ref() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool grad_enabled() { return enabled_ref(); }

  private:
    static bool& enabled_ref() {
        thread_local bool enabled = true;
        return enabled;
    }
    bool prev_;
};

/// Reverse-mode sweep from a scalar root. Visits each reachable node exactly
/// once, children before parents (reverse of a DFS post-order), accumulating
/// additively into existing grads.
template <typename T>
void backward(const TensorPtr<T>& root) {
    if (!root) throw ShapeError("backward: null root");
    if (root->numel() != 1)
        throw ShapeError("backward root must be scalar, got shape " + shape_str(root->shape));

    std::vector<Tensor<T>*> order;
    std::unordered_set<Tensor<T>*> visited;
    struct Frame {
        Tensor<T>* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Tensor<T>* p = f.node->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor<T>* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

}  // namespace glyphlm
