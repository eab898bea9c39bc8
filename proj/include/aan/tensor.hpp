#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "aan/errors.hpp"

namespace aan {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into inputs that require grad.
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

inline thread_local bool grad_mode_enabled = true;

}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
   public:
    NoGradGuard() : previous_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
    ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_enabled; }

/// Dense row-major float64 tensor. Copies share storage (handle semantics);
/// values produced by operations are never written again.
class Tensor {
   public:
    using BackwardFn = std::function<void(detail::Node&)>;

    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false) {
        for (auto d : shape) {
            if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
        }
        if (shape_numel(shape) != data.size()) {
            throw DimensionError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                                 " values, got " + std::to_string(data.size()));
        }
        node_ = std::make_shared<detail::Node>();
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) { return Tensor({1}, {value}, requires_grad); }

    // Builds an op result. Records the inputs and the local gradient rule only
    // when recording is on and some input requires grad.
    static Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, const char* op,
                              BackwardFn backward) {
        Tensor out(std::move(shape), std::move(data));
        out.node_->op = op;
        if (!grad_enabled()) return out;
        bool any = false;
        for (const auto& in : inputs) any = any || in.requires_grad();
        if (!any) return out;
        out.node_->requires_grad = true;
        out.node_->inputs.reserve(inputs.size());
        for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
        out.node_->backward_fn = std::move(backward);
        return out;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(int axis) const {
        int r = static_cast<int>(rank());
        int a = axis < 0 ? axis + r : axis;
        if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
        return node_->shape[static_cast<std::size_t>(a)];
    }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    // Only for leaves (parameters, inputs) outside of a recorded computation.
    std::span<double> mutable_data() { return node_->data; }

    double operator[](std::size_t i) const { return node_->data[i]; }
    double at(std::size_t i, std::size_t j) const { return node_->data[i * node_->shape.back() + j]; }
    double item() const {
        if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool value) { node_->requires_grad = value; }
    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.clear(); }

    const char* op_name() const { return node_->op; }
    bool is_leaf() const { return node_->inputs.empty(); }

    // Same values, new leaf with no history.
    Tensor detach() const { return Tensor(shape(), node_->data, false); }

    const std::shared_ptr<detail::Node>& node() const { return node_; }

   private:
    std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered record of the operations reachable from a root.
class Tape {
   public:
    static Tape record(const Tensor& root) {
        Tape tape;
        std::unordered_set<const detail::Node*> visited;
        // Iterative post-order DFS; inputs are emitted before their consumers.
        std::vector<std::pair<detail::Node*, std::size_t>> stack;
        stack.emplace_back(root.node().get(), 0);
        visited.insert(root.node().get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->inputs.size()) {
                detail::Node* child = node->inputs[next++].get();
                if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
            } else {
                tape.nodes_.push_back(node);
                stack.pop_back();
            }
        }
        return tape;
    }

    std::span<detail::Node* const> nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }

    // Visits every node once, consumers before producers.
    void run_backward() const {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            detail::Node* node = *it;
            if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
        }
    }

   private:
    std::vector<detail::Node*> nodes_;
};

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor that
// requires grad. Leaf gradients accumulate across calls until zero_grad().
inline void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
    }
    if (!loss.requires_grad()) throw ContractError("backward() on a loss that does not depend on any parameter");
    Tape tape = Tape::record(loss);
    // Interior gradients belong to a single pass.
    for (detail::Node* node : tape.nodes()) {
        if (!node->inputs.empty()) node->grad.clear();
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    tape.run_backward();
}

}  // namespace aan
