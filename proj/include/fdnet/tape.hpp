#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

#include "fdnet/tensor.hpp"

namespace fdnet {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning Tape is alive.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
    const Shape& shape() const;
    std::int64_t dim(std::int64_t axis) const { return value().dim(axis); }
};

/// Gradients of a scalar root with respect to the trainable leaves of a tape.
class Gradients {
public:
    /// Gradient for `leaf`; zeros shaped like the leaf when it did not
    /// participate in the root.
    Tensor of(Var leaf) const;
    bool contains(Var leaf) const { return grads_.count(leaf.id) != 0; }

private:
    friend class Tape;
    const Tape* tape_ = nullptr;
    std::unordered_map<int, Tensor> grads_;
};

/// Reverse-mode differentiation record. Nodes are appended in execution
/// order, which is therefore a topological order; backward() visits each
/// node once in reverse.
///
/// A Tape is single-owner state and must not be shared between threads.
class Tape {
public:
    /// Propagates `grad_out` (the gradient of the root w.r.t. this node's
    /// value) into the inputs via Tape::accumulate / Tape::grad_buffer.
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var leaf(Tensor value, bool requires_grad = true);

    /// Records an op result. The backward function is kept only when at
    /// least one input requires a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
    Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    /// Gradient of the single-element `root` w.r.t. every trainable leaf.
    Gradients backward(Var root);

    // Used from inside backward functions.
    Tensor& grad_buffer(Var v);
    void accumulate(Var v, const Tensor& g);

private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        bool is_leaf = false;
        BackwardFn backward;
    };

    Var push(Node node);
    void check_owned(Var v) const;

    // A deque keeps value() references valid while later ops are recorded.
    std::deque<Node> nodes_;
    std::vector<Tensor> grads_;
    bool in_backward_ = false;
};

}  // namespace fdnet
