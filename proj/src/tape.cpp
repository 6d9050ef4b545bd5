#include "fdnet/tape.hpp"

#include <string>

#include "fdnet/errors.hpp"

namespace fdnet {

const Tensor& Var::value() const {
    if (!valid()) throw std::logic_error("access to an unbound Var");
    return tape->value(*this);
}

const Shape& Var::shape() const { return value().shape(); }

Tensor Gradients::of(Var leaf) const {
    auto it = grads_.find(leaf.id);
    if (it != grads_.end()) return it->second;
    return Tensor::zeros(leaf.shape());
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::check_owned(Var v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw std::logic_error("Var does not belong to this tape");
}

Var Tape::constant(Tensor value) {
    require_finite(value, "constant");
    return push(Node{std::move(value), false, true, {}});
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    require_finite(value, "leaf");
    return push(Node{std::move(value), requires_grad, true, {}});
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
    bool any = false;
    for (const auto& in : inputs) {
        check_owned(in);
        any = any || nodes_[static_cast<std::size_t>(in.id)].requires_grad;
    }
    Node node{std::move(value), any, false, {}};
    if (any) node.backward = std::move(backward);
    return push(std::move(node));
}

const Tensor& Tape::value(Var v) const {
    check_owned(v);
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

bool Tape::requires_grad(Var v) const {
    check_owned(v);
    return nodes_[static_cast<std::size_t>(v.id)].requires_grad;
}

Tensor& Tape::grad_buffer(Var v) {
    check_owned(v);
    auto& g = grads_[static_cast<std::size_t>(v.id)];
    if (g.empty() && nodes_[static_cast<std::size_t>(v.id)].value.numel() > 0)
        g = Tensor::zeros(nodes_[static_cast<std::size_t>(v.id)].value.shape());
    return g;
}

void Tape::accumulate(Var v, const Tensor& g) {
    if (!requires_grad(v)) return;
    auto& buf = grad_buffer(v);
    if (buf.shape() != g.shape())
        throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match value shape " +
                         shape_str(buf.shape()));
    auto dst = buf.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Gradients Tape::backward(Var root) {
    check_owned(root);
    if (value(root).numel() != 1)
        throw ShapeError("backward() root must be a scalar, got shape " + shape_str(value(root).shape()));
    if (in_backward_) throw std::logic_error("re-entrant backward()");
    in_backward_ = true;
    struct Reset {
        Tape* t;
        ~Reset() {
            t->grads_.clear();
            t->in_backward_ = false;
        }
    } reset{this};
    grads_.assign(nodes_.size(), Tensor{});
    grads_[static_cast<std::size_t>(root.id)] = Tensor::ones(value(root).shape());

    Gradients out;
    out.tape_ = this;
    for (int i = root.id; i >= 0; --i) {
        auto& node = nodes_[static_cast<std::size_t>(i)];
        auto& g = grads_[static_cast<std::size_t>(i)];
        if (g.empty() || !node.requires_grad) continue;
        if (node.is_leaf) {
            require_finite(g, "backward");
            out.grads_.emplace(i, std::move(g));
        } else if (node.backward) {
            node.backward(*this, g);
        }
        g = Tensor{};
    }
    return out;
}

}  // namespace fdnet
