#include "vqatom/nn/tape.hpp"

namespace vqatom::nn {

void Parameter::zero_grad() {
  if (grad.same_shape(value)) {
    grad.fill(0.0);
  } else {
    grad = Tensor::zeros_like(value);
  }
}

const Tensor& Var::value() const { return tape_->value(*this); }
const Tensor& Var::grad() const { return tape_->grad(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError("constant: non-finite input");
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError("input: non-finite input");
  Node n;
  n.owned = std::move(value);
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

Var Tape::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.external = &p.value;
  n.requires_grad = grad_enabled_;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id_);
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
  Node n;
  n.owned = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (nodes_[p.id_].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, Backward backward) {
  Node n;
  n.owned = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (nodes_[p.id_].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(const Var& v) const { return nodes_[v.id_].value(); }

const Tensor& Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id_];
  if (!n.grad.same_shape(n.value())) {
    throw ShapeError("grad requested for a node without gradient");
  }
  return n.grad;
}

Tensor* Tape::grad_buffer(const Var& target) {
  Node& n = nodes_[target.id_];
  if (!n.requires_grad) return nullptr;
  if (!n.grad.same_shape(n.value())) n.grad = Tensor::zeros_like(n.value());
  return &n.grad;
}

void Tape::accumulate(const Var& target, const Tensor& delta) {
  if (Tensor* g = grad_buffer(target)) g->add_in_place(delta);
}

void Tape::backward(const Var& loss) {
  if (!grad_enabled_) throw ShapeError("backward on a tape recorded without gradients");
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + loss.value().shape_string());
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad = Tensor();
  }
  visits_ = 0;
  Tensor* seed = grad_buffer(loss);
  if (!seed) return;
  (*seed)[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    ++visits_;
    if (n.backward) n.backward(*this, n.value(), n.grad);
  }
}

const Tensor* Tape::grad_of(const Parameter& p) const {
  auto it = param_nodes_.find(&p);
  if (it == param_nodes_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  if (n.grad.empty()) return nullptr;
  return &n.grad;
}

void Tape::accumulate_param_grads(std::span<Parameter* const> params) const {
  for (Parameter* p : params) {
    const Tensor* g = grad_of(*p);
    if (!g) continue;
    if (!p->grad.same_shape(p->value)) p->grad = Tensor::zeros_like(p->value);
    p->grad.add_in_place(*g);
  }
}

}  // namespace vqatom::nn
