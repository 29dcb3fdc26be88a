#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vqatom/nn/tensor.hpp"

namespace vqatom::nn {

// A named trainable tensor. Gradients computed on a Tape are only written
// here through Tape::accumulate_param_grads, so a Tape never mutates the
// parameters it reads and frozen parameter sets can be shared across threads.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad();
};

class Tape;

// Handle to one node of a Tape. Cheap to copy; only valid while its Tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode recording. Nodes are appended in evaluation order, so
// iterating them backwards is a valid reverse topological order.
class Tape {
 public:
  // Called with the node's own output value and its accumulated gradient.
  using Backward = std::function<void(Tape&, const Tensor& out, const Tensor& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  Var input(Tensor value);
  Var param(const Parameter& p);

  Var record(Tensor value, std::initializer_list<Var> parents, Backward backward);
  Var record(Tensor value, const std::vector<Var>& parents, Backward backward);

  bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }
  const Tensor& value(const Var& v) const;
  const Tensor& grad(const Var& v) const;

  // grad(target) += delta; no-op for nodes that do not require gradients.
  void accumulate(const Var& target, const Tensor& delta);
  // Mutable gradient buffer (zero-initialized on first use) or nullptr.
  Tensor* grad_buffer(const Var& target);

  void backward(const Var& loss);

  const Tensor* grad_of(const Parameter& p) const;
  void accumulate_param_grads(std::span<Parameter* const> params) const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t last_backward_visits() const { return visits_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;

    const Tensor& value() const { return external ? *external : owned; }
  };

  Var push(Node node);

  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::size_t visits_ = 0;
};

}  // namespace vqatom::nn
