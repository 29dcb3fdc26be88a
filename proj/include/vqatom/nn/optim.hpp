#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "vqatom/nn/tape.hpp"

namespace vqatom::nn {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // true: AdamW (decay applied to the weights); false: L2 term added to the gradient.
  bool decoupled = false;
  std::optional<double> clip_norm;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  // Applies one bias-corrected update from the parameters' grad buffers.
  void step();
  void zero_grad();

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  std::uint64_t steps() const { return steps_; }
  double last_grad_norm() const { return last_grad_norm_; }
  const AdamConfig& config() const { return config_; }
  std::span<Parameter* const> params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t steps_ = 0;
  double last_grad_norm_ = 0.0;
};

}  // namespace vqatom::nn
