#include "vqatom/nn/optim.hpp"

#include <cmath>

namespace vqatom::nn {

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->grad.values()) g *= s;
    }
  }
  return norm;
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.push_back(Tensor::zeros_like(p->value));
    v_.push_back(Tensor::zeros_like(p->value));
    if (!p->grad.same_shape(p->value)) p->grad = Tensor::zeros_like(p->value);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::step() {
  for (const Parameter* p : params_) {
    if (!p->grad.same_shape(p->value)) {
      throw ShapeError("Adam: gradient shape mismatch for " + p->name);
    }
    if (!p->grad.all_finite()) throw NonFiniteGradient("Adam: non-finite gradient in " + p->name);
  }
  if (config_.clip_norm) {
    last_grad_norm_ = clip_grad_norm(params_, *config_.clip_norm);
  } else {
    double sq = 0.0;
    for (const Parameter* p : params_)
      for (double g : p->grad.values()) sq += g * g;
    last_grad_norm_ = std::sqrt(sq);
  }

  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.lr;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      if (!config_.decoupled && config_.weight_decay != 0.0) g += config_.weight_decay * p.value[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      if (config_.decoupled && config_.weight_decay != 0.0) {
        p.value[i] -= lr * config_.weight_decay * p.value[i];
      }
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace vqatom::nn
