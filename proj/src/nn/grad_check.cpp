#include "vqatom/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace vqatom::nn {

namespace {

double evaluate(const std::function<Var(Tape&)>& loss_fn) {
  Tape tape(false);
  return loss_fn(tape).value().item();
}

}  // namespace

double CoordinateGrad::rel_error() const {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult grad_check(const std::function<Var(Tape&)>& loss_fn,
                           std::span<Parameter* const> params, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) {
    throw GradCheckError(GradCheckError::Kind::InvalidEpsilon,
                         "grad_check: epsilon must lie in (0, 1e-3]");
  }

  std::vector<Tensor> analytic;
  {
    Tape tape(true);
    Var loss = loss_fn(tape);
    tape.backward(loss);
    for (const Parameter* p : params) {
      const Tensor* g = tape.grad_of(*p);
      analytic.push_back(g ? *g : Tensor::zeros_like(p->value));
      if (!analytic.back().all_finite()) {
        throw GradCheckError(GradCheckError::Kind::NonFiniteGradient,
                             "grad_check: non-finite analytic gradient for " + p->name);
      }
    }
  }

  const double f0 = evaluate(loss_fn);
  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + epsilon;
      const double fp = evaluate(loss_fn);
      p.value[i] = saved - epsilon;
      const double fm = evaluate(loss_fn);
      p.value[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw GradCheckError(GradCheckError::Kind::NonFiniteGradient,
                             "grad_check: non-finite loss while perturbing " + p.name);
      }
      const double forward = (fp - f0) / epsilon;
      const double backward = (f0 - fm) / epsilon;
      if (std::abs(forward - backward) > 1e-2 * std::max(1.0, std::abs(forward) + std::abs(backward))) {
        throw GradCheckError(GradCheckError::Kind::NonDifferentiablePoint,
                             "grad_check: one-sided slopes disagree at " + p.name + "[" +
                                 std::to_string(i) + "]");
      }
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double ga = analytic[k][i];
      const CoordinateGrad coord{k, i, ga, numeric};
      const double rel = coord.rel_error();
      result.per_coordinate.push_back(coord);
      ++result.coordinates;
      if (rel > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = i;
        result.worst_analytic = ga;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace vqatom::nn
