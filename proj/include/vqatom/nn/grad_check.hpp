#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqatom/nn/tape.hpp"

namespace vqatom::nn {

class GradCheckError : public std::runtime_error {
 public:
  enum class Kind { NonFiniteGradient, NonDifferentiablePoint, InvalidEpsilon };
  GradCheckError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct CoordinateGrad {
  std::size_t param = 0;  // index into the checked parameter list
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;

  double rel_error() const;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::vector<CoordinateGrad> per_coordinate;
};

// Compares reverse-mode gradients with central differences for every
// coordinate of every parameter. The relative error of one coordinate is
// |g_a - g_n| / max(1e-8, |g_a| + |g_n|).
//
// loss_fn must build a scalar on the tape it is given and read parameters
// through Tape::param. epsilon must lie in (0, 1e-3]. Throws GradCheckError
// when a gradient is non-finite or when the one-sided slopes disagree by more
// than O(1), which marks a kink such as |x| at 0.
GradCheckResult grad_check(const std::function<Var(Tape&)>& loss_fn,
                           std::span<Parameter* const> params, double epsilon = 1e-6);

}  // namespace vqatom::nn
