#include "vqatom/nn/layers.hpp"

#include <cmath>

namespace vqatom::nn {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, SeededRng& rng) {
  Tensor w(fan_in, fan_out);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.values()) v = rng.uniform(-a, a);
  return w;
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, SeededRng& rng, bool zero_init)
    : weight(name + ".weight", zero_init ? Tensor(in, out) : glorot_uniform(in, out, rng)),
      bias(name + ".bias", Tensor(1, out)) {}

Var Linear::operator()(Tape& tape, const Var& x) const {
  return add(matmul(x, tape.param(weight)), tape.param(bias));
}

LayerNorm::LayerNorm(const std::string& name, std::size_t dim)
    : gain(name + ".gain", Tensor(1, dim, 1.0)), bias(name + ".bias", Tensor(1, dim)) {}

Var LayerNorm::operator()(Tape& tape, const Var& x) const {
  return layer_norm(x, tape.param(gain), tape.param(bias));
}

}  // namespace vqatom::nn
