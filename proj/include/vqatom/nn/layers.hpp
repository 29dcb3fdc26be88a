#pragma once

#include <string>
#include <vector>

#include "vqatom/nn/ops.hpp"
#include "vqatom/nn/tape.hpp"
#include "vqatom/util/rng.hpp"

namespace vqatom::nn {

// Glorot-uniform matrix: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, SeededRng& rng);

// y = x W + b with W stored as in x out.
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, SeededRng& rng, bool zero_init = false);

  Var operator()(Tape& tape, const Var& x) const;
  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }
  void collect(std::vector<Parameter*>& out) { out.push_back(&weight); out.push_back(&bias); }
  void collect(std::vector<const Parameter*>& out) const { out.push_back(&weight); out.push_back(&bias); }
};

struct LayerNorm {
  Parameter gain;
  Parameter bias;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);

  Var operator()(Tape& tape, const Var& x) const;
  void collect(std::vector<Parameter*>& out) { out.push_back(&gain); out.push_back(&bias); }
  void collect(std::vector<const Parameter*>& out) const { out.push_back(&gain); out.push_back(&bias); }
};

}  // namespace vqatom::nn
