#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vqatom/chem/mol.hpp"
#include "vqatom/featurize/features.hpp"
#include "vqatom/nn/layers.hpp"
#include "vqatom/nn/tape.hpp"
#include "vqatom/util/rng.hpp"

namespace vqatom::encoder {

struct EncoderConfig {
  std::size_t layers = 3;
  std::size_t hidden_dim = 32;
  std::size_t latent_dim = 16;
  bool epsilon_learnable = true;
};

// Disjoint union of featurized molecules. Every bond appears as two directed
// edges; molecule m owns atoms [offsets[m], offsets[m + 1]).
struct GraphBatch {
  nn::Tensor atom_features;  // n_atoms x feature width
  nn::Tensor bond_features;  // n_bonds x bond width
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  std::vector<std::size_t> edge_bond;
  std::vector<std::size_t> offsets{0};
  std::vector<chem::Element> elements;

  std::size_t atom_count() const { return elements.size(); }
  std::size_t molecule_count() const { return offsets.size() - 1; }

  void append(const chem::MolGraph& graph, const feat::MolFeatures& features);
  static GraphBatch from_graphs(std::span<const chem::MolGraph> graphs);
  static GraphBatch from_graph(const chem::MolGraph& graph);
};

// GINE message passing with jumping-knowledge readout:
//   h0 = Linear(x)
//   h_l = MLP_l((1 + eps_l) h_{l-1} + sum_{u in N(v)} relu(h_{l-1}(u) + EdgeEmb_l(e_uv)))
//   z = l2_normalize(Linear([h0 | h1 | ... | hL]))
class Encoder {
 public:
  struct Layer {
    nn::Linear edge;
    nn::Parameter eps;
    nn::Linear mlp0;
    nn::Linear mlp1;
  };

  Encoder() = default;
  Encoder(const EncoderConfig& config, SeededRng& rng);

  nn::Var forward(nn::Tape& tape, const GraphBatch& batch) const;
  // Inference without gradient bookkeeping.
  nn::Tensor encode(const GraphBatch& batch) const;

  void collect(std::vector<nn::Parameter*>& out);
  void collect(std::vector<const nn::Parameter*>& out) const;
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;

  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  nn::Linear input_;
  std::vector<Layer> layers_;
  nn::Linear jk_;
};

}  // namespace vqatom::encoder
