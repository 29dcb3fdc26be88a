#include "vqatom/encoder/gine.hpp"

#include "vqatom/nn/ops.hpp"

namespace vqatom::encoder {

void GraphBatch::append(const chem::MolGraph& graph, const feat::MolFeatures& features) {
  const std::size_t base = atom_count();
  const std::size_t bond_base = bond_features.rank() == 0 ? 0 : bond_features.rows();
  const std::size_t n = features.atoms.size();
  const std::size_t m = features.bonds.size();

  nn::Tensor atoms(base + n, feat::kAtomFeatureWidth);
  if (base > 0) std::copy(atom_features.values().begin(), atom_features.values().end(), atoms.values().begin());
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(features.atoms[i].begin(), features.atoms[i].end(), atoms.row(base + i).begin());
  }
  atom_features = std::move(atoms);

  nn::Tensor bonds(bond_base + m, feat::kBondFeatureWidth);
  if (bond_base > 0) std::copy(bond_features.values().begin(), bond_features.values().end(), bonds.values().begin());
  for (std::size_t b = 0; b < m; ++b) {
    std::copy(features.bonds[b].begin(), features.bonds[b].end(), bonds.row(bond_base + b).begin());
    const auto [a, c] = features.bond_atoms[b];
    src.push_back(base + a);
    dst.push_back(base + c);
    edge_bond.push_back(bond_base + b);
    src.push_back(base + c);
    dst.push_back(base + a);
    edge_bond.push_back(bond_base + b);
  }
  bond_features = std::move(bonds);

  for (const chem::Atom& atom : graph.atoms) elements.push_back(atom.element);
  offsets.push_back(base + n);
}

GraphBatch GraphBatch::from_graphs(std::span<const chem::MolGraph> graphs) {
  GraphBatch batch;
  for (const auto& g : graphs) batch.append(g, feat::featurize_molecule(g));
  return batch;
}

GraphBatch GraphBatch::from_graph(const chem::MolGraph& graph) {
  return from_graphs(std::span<const chem::MolGraph>(&graph, 1));
}

Encoder::Encoder(const EncoderConfig& config, SeededRng& rng) : config_(config) {
  if (config.latent_dim == 0 || config.hidden_dim == 0) throw nn::ShapeError("encoder dims must be positive");
  const std::size_t h = config.hidden_dim;
  input_ = nn::Linear("encoder.input", feat::kAtomFeatureWidth, h, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l);
    layers_.push_back(Layer{nn::Linear(p + ".edge", feat::kBondFeatureWidth, h, rng),
                            nn::Parameter(p + ".eps", nn::Tensor::scalar(0.0)),
                            nn::Linear(p + ".mlp0", h, h, rng), nn::Linear(p + ".mlp1", h, h, rng)});
  }
  jk_ = nn::Linear("encoder.jk", h * (config.layers + 1), config.latent_dim, rng);
}

nn::Var Encoder::forward(nn::Tape& tape, const GraphBatch& batch) const {
  using namespace nn;
  if (batch.atom_features.cols() != input_.in_dim()) {
    throw ShapeError("encoder expects " + std::to_string(input_.in_dim()) + " atom features, got " +
                     batch.atom_features.shape_string());
  }
  const std::size_t n = batch.atom_count();
  Var x = tape.input(batch.atom_features);
  Var bonds = tape.input(batch.bond_features.rank() == 0 ? Tensor(0, feat::kBondFeatureWidth)
                                                         : batch.bond_features);
  Var h = input_(tape, x);
  std::vector<Var> stages{h};
  for (const Layer& layer : layers_) {
    Var edge = gather_rows(layer.edge(tape, bonds), batch.edge_bond);
    Var messages = relu(add(gather_rows(h, batch.src), edge));
    Var agg = scatter_add_rows(messages, batch.dst, n);
    Var self = config_.epsilon_learnable ? add(h, mul_scalar(h, tape.param(layer.eps)))
                                         : add(h, scale(h, layer.eps.value.item()));
    h = layer.mlp1(tape, relu(layer.mlp0(tape, add(self, agg))));
    stages.push_back(h);
  }
  return l2_normalize(jk_(tape, concat(stages, 1)), 1, 1e-12);
}

nn::Tensor Encoder::encode(const GraphBatch& batch) const {
  nn::Tape tape(false);
  return forward(tape, batch).value();
}

void Encoder::collect(std::vector<nn::Parameter*>& out) {
  input_.collect(out);
  for (Layer& l : layers_) {
    l.edge.collect(out);
    if (config_.epsilon_learnable) out.push_back(&l.eps);
    l.mlp0.collect(out);
    l.mlp1.collect(out);
  }
  jk_.collect(out);
}

void Encoder::collect(std::vector<const nn::Parameter*>& out) const {
  input_.collect(out);
  for (const Layer& l : layers_) {
    l.edge.collect(out);
    out.push_back(&l.eps);
    l.mlp0.collect(out);
    l.mlp1.collect(out);
  }
  jk_.collect(out);
}

std::vector<nn::Parameter*> Encoder::parameters() {
  std::vector<nn::Parameter*> out;
  collect(out);
  return out;
}

std::vector<const nn::Parameter*> Encoder::parameters() const {
  std::vector<const nn::Parameter*> out;
  collect(out);
  return out;
}

}  // namespace vqatom::encoder
