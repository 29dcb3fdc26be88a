#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "vqatom/chem/mol.hpp"
#include "vqatom/encoder/gine.hpp"
#include "vqatom/nn/grad_check.hpp"
#include "vqatom/nn/ops.hpp"

using namespace vqatom;
using namespace vqatom::encoder;

namespace {

Encoder make_encoder(std::uint64_t seed = 7, EncoderConfig cfg = {}) {
  SeededRng rng(seed);
  Encoder enc(cfg, rng);
  // Non-zero eps and biases so every parameter path is exercised.
  SeededRng jitter(seed + 1);
  for (nn::Parameter* p : enc.parameters()) {
    if (p->name.ends_with(".bias") || p->name.ends_with(".eps")) {
      for (double& v : p->value.values()) v = jitter.uniform(-0.2, 0.2);
    }
  }
  return enc;
}

nn::Tensor encode_smiles(const Encoder& enc, const std::string& smiles) {
  return enc.encode(GraphBatch::from_graph(chem::parse_smiles(smiles)));
}

double row_distance(const nn::Tensor& a, std::size_t i, const nn::Tensor& b, std::size_t j) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) m = std::max(m, std::abs(a(i, k) - b(j, k)));
  return m;
}

std::vector<chem::SmilesRecord> bundled() {
  std::ifstream in(std::string(VQATOM_DATA_DIR) + "/molecules.smi");
  return chem::read_smiles_records(in);
}

}  // namespace

TEST(Encoder, OutputRowsAreUnitNorm) {
  Encoder enc = make_encoder();
  for (const auto& r : bundled()) {
    nn::Tensor z = encode_smiles(enc, r.smiles);
    ASSERT_EQ(z.cols(), 16u);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      double sq = 0.0;
      for (double v : z.row(i)) sq += v * v;
      EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-9) << r.id;
    }
  }
}

TEST(Encoder, BenzeneRowsIdentical) {
  nn::Tensor z = encode_smiles(make_encoder(), "c1ccccc1");
  for (std::size_t i = 1; i < 6; ++i) EXPECT_LE(row_distance(z, 0, z, i), 1e-9);
}

TEST(Encoder, MethaneGivesSingleUnitRow) {
  nn::Tensor z = encode_smiles(make_encoder(), "C");
  EXPECT_EQ(z.rows(), 1u);
  EXPECT_EQ(z.cols(), 16u);
  double sq = 0.0;
  for (double v : z.values()) sq += v * v;
  EXPECT_NEAR(sq, 1.0, 1e-12);
}

TEST(Encoder, ZeroWeightsGiveConstantLatents) {
  Encoder enc = make_encoder();
  for (nn::Parameter* p : enc.parameters()) {
    if (p->name.ends_with(".weight")) p->value.fill(0.0);
  }
  nn::Tensor z = encode_smiles(enc, "CC(=O)Nc1ccc(O)cc1");
  for (std::size_t i = 1; i < z.rows(); ++i) EXPECT_EQ(row_distance(z, 0, z, i), 0.0);
}

TEST(Encoder, BatchMatchesSingleMolecules) {
  Encoder enc = make_encoder();
  std::vector<chem::MolGraph> graphs{chem::parse_smiles("CCO"), chem::parse_smiles("c1ccncc1"),
                                     chem::parse_smiles("C")};
  nn::Tensor batched = enc.encode(GraphBatch::from_graphs(graphs));
  std::size_t offset = 0;
  for (const auto& g : graphs) {
    nn::Tensor single = enc.encode(GraphBatch::from_graph(g));
    for (std::size_t i = 0; i < single.rows(); ++i) EXPECT_EQ(row_distance(batched, offset + i, single, i), 0.0);
    offset += single.rows();
  }
}

TEST(Encoder, ShapeMismatchRejected) {
  Encoder enc = make_encoder();
  GraphBatch b = GraphBatch::from_graph(chem::parse_smiles("CC"));
  b.atom_features = nn::Tensor(2, 10);
  EXPECT_THROW(enc.encode(b), nn::ShapeError);
}

TEST(Encoder, PermutationEquivariance) {
  Encoder enc = make_encoder();
  SeededRng rng(3);
  for (const auto& r : bundled()) {
    chem::MolGraph g = chem::parse_smiles(r.smiles);
    nn::Tensor z = enc.encode(GraphBatch::from_graph(g));
    std::vector<std::size_t> perm(g.atoms.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());
    nn::Tensor zp = enc.encode(GraphBatch::from_graph(chem::permute_graph(g, perm)));
    for (std::size_t a = 0; a < g.atoms.size(); ++a) {
      EXPECT_LE(row_distance(z, a, zp, perm[a]), 1e-12) << r.id;
    }
  }
}

TEST(Encoder, ThreeHopLocality) {
  Encoder enc = make_encoder();
  nn::Tensor propane = encode_smiles(enc, "CCC");
  EXPECT_LE(row_distance(propane, 0, propane, 2), 1e-9);
  // para carbons of p-dichlorobenzene and p-xylene
  nn::Tensor dcb = encode_smiles(enc, "Clc1ccc(Cl)cc1");
  EXPECT_LE(row_distance(dcb, 1, dcb, 4), 1e-9);
  nn::Tensor xylene = encode_smiles(enc, "Cc1ccc(C)cc1");
  EXPECT_LE(row_distance(xylene, 1, xylene, 4), 1e-9);
  // Distinct environments still differ.
  EXPECT_GT(row_distance(propane, 0, propane, 1), 1e-6);
}

TEST(Encoder, GradientOfCommitmentStyleLoss) {
  Encoder enc = make_encoder(11);
  GraphBatch batch = GraphBatch::from_graph(chem::parse_smiles("CCO"));
  // Fixed unit targets stand in for assigned codes.
  SeededRng rng(5);
  nn::Tensor targets(3, 16);
  for (std::size_t i = 0; i < 3; ++i) {
    double sq = 0.0;
    for (double& v : targets.row(i)) {
      v = rng.normal();
      sq += v * v;
    }
    for (double& v : targets.row(i)) v /= std::sqrt(sq);
  }
  auto params = enc.parameters();
  auto loss = [&](nn::Tape& t) {
    nn::Var z = enc.forward(t, batch);
    nn::Var d = nn::sub(z, t.constant(targets));
    return nn::scale(nn::sum(nn::mul(d, d)), 1.0 / 3.0);
  };
  auto r = nn::grad_check(loss, params, 1e-6);
  EXPECT_LE(r.max_rel_error, 1e-5) << r.worst_param << "[" << r.worst_index << "]";
}
