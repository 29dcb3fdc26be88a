#include <gtest/gtest.h>

#include <fstream>
#include <numeric>

#include "vqatom/chem/mol.hpp"
#include "vqatom/featurize/features.hpp"
#include "vqatom/util/rng.hpp"

using namespace vqatom;
using namespace vqatom::chem;
using namespace vqatom::feat;

namespace {

// Index of the set bit inside a one-hot segment.
std::size_t hot(const std::vector<double>& v, std::string_view name) {
  const Segment& s = segment(name);
  for (std::size_t i = 0; i < s.width; ++i) {
    if (v[s.offset + i] == 1.0) return i;
  }
  return s.width;
}

double flag(const std::vector<double>& v, std::string_view name, std::size_t k = 0) {
  return v[segment(name).offset + k];
}

GroupFlags groups(const std::string& smiles, std::size_t atom) {
  return functional_group_flags(parse_smiles(smiles), atom);
}

GroupFlags only(std::initializer_list<FunctionalGroup> set) {
  GroupFlags f{};
  for (auto g : set) f[g] = true;
  return f;
}

std::vector<SmilesRecord> bundled() {
  std::ifstream in(std::string(VQATOM_DATA_DIR) + "/molecules.smi");
  return read_smiles_records(in);
}

}  // namespace

TEST(Schema, SegmentsAreContiguousAndSumToWidth) {
  std::size_t offset = 0;
  for (const Segment& s : atom_schema()) {
    EXPECT_EQ(s.offset, offset) << s.name;
    offset += s.width;
  }
  EXPECT_EQ(offset, kAtomFeatureWidth);
  EXPECT_EQ(segment("element").width, 13u);
  EXPECT_EQ(segment("functional_groups").width, 10u);
}

TEST(Featurize, BenzeneAtomsIdentical) {
  MolFeatures f = featurize_molecule(parse_smiles("c1ccccc1"));
  ASSERT_EQ(f.atoms.size(), 6u);
  for (const auto& v : f.atoms) EXPECT_EQ(v, f.atoms[0]);
  EXPECT_EQ(hot(f.atoms[0], "ring_size"), 4u);  // six-ring bucket
  EXPECT_EQ(hot(f.atoms[0], "hybridization"), static_cast<std::size_t>(Hybridization::SP2));
  EXPECT_EQ(hot(f.atoms[0], "aromatic_bonds"), 2u);
  EXPECT_EQ(flag(f.atoms[0], "fused_ring"), 0.0);
}

TEST(Featurize, EthanolOxygen) {
  MolFeatures f = featurize_molecule(parse_smiles("CCO"));
  const auto& o = f.atoms[2];
  EXPECT_EQ(hot(o, "element"), static_cast<std::size_t>(Element::O));
  EXPECT_EQ(hot(o, "degree"), 1u);
  EXPECT_EQ(hot(o, "hydrogens"), 1u);
  EXPECT_EQ(flag(o, "aromatic"), 0.0);
  EXPECT_EQ(flag(o, "in_ring"), 0.0);
  EXPECT_EQ(flag(o, "acceptor"), 1.0);
  EXPECT_EQ(flag(o, "donor"), 1.0);
}

TEST(Featurize, TolueneMethyl) {
  MolFeatures f = featurize_molecule(parse_smiles("Cc1ccccc1"));
  EXPECT_EQ(hot(f.atoms[0], "aromatic_neighbors"), 1u);
  EXPECT_EQ(hot(f.atoms[0], "ring_size"), 0u);
  EXPECT_EQ(hot(f.atoms[0], "hybridization"), static_cast<std::size_t>(Hybridization::SP3));
}

TEST(Featurize, NaphthaleneFusionAtoms) {
  MolFeatures f = featurize_molecule(parse_smiles("c1ccc2ccccc2c1"));
  EXPECT_EQ(flag(f.atoms[3], "fused_ring"), 1.0);
  EXPECT_EQ(flag(f.atoms[8], "fused_ring"), 1.0);
  EXPECT_EQ(flag(f.atoms[0], "fused_ring"), 0.0);
  EXPECT_EQ(hot(f.atoms[3], "aromatic_bonds"), 3u);
}

TEST(Featurize, RingSizeBuckets) {
  EXPECT_EQ(hot(featurize_molecule(parse_smiles("C1CC1")).atoms[0], "ring_size"), 1u);
  EXPECT_EQ(hot(featurize_molecule(parse_smiles("C1CCCCCCC1")).atoms[0], "ring_size"), 6u);
  EXPECT_EQ(hot(featurize_molecule(parse_smiles("C1CCCCCCCCCC1")).atoms[0], "ring_size"), 6u);
  // Smallest ring wins for atoms on two rings.
  MolFeatures f = featurize_molecule(parse_smiles("C1CC2(C1)CCCC2"));
  EXPECT_EQ(hot(f.atoms[3], "ring_size"), 2u);
}

TEST(Featurize, ClippingToExtremeBuckets) {
  MolFeatures f = featurize_molecule(parse_smiles("[O--]"));
  EXPECT_EQ(hot(f.atoms[0], "formal_charge"), 0u);
  EXPECT_EQ(hot(f.atoms[0], "hybridization"), static_cast<std::size_t>(Hybridization::Other));
  MolFeatures m = featurize_molecule(parse_smiles("C"));
  EXPECT_EQ(hot(m.atoms[0], "hydrogens"), 4u);
  MolFeatures s = featurize_molecule(parse_smiles("FS(F)(F)(F)(F)F"));
  EXPECT_EQ(hot(s.atoms[1], "degree"), 6u);
  EXPECT_EQ(hot(s.atoms[1], "single_bonds"), 4u);
}

TEST(Featurize, BondFeatures) {
  MolFeatures f = featurize_molecule(parse_smiles("C=Cc1ccccc1"));
  ASSERT_EQ(f.bonds.size(), 8u);
  EXPECT_EQ(f.bonds[0], (std::vector<double>{0, 1, 0, 0, 0, 0}));
  EXPECT_EQ(f.bonds[1], (std::vector<double>{1, 0, 0, 0, 0, 0}));
  EXPECT_EQ(f.bonds[2], (std::vector<double>{0, 0, 0, 1, 1, 1}));
  EXPECT_EQ(f.bond_atoms[1], (std::pair<std::size_t, std::size_t>{1, 2}));
}

TEST(FunctionalGroups, AceticAcid) {
  EXPECT_EQ(groups("CC(=O)O", 1), only({kCarbonyl, kCarboxyl}));
  EXPECT_EQ(groups("CC(=O)O", 2), only({kCarbonyl, kCarboxyl}));
  EXPECT_EQ(groups("CC(=O)O", 3), only({kHydroxyl, kCarboxyl}));
  EXPECT_EQ(groups("CC(=O)O", 0), only({}));
}

TEST(FunctionalGroups, EthanolAndBenzene) {
  EXPECT_EQ(groups("CCO", 2), only({kHydroxyl}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(groups("c1ccccc1", i), only({}));
}

TEST(FunctionalGroups, NitrogenGroups) {
  EXPECT_EQ(groups("CN", 1), only({kAmine}));
  EXPECT_EQ(groups("Nc1ccccc1", 0), only({kAmine}));
  EXPECT_EQ(groups("CC(N)=O", 2), only({kAmide}));
  EXPECT_EQ(groups("CC(N)=O", 1), only({kCarbonyl, kAmide}));
  EXPECT_EQ(groups("CC(N)=O", 3), only({kCarbonyl, kAmide}));
  EXPECT_EQ(groups("C[N+](=O)[O-]", 1), only({kNitro}));
  EXPECT_EQ(groups("C[N+](=O)[O-]", 3), only({kNitro}));
  EXPECT_EQ(groups("CC#N", 1), only({kNitrile}));
  EXPECT_EQ(groups("CC#N", 2), only({kNitrile}));
  EXPECT_EQ(groups("c1ccncc1", 3), only({}));
}

TEST(FunctionalGroups, OxygenSulfurHalogen) {
  EXPECT_EQ(groups("CCOCC", 2), only({kEther}));
  EXPECT_EQ(groups("c1ccoc1", 3), only({}));
  EXPECT_EQ(groups("CS", 1), only({kThioGroup}));
  EXPECT_EQ(groups("CSC", 1), only({kThioGroup}));
  EXPECT_EQ(groups("CS(C)=O", 1), only({}));
  EXPECT_EQ(groups("Clc1ccccc1", 0), only({kHalogenAttached}));
  EXPECT_EQ(groups("Clc1ccccc1", 1), only({kHalogenAttached}));
  EXPECT_EQ(groups("Clc1ccccc1", 2), only({}));
}

TEST(DonorAcceptor, Rules) {
  MolGraph amide = parse_smiles("CC(N)=O");
  EXPECT_TRUE(is_donor(amide, 2));
  EXPECT_FALSE(is_acceptor(amide, 2));
  EXPECT_TRUE(is_acceptor(amide, 3));
  MolGraph ammonium = parse_smiles("C[NH3+]");
  EXPECT_TRUE(is_donor(ammonium, 1));
  EXPECT_FALSE(is_acceptor(ammonium, 1));
  MolGraph pyridine = parse_smiles("c1ccncc1");
  EXPECT_FALSE(is_donor(pyridine, 3));
  EXPECT_TRUE(is_acceptor(pyridine, 3));
}

TEST(Hybridization, Rules) {
  EXPECT_EQ(hybridization(parse_smiles("CC#N"), 1), Hybridization::SP);
  EXPECT_EQ(hybridization(parse_smiles("C=C=C"), 1), Hybridization::SP);
  EXPECT_EQ(hybridization(parse_smiles("C=C"), 0), Hybridization::SP2);
  EXPECT_EQ(hybridization(parse_smiles("CC"), 0), Hybridization::SP3);
  EXPECT_EQ(hybridization(parse_smiles("C"), 0), Hybridization::Other);
}

TEST(Properties, SegmentsAreOneHotOrBinary) {
  for (const auto& r : bundled()) {
    MolFeatures f = featurize_molecule(parse_smiles(r.smiles));
    for (const auto& v : f.atoms) {
      ASSERT_EQ(v.size(), kAtomFeatureWidth);
      for (const Segment& s : atom_schema()) {
        double sum = 0.0;
        for (std::size_t i = 0; i < s.width; ++i) {
          const double x = v[s.offset + i];
          EXPECT_TRUE(x == 0.0 || x == 1.0);
          sum += x;
        }
        if (s.one_hot) EXPECT_EQ(sum, 1.0) << r.id << " " << s.name;
      }
    }
    for (const auto& b : f.bonds) EXPECT_EQ(b[0] + b[1] + b[2] + b[3], 1.0);
  }
}

TEST(Properties, PermutationInvarianceAndDeterminism) {
  SeededRng rng(4);
  for (const auto& r : bundled()) {
    MolGraph g = parse_smiles(r.smiles);
    MolFeatures f = featurize_molecule(g);
    EXPECT_EQ(featurize_molecule(g).atoms, f.atoms);
    for (int rep = 0; rep < 3; ++rep) {
      std::vector<std::size_t> perm(g.atoms.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(perm.begin(), perm.end());
      MolFeatures fp = featurize_molecule(permute_graph(g, perm));
      for (std::size_t a = 0; a < g.atoms.size(); ++a) {
        EXPECT_EQ(fp.atoms[perm[a]], f.atoms[a]) << r.id << " atom " << a;
      }
      for (std::size_t b = 0; b < g.bonds.size(); ++b) EXPECT_EQ(fp.bonds[b], f.bonds[b]);
    }
  }
}

TEST(Properties, LocalityOfMatchingNeighborhoods) {
  // Terminal carbons of propane; para carbons of p-xylene.
  MolFeatures propane = featurize_molecule(parse_smiles("CCC"));
  EXPECT_EQ(propane.atoms[0], propane.atoms[2]);
  MolFeatures xylene = featurize_molecule(parse_smiles("Cc1ccc(C)cc1"));
  EXPECT_EQ(xylene.atoms[1], xylene.atoms[4]);
  EXPECT_EQ(xylene.atoms[0], xylene.atoms[5]);
}
