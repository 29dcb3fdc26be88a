#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <utility>
#include <vector>

#include "vqatom/chem/mol.hpp"

namespace vqatom::feat {

struct Segment {
  std::string_view name;
  std::size_t offset;
  std::size_t width;
  bool one_hot;  // otherwise a block of independent binary flags
};

// Atom feature layout, in order. Widths sum to kAtomFeatureWidth.
const std::vector<Segment>& atom_schema();
const Segment& segment(std::string_view name);

inline constexpr std::size_t kAtomFeatureWidth = 81;
inline constexpr std::size_t kBondFeatureWidth = 6;

enum class Hybridization { SP, SP2, SP3, Other };

enum FunctionalGroup : std::size_t {
  kHydroxyl,
  kCarbonyl,
  kCarboxyl,
  kAmine,
  kAmide,
  kNitro,
  kNitrile,
  kEther,
  kThioGroup,
  kHalogenAttached,
  kFunctionalGroupCount
};

using GroupFlags = std::array<bool, kFunctionalGroupCount>;

// Flags for the groups the atom takes part in:
//   hydroxyl     O with H and exactly one heavy neighbor
//   carbonyl     C=O; both the C and the O
//   carboxyl     carbonyl C also single-bonded to an O bearing H; the C and both O
//   amine        non-aromatic N with only single bonds and no carbonyl neighbor
//   amide        N single-bonded to a carbonyl C; the N, the C and its =O
//   nitro        N with two O neighbors, one doubly bonded, and no H; the N and both O
//   nitrile      C#N; both atoms
//   ether        non-aromatic O with two single bonds to C and no H
//   thio         non-aromatic S with only single bonds (thiol or thioether)
//   halogen      halogen atoms and the atoms they are bonded to
GroupFlags functional_group_flags(const chem::MolGraph& graph, std::size_t atom);

Hybridization hybridization(const chem::MolGraph& graph, std::size_t atom);
bool is_donor(const chem::MolGraph& graph, std::size_t atom);
bool is_acceptor(const chem::MolGraph& graph, std::size_t atom);

struct MolFeatures {
  std::vector<std::vector<double>> atoms;  // n_atoms x kAtomFeatureWidth
  std::vector<std::vector<double>> bonds;  // n_bonds x kBondFeatureWidth
  std::vector<std::pair<std::size_t, std::size_t>> bond_atoms;
};

MolFeatures featurize_molecule(const chem::MolGraph& graph);

}  // namespace vqatom::feat
