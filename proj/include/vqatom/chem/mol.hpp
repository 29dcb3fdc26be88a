#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vqatom::chem {

enum class Element : std::uint8_t { B, C, N, O, P, S, F, Cl, Br, I, Si, Se, Unk };
inline constexpr std::size_t kElementCount = 13;

std::string_view element_symbol(Element e);
std::optional<Element> element_from_symbol(std::string_view symbol);
bool is_halogen(Element e);

// Valence used to fill implicit hydrogens. N with positive charge gets 4.
int default_valence(Element e, int formal_charge);
// Largest bond-order sum (plus explicit H) accepted before |charge| slack.
int max_valence(Element e);

enum class BondOrder : std::uint8_t { Single, Double, Triple, Aromatic };

// Bond order in half-units: single 2, double 4, triple 6, aromatic 3.
int half_order(BondOrder o);
std::string_view bond_symbol(BondOrder o);

struct Atom {
  Element element = Element::C;
  int formal_charge = 0;
  int explicit_h = 0;
  int implicit_h = 0;
  bool aromatic = false;
  bool bracket = false;
  std::size_t index = 0;

  int total_h() const { return explicit_h + implicit_h; }
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  BondOrder order = BondOrder::Single;

  std::size_t other(std::size_t atom) const { return atom == a ? b : a; }
};

struct Neighbor {
  std::size_t atom;
  std::size_t bond;
};

struct MolGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::vector<std::vector<std::size_t>> rings;  // sorted atom indices per basis cycle

  std::size_t atom_count() const { return atoms.size(); }
  std::size_t bond_count() const { return bonds.size(); }
  // Neighbor lists in bond order.
  std::vector<std::vector<Neighbor>> adjacency() const;
  std::optional<std::size_t> find_bond(std::size_t a, std::size_t b) const;
};

class ParseError : public std::runtime_error {
 public:
  enum class Kind {
    EmptyInput,
    InvalidSyntax,
    UnbalancedParenthesis,
    UnclosedRingBond,
    UnknownElement,
    InvalidBracketAtom,
    MultiComponentInput,
    ValenceViolation,
    UnsupportedSyntax,
    NonRingAromaticAtom,
  };

  ParseError(Kind kind, std::size_t offset, const std::string& detail);
  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }
  const std::string& detail() const { return detail_; }

 private:
  Kind kind_;
  std::size_t offset_;
  std::string detail_;
};

std::string_view parse_error_name(ParseError::Kind kind);

struct ParseOptions {
  // Map unrecognized bracket elements to Element::Unk instead of failing.
  bool allow_unknown = false;
};

MolGraph parse_smiles(std::string_view text, const ParseOptions& options = {});

// Minimum cycle basis as sorted atom sets, ordered by (size, atoms).
std::vector<std::vector<std::size_t>> perceive_rings(const MolGraph& graph);

// Cycles that are not a GF(2) sum of strictly shorter cycles. Unlike a single
// minimum cycle basis this set does not depend on atom numbering.
std::vector<std::vector<std::size_t>> relevant_cycles(const MolGraph& graph);

// Bonds lying on at least one cycle.
std::vector<bool> ring_bonds(const MolGraph& graph);

class InvalidPermutation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// perm[old_index] = new_index.
MolGraph permute_graph(const MolGraph& graph, const std::vector<std::size_t>& perm);

// Isomorphism-invariant hash from iterated neighborhood refinement.
std::uint64_t canonical_hash(const MolGraph& graph);

struct SmilesRecord {
  std::string id;
  std::string smiles;
  std::size_t line = 0;
};

// Reads `SMILES` or `ID<TAB>SMILES` lines. Blank lines and '#' comments are
// skipped; lines without an id get "L<line>".
std::vector<SmilesRecord> read_smiles_records(std::istream& in);

}  // namespace vqatom::chem
