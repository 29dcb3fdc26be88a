#include <algorithm>
#include <array>
#include <istream>
#include <map>

#include "vqatom/chem/mol.hpp"
#include "vqatom/util/rng.hpp"

namespace vqatom::chem {

namespace {

struct ElementInfo {
  std::string_view symbol;
  int valence;
  int max_valence;
};

constexpr std::array<ElementInfo, kElementCount> kElements{{
    {"B", 3, 3},
    {"C", 4, 4},
    {"N", 3, 5},
    {"O", 2, 2},
    {"P", 3, 5},
    {"S", 2, 6},
    {"F", 1, 1},
    {"Cl", 1, 1},
    {"Br", 1, 1},
    {"I", 1, 1},
    {"Si", 4, 4},
    {"Se", 2, 6},
    {"*", 0, 0},
}};

}  // namespace

std::string_view element_symbol(Element e) { return kElements[static_cast<std::size_t>(e)].symbol; }

std::optional<Element> element_from_symbol(std::string_view symbol) {
  for (std::size_t i = 0; i + 1 < kElementCount; ++i) {
    if (kElements[i].symbol == symbol) return static_cast<Element>(i);
  }
  return std::nullopt;
}

bool is_halogen(Element e) {
  return e == Element::F || e == Element::Cl || e == Element::Br || e == Element::I;
}

int default_valence(Element e, int formal_charge) {
  if (e == Element::N && formal_charge > 0) return 4;
  return kElements[static_cast<std::size_t>(e)].valence;
}

int max_valence(Element e) { return kElements[static_cast<std::size_t>(e)].max_valence; }

int half_order(BondOrder o) {
  switch (o) {
    case BondOrder::Single: return 2;
    case BondOrder::Double: return 4;
    case BondOrder::Triple: return 6;
    case BondOrder::Aromatic: return 3;
  }
  return 0;
}

std::string_view bond_symbol(BondOrder o) {
  switch (o) {
    case BondOrder::Single: return "-";
    case BondOrder::Double: return "=";
    case BondOrder::Triple: return "#";
    case BondOrder::Aromatic: return ":";
  }
  return "?";
}

std::vector<std::vector<Neighbor>> MolGraph::adjacency() const {
  std::vector<std::vector<Neighbor>> adj(atoms.size());
  for (std::size_t i = 0; i < bonds.size(); ++i) {
    adj[bonds[i].a].push_back({bonds[i].b, i});
    adj[bonds[i].b].push_back({bonds[i].a, i});
  }
  return adj;
}

std::optional<std::size_t> MolGraph::find_bond(std::size_t a, std::size_t b) const {
  for (std::size_t i = 0; i < bonds.size(); ++i) {
    if ((bonds[i].a == a && bonds[i].b == b) || (bonds[i].a == b && bonds[i].b == a)) return i;
  }
  return std::nullopt;
}

MolGraph permute_graph(const MolGraph& g, const std::vector<std::size_t>& perm) {
  const std::size_t n = g.atoms.size();
  if (perm.size() != n) {
    throw InvalidPermutation("permutation has " + std::to_string(perm.size()) + " entries for " +
                             std::to_string(n) + " atoms");
  }
  std::vector<bool> hit(n, false);
  for (std::size_t p : perm) {
    if (p >= n || hit[p]) throw InvalidPermutation("permutation is not a bijection");
    hit[p] = true;
  }
  MolGraph out;
  out.atoms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.atoms[perm[i]] = g.atoms[i];
    out.atoms[perm[i]].index = perm[i];
  }
  out.bonds.reserve(g.bonds.size());
  for (const Bond& b : g.bonds) out.bonds.push_back({perm[b.a], perm[b.b], b.order});
  for (const auto& ring : g.rings) {
    std::vector<std::size_t> r;
    for (std::size_t a : ring) r.push_back(perm[a]);
    std::sort(r.begin(), r.end());
    out.rings.push_back(std::move(r));
  }
  std::sort(out.rings.begin(), out.rings.end(), [](const auto& x, const auto& y) {
    return x.size() != y.size() ? x.size() < y.size() : x < y;
  });
  return out;
}

std::uint64_t canonical_hash(const MolGraph& g) {
  const std::size_t n = g.atoms.size();
  const auto adj = g.adjacency();
  std::vector<std::uint64_t> label(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Atom& a = g.atoms[i];
    std::uint64_t h = mix64(static_cast<std::uint64_t>(a.element) + 1);
    h = mix64(h ^ static_cast<std::uint64_t>(a.formal_charge + 16));
    h = mix64(h ^ static_cast<std::uint64_t>(a.total_h() * 131 + (a.aromatic ? 7 : 0)));
    label[i] = mix64(h ^ adj[i].size());
  }
  for (std::size_t round = 0; round < n + 1; ++round) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::uint64_t> env;
      for (const Neighbor& x : adj[i]) {
        env.push_back(mix64(label[x.atom] ^ static_cast<std::uint64_t>(half_order(g.bonds[x.bond].order))));
      }
      std::sort(env.begin(), env.end());
      std::uint64_t h = label[i];
      for (std::uint64_t e : env) h = mix64(h ^ e);
      next[i] = h;
    }
    label = std::move(next);
  }
  std::sort(label.begin(), label.end());
  std::uint64_t h = mix64(n ^ (g.bonds.size() << 32));
  for (std::uint64_t l : label) h = mix64(h ^ l);
  return h;
}

std::vector<SmilesRecord> read_smiles_records(std::istream& in) {
  std::vector<SmilesRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\n')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    SmilesRecord rec;
    rec.line = lineno;
    if (auto tab = line.find('\t'); tab != std::string::npos) {
      rec.id = line.substr(0, tab);
      rec.smiles = line.substr(tab + 1);
    } else {
      rec.id = "L" + std::to_string(lineno);
      rec.smiles = line;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace vqatom::chem
