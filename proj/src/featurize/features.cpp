#include "vqatom/featurize/features.hpp"

#include <algorithm>
#include <stdexcept>

namespace vqatom::feat {

using chem::BondOrder;
using chem::Element;
using chem::MolGraph;
using chem::Neighbor;

namespace {

std::vector<Segment> build_schema() {
  const std::vector<std::pair<std::string_view, std::pair<std::size_t, bool>>> parts{
      {"element", {chem::kElementCount, true}},
      {"degree", {7, true}},
      {"formal_charge", {5, true}},
      {"hybridization", {4, true}},
      {"aromatic", {1, false}},
      {"in_ring", {1, false}},
      {"hydrogens", {5, true}},
      {"functional_groups", {kFunctionalGroupCount, false}},
      {"donor", {1, false}},
      {"acceptor", {1, false}},
      {"ring_size", {7, true}},
      {"aromatic_neighbors", {5, true}},
      {"fused_ring", {1, false}},
      {"single_bonds", {5, true}},
      {"double_bonds", {5, true}},
      {"triple_bonds", {5, true}},
      {"aromatic_bonds", {5, true}},
  };
  std::vector<Segment> out;
  std::size_t offset = 0;
  for (const auto& [name, spec] : parts) {
    out.push_back({name, offset, spec.first, spec.second});
    offset += spec.first;
  }
  if (offset != kAtomFeatureWidth) throw std::logic_error("atom feature schema width mismatch");
  return out;
}

std::size_t clip(int v, int lo, int hi) { return static_cast<std::size_t>(std::clamp(v, lo, hi) - lo); }

struct Context {
  const MolGraph& g;
  std::vector<std::vector<Neighbor>> adj;

  explicit Context(const MolGraph& graph) : g(graph), adj(graph.adjacency()) {}

  Element el(std::size_t a) const { return g.atoms[a].element; }
  BondOrder order(const Neighbor& n) const { return g.bonds[n.bond].order; }

  bool is_carbonyl_carbon(std::size_t c) const {
    if (el(c) != Element::C) return false;
    for (const Neighbor& n : adj[c]) {
      if (el(n.atom) == Element::O && order(n) == BondOrder::Double) return true;
    }
    return false;
  }

  std::size_t count_bonds(std::size_t a, BondOrder o) const {
    std::size_t k = 0;
    for (const Neighbor& n : adj[a]) k += order(n) == o;
    return k;
  }

  bool all_single(std::size_t a) const { return count_bonds(a, BondOrder::Single) == adj[a].size(); }

  bool is_amide_nitrogen(std::size_t a) const {
    if (el(a) != Element::N) return false;
    for (const Neighbor& n : adj[a]) {
      if (order(n) == BondOrder::Single && is_carbonyl_carbon(n.atom)) return true;
    }
    return false;
  }

  bool is_hydroxyl_oxygen(std::size_t a) const {
    return el(a) == Element::O && g.atoms[a].total_h() >= 1 && adj[a].size() == 1 &&
           order(adj[a][0]) == BondOrder::Single;
  }

  bool is_carboxyl_carbon(std::size_t c) const {
    if (!is_carbonyl_carbon(c)) return false;
    for (const Neighbor& n : adj[c]) {
      if (order(n) == BondOrder::Single && is_hydroxyl_oxygen(n.atom)) return true;
    }
    return false;
  }

  bool is_nitro_nitrogen(std::size_t a) const {
    if (el(a) != Element::N || g.atoms[a].total_h() > 0) return false;
    std::size_t oxygens = 0, double_o = 0;
    for (const Neighbor& n : adj[a]) {
      if (el(n.atom) != Element::O) continue;
      ++oxygens;
      double_o += order(n) == BondOrder::Double;
    }
    return oxygens >= 2 && double_o >= 1;
  }

  bool is_amide_carbon(std::size_t c) const {
    if (!is_carbonyl_carbon(c)) return false;
    for (const Neighbor& n : adj[c]) {
      if (order(n) == BondOrder::Single && el(n.atom) == Element::N) return true;
    }
    return false;
  }

  GroupFlags flags(std::size_t a) const {
    GroupFlags f{};
    const auto& atom = g.atoms[a];
    const Element e = atom.element;

    f[kHydroxyl] = is_hydroxyl_oxygen(a);
    f[kCarbonyl] = is_carbonyl_carbon(a);
    f[kCarboxyl] = is_carboxyl_carbon(a);
    f[kAmide] = is_amide_nitrogen(a) || is_amide_carbon(a);
    f[kNitro] = is_nitro_nitrogen(a);
    f[kHalogenAttached] = chem::is_halogen(e);
    for (const Neighbor& n : adj[a]) {
      const bool dbl = order(n) == BondOrder::Double;
      if (e == Element::O) {
        if (dbl && is_carbonyl_carbon(n.atom)) f[kCarbonyl] = true;
        if (is_carboxyl_carbon(n.atom) && (dbl || is_hydroxyl_oxygen(a))) f[kCarboxyl] = true;
        if (dbl && is_amide_carbon(n.atom)) f[kAmide] = true;
        if (is_nitro_nitrogen(n.atom)) f[kNitro] = true;
      }
      if (order(n) == BondOrder::Triple &&
          ((e == Element::C && el(n.atom) == Element::N) || (e == Element::N && el(n.atom) == Element::C))) {
        f[kNitrile] = true;
      }
      if (chem::is_halogen(el(n.atom))) f[kHalogenAttached] = true;
    }

    if (e == Element::N && !atom.aromatic && all_single(a) && !f[kAmide] && !f[kNitro]) {
      bool carbonyl_neighbor = false;
      for (const Neighbor& n : adj[a]) carbonyl_neighbor = carbonyl_neighbor || is_carbonyl_carbon(n.atom);
      f[kAmine] = !carbonyl_neighbor;
    }
    f[kEther] = e == Element::O && !atom.aromatic && adj[a].size() == 2 && all_single(a) && atom.total_h() == 0 &&
                el(adj[a][0].atom) == Element::C && el(adj[a][1].atom) == Element::C;
    f[kThioGroup] = e == Element::S && !atom.aromatic && all_single(a);
    return f;
  }

  Hybridization hybrid(std::size_t a) const {
    if (adj[a].empty()) return Hybridization::Other;
    const std::size_t doubles = count_bonds(a, BondOrder::Double);
    if (count_bonds(a, BondOrder::Triple) > 0 || doubles >= 2) return Hybridization::SP;
    if (doubles > 0 || g.atoms[a].aromatic) return Hybridization::SP2;
    return Hybridization::SP3;
  }

  bool donor(std::size_t a) const {
    return (el(a) == Element::N || el(a) == Element::O) && g.atoms[a].total_h() >= 1;
  }

  bool acceptor(std::size_t a) const {
    return (el(a) == Element::N || el(a) == Element::O) && g.atoms[a].formal_charge <= 0 && !is_amide_nitrogen(a);
  }
};

std::size_t ring_size_bucket(std::size_t size) {
  if (size == 0) return 0;
  return std::min<std::size_t>(size, 8) - 2;  // 3..8+ -> 1..6
}

}  // namespace

const std::vector<Segment>& atom_schema() {
  static const std::vector<Segment> schema = build_schema();
  return schema;
}

const Segment& segment(std::string_view name) {
  for (const Segment& s : atom_schema()) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("no feature segment named " + std::string(name));
}

GroupFlags functional_group_flags(const MolGraph& graph, std::size_t atom) { return Context(graph).flags(atom); }
Hybridization hybridization(const MolGraph& graph, std::size_t atom) { return Context(graph).hybrid(atom); }
bool is_donor(const MolGraph& graph, std::size_t atom) { return Context(graph).donor(atom); }
bool is_acceptor(const MolGraph& graph, std::size_t atom) { return Context(graph).acceptor(atom); }

MolFeatures featurize_molecule(const MolGraph& g) {
  const Context ctx(g);
  const std::size_t n = g.atoms.size();
  const auto cycles = chem::relevant_cycles(g);
  const auto ring_bond = chem::ring_bonds(g);

  std::vector<std::size_t> smallest(n, 0), memberships(n, 0);
  for (const auto& c : cycles) {
    for (std::size_t a : c) {
      ++memberships[a];
      if (smallest[a] == 0 || c.size() < smallest[a]) smallest[a] = c.size();
    }
  }

  auto seg = [](std::string_view name) { return segment(name).offset; };
  const std::size_t o_element = seg("element"), o_degree = seg("degree"), o_charge = seg("formal_charge"),
                    o_hybrid = seg("hybridization"), o_arom = seg("aromatic"), o_ring = seg("in_ring"),
                    o_h = seg("hydrogens"), o_fg = seg("functional_groups"), o_donor = seg("donor"),
                    o_acceptor = seg("acceptor"), o_ring_size = seg("ring_size"),
                    o_arom_nbr = seg("aromatic_neighbors"), o_fused = seg("fused_ring"),
                    o_single = seg("single_bonds");

  MolFeatures out;
  out.atoms.assign(n, std::vector<double>(kAtomFeatureWidth, 0.0));
  for (std::size_t a = 0; a < n; ++a) {
    auto& v = out.atoms[a];
    const auto& atom = g.atoms[a];
    v[o_element + static_cast<std::size_t>(atom.element)] = 1.0;
    v[o_degree + clip(static_cast<int>(ctx.adj[a].size()), 0, 6)] = 1.0;
    v[o_charge + clip(atom.formal_charge, -2, 2)] = 1.0;
    v[o_hybrid + static_cast<std::size_t>(ctx.hybrid(a))] = 1.0;
    v[o_arom] = atom.aromatic ? 1.0 : 0.0;
    v[o_ring] = smallest[a] > 0 ? 1.0 : 0.0;
    v[o_h + clip(atom.total_h(), 0, 4)] = 1.0;
    const GroupFlags f = ctx.flags(a);
    for (std::size_t k = 0; k < kFunctionalGroupCount; ++k) v[o_fg + k] = f[k] ? 1.0 : 0.0;
    v[o_donor] = ctx.donor(a) ? 1.0 : 0.0;
    v[o_acceptor] = ctx.acceptor(a) ? 1.0 : 0.0;
    v[o_ring_size + ring_size_bucket(smallest[a])] = 1.0;
    int aromatic_nbrs = 0;
    for (const Neighbor& nb : ctx.adj[a]) aromatic_nbrs += g.atoms[nb.atom].aromatic;
    v[o_arom_nbr + clip(aromatic_nbrs, 0, 4)] = 1.0;
    v[o_fused] = memberships[a] >= 2 ? 1.0 : 0.0;
    for (std::size_t t = 0; t < 4; ++t) {
      const int count = static_cast<int>(ctx.count_bonds(a, static_cast<BondOrder>(t)));
      v[o_single + 5 * t + clip(count, 0, 4)] = 1.0;
    }
  }

  out.bonds.reserve(g.bonds.size());
  for (std::size_t b = 0; b < g.bonds.size(); ++b) {
    std::vector<double> v(kBondFeatureWidth, 0.0);
    v[static_cast<std::size_t>(g.bonds[b].order)] = 1.0;
    v[4] = ring_bond[b] ? 1.0 : 0.0;
    v[5] = g.bonds[b].order == BondOrder::Aromatic ? 1.0 : 0.0;
    out.bonds.push_back(std::move(v));
    out.bond_atoms.emplace_back(g.bonds[b].a, g.bonds[b].b);
  }
  return out;
}

}  // namespace vqatom::feat
