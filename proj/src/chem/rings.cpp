#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>

#include "vqatom/chem/mol.hpp"

namespace vqatom::chem {

namespace {

// GF(2) vector over bond indices.
using EdgeSet = std::vector<std::uint64_t>;

struct Cycle {
  std::vector<std::size_t> atoms;  // sorted
  EdgeSet edges;
};

bool cycle_less(const Cycle& x, const Cycle& y) {
  if (x.atoms.size() != y.atoms.size()) return x.atoms.size() < y.atoms.size();
  return x.atoms < y.atoms;
}

class Gf2Basis {
 public:
  explicit Gf2Basis(std::size_t bits) : words_((bits + 63) / 64) {}

  // Reduces v in place; returns true when v was independent (and adds it).
  bool insert(EdgeSet v) {
    reduce(v);
    auto pivot = lowest_bit(v);
    if (!pivot) return false;
    rows_[*pivot] = std::move(v);
    return true;
  }

  bool independent(EdgeSet v) const {
    reduce(v);
    return lowest_bit(v).has_value();
  }

  std::size_t rank() const { return rows_.size(); }

 private:
  void reduce(EdgeSet& v) const {
    for (const auto& [bit, row] : rows_) {
      if ((v[bit / 64] >> (bit % 64)) & 1u) {
        for (std::size_t w = 0; w < words_; ++w) v[w] ^= row[w];
      }
    }
  }

  static std::optional<std::size_t> lowest_bit(const EdgeSet& v) {
    for (std::size_t w = 0; w < v.size(); ++w) {
      if (v[w]) return w * 64 + static_cast<std::size_t>(__builtin_ctzll(v[w]));
    }
    return std::nullopt;
  }

  std::size_t words_;
  std::map<std::size_t, EdgeSet> rows_;  // keyed by pivot, iterated ascending
};

Cycle make_cycle(const MolGraph& g, const std::vector<std::size_t>& path_atoms) {
  Cycle c;
  c.edges.assign((g.bonds.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < path_atoms.size(); ++i) {
    const std::size_t a = path_atoms[i];
    const std::size_t b = path_atoms[(i + 1) % path_atoms.size()];
    const std::size_t bond = *g.find_bond(a, b);
    c.edges[bond / 64] |= std::uint64_t{1} << (bond % 64);
  }
  c.atoms = path_atoms;
  std::sort(c.atoms.begin(), c.atoms.end());
  return c;
}

// Every simple cycle, or nullopt when the search exceeds the step budget.
std::optional<std::vector<Cycle>> all_simple_cycles(const MolGraph& g,
                                                     const std::vector<std::vector<Neighbor>>& adj,
                                                     const std::vector<bool>& ring_bond) {
  constexpr std::size_t kStepBudget = 2'000'000;
  std::size_t steps = 0;
  std::vector<Cycle> out;
  std::vector<std::size_t> path;
  std::vector<bool> on_path(g.atoms.size(), false);

  std::function<bool(std::size_t, std::size_t)> dfs = [&](std::size_t start, std::size_t v) {
    if (++steps > kStepBudget) return false;
    for (const Neighbor& n : adj[v]) {
      if (!ring_bond[n.bond]) continue;
      if (n.atom == start && path.size() >= 3 && path[1] < path.back()) {
        out.push_back(make_cycle(g, path));
      } else if (n.atom > start && !on_path[n.atom]) {
        path.push_back(n.atom);
        on_path[n.atom] = true;
        const bool ok = dfs(start, n.atom);
        on_path[n.atom] = false;
        path.pop_back();
        if (!ok) return false;
      }
    }
    return true;
  };

  for (std::size_t s = 0; s < g.atoms.size(); ++s) {
    path = {s};
    on_path[s] = true;
    const bool ok = dfs(s, s);
    on_path[s] = false;
    if (!ok) return std::nullopt;
  }
  return out;
}

// Shortest-path candidate cycles: for each root w and bond (u, v), the union
// of the BFS-tree paths w..u and w..v closed by the bond.
std::vector<Cycle> shortest_path_cycles(const MolGraph& g, const std::vector<std::vector<Neighbor>>& adj) {
  const std::size_t n = g.atoms.size();
  std::vector<Cycle> out;
  std::set<EdgeSet> seen;
  for (std::size_t w = 0; w < n; ++w) {
    std::vector<std::size_t> parent(n, n), depth(n, n);
    std::queue<std::size_t> q;
    depth[w] = 0;
    q.push(w);
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop();
      std::vector<std::size_t> nbrs;
      for (const Neighbor& x : adj[v]) nbrs.push_back(x.atom);
      std::sort(nbrs.begin(), nbrs.end());
      for (std::size_t x : nbrs) {
        if (depth[x] == n) {
          depth[x] = depth[v] + 1;
          parent[x] = v;
          q.push(x);
        }
      }
    }
    auto path_to = [&](std::size_t v) {
      std::vector<std::size_t> p;
      for (; v != w; v = parent[v]) p.push_back(v);
      p.push_back(w);
      std::reverse(p.begin(), p.end());
      return p;
    };
    for (const Bond& b : g.bonds) {
      auto pu = path_to(b.a);
      auto pv = path_to(b.b);
      std::set<std::size_t> su(pu.begin() + 1, pu.end());
      bool disjoint = true;
      for (std::size_t i = 1; i < pv.size(); ++i) disjoint = disjoint && !su.count(pv[i]);
      if (!disjoint || pu.size() + pv.size() - 1 < 3) continue;
      std::vector<std::size_t> cyc = pu;
      for (std::size_t i = pv.size(); i-- > 1;) cyc.push_back(pv[i]);
      Cycle c = make_cycle(g, cyc);
      if (seen.insert(c.edges).second) out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<Cycle> candidate_cycles(const MolGraph& g) {
  const auto adj = g.adjacency();
  const auto ring = ring_bonds(g);
  auto cycles = all_simple_cycles(g, adj, ring);
  std::vector<Cycle> out = cycles ? std::move(*cycles) : shortest_path_cycles(g, adj);
  std::sort(out.begin(), out.end(), cycle_less);
  return out;
}

std::size_t cyclomatic_number(const MolGraph& g) {
  // Parsed graphs are connected.
  return g.bonds.size() + 1 - std::min(g.bonds.size() + 1, g.atoms.size());
}

}  // namespace

std::vector<bool> ring_bonds(const MolGraph& g) {
  const std::size_t n = g.atoms.size();
  const auto adj = g.adjacency();
  std::vector<bool> in_ring(g.bonds.size(), true);
  std::vector<std::size_t> disc(n, 0), low(n, 0);
  std::size_t timer = 0;
  std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t v, std::size_t parent_bond) {
    disc[v] = low[v] = ++timer;
    for (const Neighbor& x : adj[v]) {
      if (x.bond == parent_bond) continue;
      if (disc[x.atom]) {
        low[v] = std::min(low[v], disc[x.atom]);
      } else {
        dfs(x.atom, x.bond);
        low[v] = std::min(low[v], low[x.atom]);
        if (low[x.atom] > disc[v]) in_ring[x.bond] = false;
      }
    }
  };
  for (std::size_t v = 0; v < n; ++v) {
    if (!disc[v]) dfs(v, g.bonds.size());
  }
  return in_ring;
}

std::vector<std::vector<std::size_t>> perceive_rings(const MolGraph& g) {
  const std::size_t target = cyclomatic_number(g);
  std::vector<std::vector<std::size_t>> rings;
  if (target == 0) return rings;
  Gf2Basis basis(g.bonds.size());
  for (Cycle& c : candidate_cycles(g)) {
    if (basis.insert(c.edges)) rings.push_back(std::move(c.atoms));
    if (rings.size() == target) break;
  }
  return rings;
}

std::vector<std::vector<std::size_t>> relevant_cycles(const MolGraph& g) {
  std::vector<std::vector<std::size_t>> out;
  if (cyclomatic_number(g) == 0) return out;
  const auto cycles = candidate_cycles(g);
  Gf2Basis shorter(g.bonds.size());
  std::size_t i = 0;
  while (i < cycles.size()) {
    std::size_t j = i;
    while (j < cycles.size() && cycles[j].atoms.size() == cycles[i].atoms.size()) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (shorter.independent(cycles[k].edges)) out.push_back(cycles[k].atoms);
    }
    for (std::size_t k = i; k < j; ++k) shorter.insert(cycles[k].edges);
    i = j;
  }
  return out;
}

}  // namespace vqatom::chem
