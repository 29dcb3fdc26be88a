#include "vqatom/eval/split.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>

#include "vqatom/util/rng.hpp"

namespace vqatom::eval {

namespace {

std::map<std::string_view, std::size_t> kmers(std::string_view s) {
  std::map<std::string_view, std::size_t> out;
  if (s.size() < 3) {
    if (!s.empty()) ++out[s];
    return out;
  }
  for (std::size_t i = 0; i + 3 <= s.size(); ++i) ++out[s.substr(i, 3)];
  return out;
}

struct DisjointSet {
  std::vector<std::size_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

double kmer_similarity(std::string_view a, std::string_view b) {
  const auto ka = kmers(a), kb = kmers(b);
  std::size_t inter = 0, uni = 0;
  auto ia = ka.begin(), ib = kb.begin();
  while (ia != ka.end() || ib != kb.end()) {
    if (ib == kb.end() || (ia != ka.end() && ia->first < ib->first)) {
      uni += ia->second;
      ++ia;
    } else if (ia == ka.end() || ib->first < ia->first) {
      uni += ib->second;
      ++ib;
    } else {
      inter += std::min(ia->second, ib->second);
      uni += std::max(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::vector<std::string>> cluster_proteins(const std::map<std::string, std::string>& sequences,
                                                       double threshold) {
  std::vector<const std::pair<const std::string, std::string>*> items;
  for (const auto& kv : sequences) items.push_back(&kv);
  DisjointSet ds(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      if (ds.find(i) == ds.find(j)) continue;
      if (kmer_similarity(items[i]->second, items[j]->second) >= threshold) ds.unite(i, j);
    }
  }
  std::map<std::size_t, std::vector<std::string>> by_root;
  for (std::size_t i = 0; i < items.size(); ++i) by_root[ds.find(i)].push_back(items[i]->first);
  std::vector<std::vector<std::string>> out;
  for (auto& [root, members] : by_root) out.push_back(std::move(members));
  return out;
}

std::string_view split_name(std::size_t split) {
  static constexpr std::string_view names[] = {"train", "validation", "test"};
  return split < kSplitCount ? names[split] : "unknown";
}

ColdSplit protein_cold_split(const std::map<std::string, std::string>& sequences,
                             const std::vector<SplitPair>& pairs, double threshold,
                             std::array<double, kSplitCount> ratios, std::uint64_t seed) {
  double ratio_sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw EvalError(EvalError::Kind::BadRatios, "split ratios must be non-negative");
    ratio_sum += r;
  }
  if (std::abs(ratio_sum - 1.0) > 1e-9) throw EvalError(EvalError::Kind::BadRatios, "split ratios must sum to 1");
  std::set<std::string> used;
  for (const SplitPair& p : pairs) {
    if (!sequences.count(p.protein_id)) {
      throw EvalError(EvalError::Kind::MissingSequence, "no sequence for protein " + p.protein_id);
    }
    used.insert(p.protein_id);
  }
  std::map<std::string, std::string> relevant;
  for (const auto& id : used) relevant.emplace(id, sequences.at(id));

  ColdSplit out;
  out.threshold = threshold;
  out.clusters = cluster_proteins(relevant, threshold);
  const std::size_t nc = out.clusters.size();
  if (nc < kSplitCount) {
    throw EvalError(EvalError::Kind::InsufficientClusters,
                    "protein-cold split needs at least 3 clusters, found " + std::to_string(nc));
  }
  std::map<std::string, std::size_t> cluster_of;
  for (std::size_t c = 0; c < nc; ++c) {
    for (const auto& id : out.clusters[c]) cluster_of[id] = c;
  }
  std::vector<std::size_t> cluster_pairs(nc, 0);
  out.pair_cluster.resize(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.pair_cluster[i] = cluster_of.at(pairs[i].protein_id);
    ++cluster_pairs[out.pair_cluster[i]];
  }

  std::vector<std::size_t> order(nc);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SeededRng rng(seed);
  rng.shuffle(order.begin(), order.end());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cluster_pairs[a] > cluster_pairs[b]; });

  std::array<double, kSplitCount> target{};
  for (std::size_t s = 0; s < kSplitCount; ++s) target[s] = ratios[s] * static_cast<double>(pairs.size());
  std::array<std::size_t, kSplitCount> assigned{}, clusters_in{};
  std::vector<std::size_t> cluster_split(nc);
  for (std::size_t k = 0; k < nc; ++k) {
    const std::size_t c = order[k];
    const std::size_t remaining = nc - k;
    const auto empty = static_cast<std::size_t>(std::count(clusters_in.begin(), clusters_in.end(), 0u));
    std::size_t best = kSplitCount;
    double best_deficit = -INFINITY;
    for (std::size_t s = 0; s < kSplitCount; ++s) {
      if (remaining <= empty && clusters_in[s] != 0) continue;  // keep every split non-empty
      const double deficit = target[s] - static_cast<double>(assigned[s]);
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = s;
      }
    }
    cluster_split[c] = best;
    assigned[best] += cluster_pairs[c];
    ++clusters_in[best];
  }

  out.pair_split.resize(pairs.size());
  std::array<std::set<std::string>, kSplitCount> proteins, ligands;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::size_t s = cluster_split[out.pair_cluster[i]];
    out.pair_split[i] = s;
    out.pairs[s].push_back(i);
    out.stats[s].pairs += 1;
    out.stats[s].positives += pairs[i].label == 1;
    proteins[s].insert(pairs[i].protein_id);
    ligands[s].insert(pairs[i].ligand_id);
  }
  for (std::size_t s = 0; s < kSplitCount; ++s) {
    out.stats[s].proteins = proteins[s].size();
    out.stats[s].ligands = ligands[s].size();
    for (std::size_t t = s + 1; t < kSplitCount; ++t) {
      for (const auto& id : proteins[s]) {
        if (proteins[t].count(id)) {
          throw std::logic_error("protein " + id + " appears in both " + std::string(split_name(s)) + " and " +
                                 std::string(split_name(t)));
        }
      }
    }
  }
  return out;
}

std::string split_summary(const ColdSplit& split) {
  std::string out;
  char buf[256];
  for (std::size_t s = 0; s < kSplitCount; ++s) {
    const SplitStats& st = split.stats[s];
    std::snprintf(buf, sizeof buf, "%s: %zu pairs, %.1f%% positive, %zu proteins, %zu ligands\n",
                  std::string(split_name(s)).c_str(), st.pairs, 100.0 * st.positive_rate(), st.proteins, st.ligands);
    out += buf;
  }
  return out;
}

void write_split_manifest(std::ostream& out, const ColdSplit& split) {
  out << "pair_index\tsplit\tprotein_cluster\n";
  for (std::size_t i = 0; i < split.pair_split.size(); ++i) {
    out << i << '\t' << split_name(split.pair_split[i]) << '\t' << split.pair_cluster[i] << '\n';
  }
}

}  // namespace vqatom::eval
