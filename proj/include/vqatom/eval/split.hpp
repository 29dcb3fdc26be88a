#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vqatom/eval/metrics.hpp"

namespace vqatom::eval {

// Multiset Jaccard similarity of overlapping 3-mers (a sequence shorter than
// 3 counts as one k-mer). Stands in for sequence identity.
double kmer_similarity(std::string_view a, std::string_view b);

// Single-linkage clusters of protein ids: two proteins share a cluster when a
// chain of pairs with similarity >= threshold connects them. Clusters are
// ordered by their smallest id; members are sorted.
std::vector<std::vector<std::string>> cluster_proteins(const std::map<std::string, std::string>& sequences,
                                                       double threshold);

struct SplitPair {
  std::string ligand_id;
  std::string protein_id;
  int label = 0;
};

enum SplitIndex : std::size_t { kTrain, kValidation, kTest, kSplitCount };
std::string_view split_name(std::size_t split);

struct SplitStats {
  std::size_t pairs = 0;
  std::size_t positives = 0;
  std::size_t proteins = 0;
  std::size_t ligands = 0;
  double positive_rate() const { return pairs == 0 ? 0.0 : static_cast<double>(positives) / pairs; }
};

struct ColdSplit {
  std::array<std::vector<std::size_t>, kSplitCount> pairs;  // pair indices
  std::vector<std::size_t> pair_cluster;                     // cluster of each pair's protein
  std::vector<std::size_t> pair_split;
  std::vector<std::vector<std::string>> clusters;
  std::array<SplitStats, kSplitCount> stats;
  double threshold = 0.4;
};

// Clusters proteins, then assigns whole clusters to train/validation/test,
// largest cluster first, each to the split furthest below its target pair
// count. Every split receives at least one cluster. The seed orders clusters
// of equal size. Protein disjointness is checked before returning.
ColdSplit protein_cold_split(const std::map<std::string, std::string>& sequences,
                             const std::vector<SplitPair>& pairs, double threshold,
                             std::array<double, kSplitCount> ratios, std::uint64_t seed);

// One line per split in the style "train: 35747 pairs, 32.5% positive, ...".
std::string split_summary(const ColdSplit& split);
// TSV: pair_index, split, protein_cluster.
void write_split_manifest(std::ostream& out, const ColdSplit& split);

}  // namespace vqatom::eval
