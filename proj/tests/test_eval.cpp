#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vqatom/eval/metrics.hpp"
#include "vqatom/eval/split.hpp"
#include "vqatom/util/rng.hpp"

using namespace vqatom;
using namespace vqatom::eval;

namespace {

double pairwise_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      den += 1.0;
      if (s[i] > s[j]) num += 1.0;
      if (s[i] == s[j]) num += 0.5;
    }
  }
  return num / den;
}

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

Instance random_instance(SeededRng& rng, bool ties) {
  Instance in;
  std::size_t n = 2 + rng.below(49);
  for (std::size_t i = 0; i < n; ++i) {
    in.scores.push_back(ties ? static_cast<double>(rng.below(4)) : rng.normal());
    in.labels.push_back(rng.bernoulli(0.3) ? 1 : 0);
  }
  in.labels[0] = 1;
  in.labels[1] = 0;
  return in;
}

std::string random_protein(SeededRng& rng, std::size_t len) {
  static const std::string aa = "ACDEFGHIKLMNPQRSTVWY";
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += aa[rng.below(aa.size())];
  return s;
}

}  // namespace

TEST(Auroc, ThreeSampleFixture) {
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 0, 1}), 0.5);
}

TEST(Auroc, SeparatedAndAllTied) {
  EXPECT_EQ(auroc(std::vector<double>{3, 2, 1, 0}, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(auroc(std::vector<double>{0, 1, 2, 3}, std::vector<int>{1, 1, 0, 0}), 0.0);
  EXPECT_EQ(auroc(std::vector<double>(7, 0.25), std::vector<int>{1, 0, 1, 0, 0, 1, 0}), 0.5);
}

TEST(Auroc, MatchesPairwiseOracle) {
  SeededRng rng(11);
  for (int t = 0; t < 200; ++t) {
    Instance in = random_instance(rng, t % 2 == 0);
    EXPECT_EQ(auroc(in.scores, in.labels), pairwise_auroc(in.scores, in.labels)) << "instance " << t;
  }
}

TEST(Auroc, Errors) {
  try {
    auroc(std::vector<double>{1, 2}, std::vector<int>{1, 1});
    FAIL();
  } catch (const EvalError& e) {
    EXPECT_EQ(e.kind(), EvalError::Kind::DegenerateLabels);
  }
  EXPECT_THROW(auroc(std::vector<double>{1, 2}, std::vector<int>{1}), EvalError);
  EXPECT_THROW(auroc(std::vector<double>{1, NAN}, std::vector<int>{1, 0}), EvalError);
}

TEST(Enrichment, TopTenPercentExample) {
  std::vector<double> s{0.95, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.05};
  std::vector<int> y{1, 0, 0, 0, 0, 0, 0, 0, 0, 1};
  EXPECT_EQ(top_count(0.10, 10), 1u);
  EXPECT_EQ(hit_at(s, y, 0.10), 1.0);
  EXPECT_EQ(ef_at(s, y, 0.10), 5.0);
}

TEST(Enrichment, TopCountUsesCeiling) {
  EXPECT_EQ(top_count(0.01, 1), 1u);
  EXPECT_EQ(top_count(0.01, 150), 2u);
  EXPECT_EQ(top_count(0.07, 100), 7u);
  EXPECT_EQ(top_count(0.05, 4036), 202u);
  EXPECT_EQ(top_count(1.0, 9), 9u);
  EXPECT_THROW(top_count(0.0, 10), EvalError);
  EXPECT_THROW(top_count(1.5, 10), EvalError);
}

TEST(Enrichment, TiesResolvedByInputOrder) {
  std::vector<double> s{1, 1, 1, 1};
  EXPECT_EQ(hit_at(s, std::vector<int>{1, 0, 0, 0}, 0.25), 1.0);
  EXPECT_EQ(hit_at(s, std::vector<int>{0, 1, 0, 0}, 0.25), 0.0);
}

TEST(Enrichment, RandomRankingIsOne) {
  std::vector<double> s(100, 0.0);
  std::vector<int> y(100);
  for (std::size_t i = 0; i < 100; ++i) y[i] = i % 4 == 0;
  EXPECT_DOUBLE_EQ(ef_at(s, y, 1.0), 1.0);
}

TEST(Enrichment, HitEqualsEfTimesBase) {
  SeededRng rng(5);
  std::vector<double> fractions{0.01, 0.05, 0.10, 0.2, 0.33};
  for (int t = 0; t < 300; ++t) {
    Instance in = random_instance(rng, t % 3 == 0);
    RankingMetrics m = ranking_metrics(in.scores, in.labels, fractions);
    for (double f : fractions) {
      const double hit = m.hit.at(f);
      EXPECT_EQ(hit, m.ef.at(f) * m.base_rate) << "instance " << t << " fraction " << f;
      const double counted = hit_at(in.scores, in.labels, f);
      EXPECT_LE(std::abs(hit - counted), std::nextafter(counted, 2.0) - counted)
          << "instance " << t << " fraction " << f;
      EXPECT_EQ(m.ef.at(f), ef_at(in.scores, in.labels, f));
      EXPECT_GE(m.hit.at(f), 0.0);
      EXPECT_LE(m.hit.at(f), 1.0);
    }
  }
}

TEST(Enrichment, PublishedEnrichmentMatchesPublishedHitRate) {
  // Test-split positive rate 28.9%; EF1 against Hit@1% for four table rows.
  const double base = 0.289;
  const std::pair<double, double> rows[] = {{2.832, 0.820}, {3.051, 0.883}, {2.967, 0.859}, {2.866, 0.829}};
  for (auto [ef, hit] : rows) EXPECT_NEAR(ef * base, hit, 0.005) << "EF1 " << ef;
}

TEST(Enrichment, AddingTopPositiveNeverHurts) {
  // ef itself can fall here (the base rate rises), so the count of top-slice
  // positives is what must not decrease.
  SeededRng rng(8);
  for (int t = 0; t < 200; ++t) {
    Instance in = random_instance(rng, t % 2 == 0);
    RankingMetrics before = ranking_metrics(in.scores, in.labels);
    const double top = *std::max_element(in.scores.begin(), in.scores.end()) + 1.0;
    in.scores.insert(in.scores.begin(), top);
    in.labels.insert(in.labels.begin(), 1);
    RankingMetrics after = ranking_metrics(in.scores, in.labels);
    EXPECT_GE(after.auroc, before.auroc);
    for (const auto& [f, v] : before.hit) {
      const double hits_before = std::round(v * top_count(f, before.n));
      const double hits_after = std::round(after.hit.at(f) * top_count(f, after.n));
      EXPECT_GE(hits_after, hits_before) << f;
    }
  }
}

TEST(Enrichment, PromotingPositiveToTopNeverHurts) {
  SeededRng rng(9);
  for (int t = 0; t < 200; ++t) {
    Instance in = random_instance(rng, t % 2 == 0);
    RankingMetrics before = ranking_metrics(in.scores, in.labels);
    const double top = *std::max_element(in.scores.begin(), in.scores.end()) + 1.0;
    std::size_t pick = rng.below(in.scores.size());
    while (in.labels[pick] != 1) pick = (pick + 1) % in.scores.size();
    in.scores[pick] = top;
    RankingMetrics after = ranking_metrics(in.scores, in.labels);
    EXPECT_GE(after.auroc, before.auroc);
    for (const auto& [f, v] : before.ef) EXPECT_GE(after.ef.at(f), v) << f;
  }
}

TEST(Binarize, Boundary) {
  EXPECT_EQ(binarize(12.1), 1);
  EXPECT_EQ(binarize(12.0999), 0);
  EXPECT_EQ(binarize(15.3), 1);
  EXPECT_EQ(binarize(-3.0), 0);
  EXPECT_EQ(binarize(0.5, 0.5), 1);
  EXPECT_THROW(binarize(INFINITY), EvalError);
}

TEST(MetricsOutput, JsonAndCsv) {
  RankingMetrics m = ranking_metrics(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 0, 1});
  auto j = nlohmann::json::parse(metrics_json(m));
  EXPECT_EQ(j["auroc"].get<double>(), 0.5);
  EXPECT_EQ(j["n"].get<int>(), 3);
  ASSERT_TRUE(j["ef"].contains("0.01"));
  ASSERT_TRUE(j["ef"].contains("0.10"));
  EXPECT_EQ(j["hit"]["0.05"].get<double>(), 1.0);
  EXPECT_EQ(j["ef"]["0.05"].get<double>(), 1.5);
  std::ostringstream csv;
  write_metrics_csv(csv, m);
  EXPECT_EQ(csv.str().substr(0, 23), "metric,value\nauroc,0.5\n");
  EXPECT_NE(csv.str().find("ef@0.10,1.5\n"), std::string::npos);
}

TEST(KmerSimilarity, Basics) {
  EXPECT_EQ(kmer_similarity("ACDEFG", "ACDEFG"), 1.0);
  EXPECT_EQ(kmer_similarity("AAAA", "WWWW"), 0.0);
  // AAA x2 vs AAA x1: 1 / 2.
  EXPECT_EQ(kmer_similarity("AAAA", "AAA"), 0.5);
  EXPECT_EQ(kmer_similarity("ACDEFG", "GFEDCA"), kmer_similarity("GFEDCA", "ACDEFG"));
}

TEST(ColdSplit, ThreeDissimilarProteins) {
  std::map<std::string, std::string> seqs{{"p1", "AAAAAAAAAA"}, {"p2", "CCCCCCCCCC"}, {"p3", "WWWWWWWWWW"}};
  std::vector<SplitPair> pairs{{"l1", "p1", 1}, {"l2", "p2", 0}, {"l3", "p3", 1}};
  ColdSplit cs = protein_cold_split(seqs, pairs, 0.4, {0.8, 0.1, 0.1}, 0);
  EXPECT_EQ(cs.clusters.size(), 3u);
  for (std::size_t s = 0; s < kSplitCount; ++s) EXPECT_EQ(cs.pairs[s].size(), 1u) << split_name(s);
}

TEST(ColdSplit, IdenticalSequencesStayTogether) {
  SeededRng rng(2);
  std::map<std::string, std::string> seqs;
  const std::string twin = random_protein(rng, 60);
  seqs["a"] = twin;
  seqs["b"] = twin;
  for (int i = 0; i < 6; ++i) seqs["u" + std::to_string(i)] = random_protein(rng, 60);
  std::vector<SplitPair> pairs;
  for (const auto& [id, seq] : seqs) {
    for (int l = 0; l < 3; ++l) pairs.push_back({"lig" + std::to_string(l), id, l == 0});
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ColdSplit cs = protein_cold_split(seqs, pairs, 0.4, {0.6, 0.2, 0.2}, seed);
    std::size_t split_a = kSplitCount, split_b = kSplitCount;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (pairs[i].protein_id == "a") split_a = cs.pair_split[i];
      if (pairs[i].protein_id == "b") split_b = cs.pair_split[i];
    }
    EXPECT_EQ(split_a, split_b);
  }
}

TEST(ColdSplit, SyntheticFamilies) {
  SeededRng rng(21);
  std::map<std::string, std::string> seqs;
  std::vector<SplitPair> pairs;
  for (int f = 0; f < 20; ++f) {
    const std::string root = random_protein(rng, 80);
    for (int m = 0; m < 5; ++m) {
      std::string s = root;
      for (int k = 0; k < 3; ++k) s[rng.below(s.size())] = "ACDEFGHIKLMNPQRSTVWY"[rng.below(20)];
      const std::string id = "f" + std::to_string(f) + "m" + std::to_string(m);
      seqs[id] = s;
      for (int l = 0; l < 4; ++l) pairs.push_back({"lig" + std::to_string(rng.below(30)), id, rng.bernoulli(0.3)});
    }
  }
  const std::array<double, kSplitCount> ratios{0.8, 0.1, 0.1};
  ColdSplit cs = protein_cold_split(seqs, pairs, 0.4, ratios, 4);
  ASSERT_EQ(cs.clusters.size(), 20u);
  for (const auto& c : cs.clusters) {
    const std::string fam = c.front().substr(0, c.front().find('m'));
    EXPECT_EQ(c.size(), 5u);
    for (const auto& id : c) EXPECT_EQ(id.substr(0, id.find('m')), fam);
  }
  std::array<std::set<std::string>, kSplitCount> proteins;
  for (std::size_t s = 0; s < kSplitCount; ++s) {
    for (std::size_t i : cs.pairs[s]) proteins[s].insert(pairs[i].protein_id);
    const double cluster_pairs = 20.0;  // 5 proteins x 4 pairs
    EXPECT_LE(std::abs(static_cast<double>(cs.pairs[s].size()) - ratios[s] * pairs.size()), cluster_pairs)
        << split_name(s);
    EXPECT_EQ(cs.stats[s].pairs, cs.pairs[s].size());
  }
  for (std::size_t s = 0; s < kSplitCount; ++s) {
    for (std::size_t t = s + 1; t < kSplitCount; ++t) {
      for (const auto& id : proteins[s]) EXPECT_FALSE(proteins[t].count(id)) << id;
    }
  }
  ColdSplit again = protein_cold_split(seqs, pairs, 0.4, ratios, 4);
  EXPECT_EQ(again.pair_split, cs.pair_split);
  std::ostringstream a, b;
  write_split_manifest(a, cs);
  write_split_manifest(b, again);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "pair_index\tsplit\tprotein_cluster");
}

TEST(ColdSplit, Errors) {
  std::map<std::string, std::string> seqs{{"p1", "AAAAAAAA"}, {"p2", "AAAAAAAA"}, {"p3", "CCCCCCCC"}};
  std::vector<SplitPair> pairs{{"l", "p1", 1}, {"l", "p2", 0}, {"l", "p3", 1}};
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const EvalError& e) {
      return e.kind();
    }
    return EvalError::Kind::BadInput;
  };
  EXPECT_EQ(kind_of([&] { protein_cold_split(seqs, pairs, 0.4, {0.8, 0.1, 0.1}, 0); }),
            EvalError::Kind::InsufficientClusters);
  pairs.push_back({"l", "missing", 0});
  EXPECT_EQ(kind_of([&] { protein_cold_split(seqs, pairs, 0.4, {0.8, 0.1, 0.1}, 0); }),
            EvalError::Kind::MissingSequence);
  EXPECT_EQ(kind_of([&] { protein_cold_split(seqs, pairs, 0.4, {0.8, 0.1, 0.2}, 0); }), EvalError::Kind::BadRatios);
}
