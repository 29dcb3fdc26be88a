#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vqatom::eval {

class EvalError : public std::runtime_error {
 public:
  enum class Kind { DegenerateLabels, BadFraction, LengthMismatch, NonFiniteScore, MissingSequence,
                    InsufficientClusters, BadRatios, BadInput };
  EvalError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Mann-Whitney AUROC with tied scores counting one half.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Size of the top slice: ceil(fraction * n), at least 1.
std::size_t top_count(double fraction, std::size_t n);

// Positives among the top ceil(fraction * n) scores (descending, ties by input
// order) divided by that count.
double hit_at(std::span<const double> scores, std::span<const int> labels, double fraction);
// hit_at divided by the overall positive rate; 1.0 is random ranking.
double ef_at(std::span<const double> scores, std::span<const int> labels, double fraction);

inline constexpr double kDefaultThreshold = 12.1;
// 1 when score >= threshold.
int binarize(double score, double threshold = kDefaultThreshold);

struct RankingMetrics {
  double auroc = 0.0;
  std::map<double, double> ef;
  std::map<double, double> hit;
  std::size_t n = 0;
  double base_rate = 0.0;
};

// ef = (top-m positives / m) / base_rate, and hit = ef * base_rate, so the
// reported pair satisfies the identity exactly. hit then differs from
// hit_at by at most one ulp.
RankingMetrics ranking_metrics(std::span<const double> scores, std::span<const int> labels,
                               std::span<const double> fractions = std::vector<double>{0.01, 0.05, 0.10});

// {"auroc":..,"ef":{"0.01":..},"hit":{..},"n":..,"base_rate":..}
std::string metrics_json(const RankingMetrics& m);
void write_metrics_csv(std::ostream& out, const RankingMetrics& m);

// Fraction key as printed in reports: 0.01, 0.05, 0.10.
std::string fraction_key(double fraction);

}  // namespace vqatom::eval
