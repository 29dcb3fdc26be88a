#include "vqatom/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include <json.hpp>

namespace vqatom::eval {

namespace {

void validate(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw EvalError(EvalError::Kind::LengthMismatch, std::to_string(scores.size()) + " scores for " +
                                                         std::to_string(labels.size()) + " labels");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw EvalError(EvalError::Kind::NonFiniteScore, "non-finite score");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw EvalError(EvalError::Kind::BadInput, "labels must be 0 or 1");
  }
}

std::size_t positives(std::span<const int> labels) {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t positives_in_top(std::span<const double> scores, std::span<const int> labels, std::size_t m) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m; ++i) hits += labels[order[i]] == 1;
  return hits;
}

void check_fraction(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw EvalError(EvalError::Kind::BadFraction, "fraction must lie in (0, 1]");
  }
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  validate(scores, labels);
  const std::size_t n = scores.size();
  const std::size_t p = positives(labels);
  if (p == 0 || p == n) {
    throw EvalError(EvalError::Kind::DegenerateLabels, "auroc needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum of positives keeps tied (half-integer) ranks integral.
  unsigned long long twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const unsigned long long twice_avg_rank = (i + 1) + j;  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) twice_rank_sum += twice_avg_rank;
    }
    i = j;
  }
  const unsigned long long twice_u = twice_rank_sum - static_cast<unsigned long long>(p) * (p + 1);
  const double neg = static_cast<double>(n - p);
  return (static_cast<double>(twice_u) / 2.0) / (static_cast<double>(p) * neg);
}

std::size_t top_count(double fraction, std::size_t n) {
  check_fraction(fraction);
  // Guard against products such as 0.07 * 100 = 7.000000000000001.
  const double raw = fraction * static_cast<double>(n);
  std::size_t m = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::clamp<std::size_t>(m, 1, std::max<std::size_t>(n, 1));
}

double hit_at(std::span<const double> scores, std::span<const int> labels, double fraction) {
  validate(scores, labels);
  if (positives(labels) == 0) throw EvalError(EvalError::Kind::DegenerateLabels, "hit_at needs a positive");
  const std::size_t m = top_count(fraction, scores.size());
  return static_cast<double>(positives_in_top(scores, labels, m)) / static_cast<double>(m);
}

double ef_at(std::span<const double> scores, std::span<const int> labels, double fraction) {
  const double hit = hit_at(scores, labels, fraction);
  const double base = static_cast<double>(positives(labels)) / static_cast<double>(labels.size());
  return hit / base;
}

int binarize(double score, double threshold) {
  if (!std::isfinite(score)) throw EvalError(EvalError::Kind::NonFiniteScore, "cannot binarize a non-finite score");
  return score >= threshold ? 1 : 0;
}

RankingMetrics ranking_metrics(std::span<const double> scores, std::span<const int> labels,
                               std::span<const double> fractions) {
  RankingMetrics m;
  m.auroc = auroc(scores, labels);
  m.n = scores.size();
  m.base_rate = static_cast<double>(positives(labels)) / static_cast<double>(m.n);
  for (double f : fractions) {
    m.ef[f] = hit_at(scores, labels, f) / m.base_rate;
    m.hit[f] = m.ef[f] * m.base_rate;
  }
  return m;
}

std::string fraction_key(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction);
  return buf;
}

std::string metrics_json(const RankingMetrics& m) {
  nlohmann::ordered_json j;
  j["auroc"] = m.auroc;
  nlohmann::ordered_json ef = nlohmann::ordered_json::object(), hit = nlohmann::ordered_json::object();
  for (const auto& [f, v] : m.ef) ef[fraction_key(f)] = v;
  for (const auto& [f, v] : m.hit) hit[fraction_key(f)] = v;
  j["ef"] = ef;
  j["hit"] = hit;
  j["n"] = m.n;
  j["base_rate"] = m.base_rate;
  return j.dump();
}

void write_metrics_csv(std::ostream& out, const RankingMetrics& m) {
  auto num = [](double v) { return nlohmann::json(v).dump(); };
  out << "metric,value\n";
  out << "auroc," << num(m.auroc) << '\n';
  for (const auto& [f, v] : m.ef) out << "ef@" << fraction_key(f) << ',' << num(v) << '\n';
  for (const auto& [f, v] : m.hit) out << "hit@" << fraction_key(f) << ',' << num(v) << '\n';
  out << "n," << m.n << '\n';
  out << "base_rate," << num(m.base_rate) << '\n';
}

}  // namespace vqatom::eval
