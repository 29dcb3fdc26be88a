#include "vqatom/vq/codebook.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "vqatom/nn/checkpoint.hpp"

namespace vqatom::vq {

using chem::Element;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Normalizes in place; returns false (leaving v untouched) when |v| is ~0.
bool normalize(std::span<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm < 1e-12) return false;
  for (double& x : v) x /= norm;
  return true;
}

std::size_t argmax_dot(const nn::Tensor& centers, std::span<const double> p, double* best_out = nullptr) {
  std::size_t best = 0;
  double best_val = -INFINITY;
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = dot(centers.row(c), p);
    if (d > best_val) {
      best_val = d;
      best = c;
    }
  }
  if (best_out) *best_out = best_val;
  return best;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

ElementTable& Codebook::add_table(Element element, nn::Tensor codes, std::vector<double> counts) {
  if (tables_.count(element)) throw std::invalid_argument("duplicate codebook table for an element");
  if (codes.cols() != latent_dim_ || counts.size() != codes.rows() || codes.rows() == 0) {
    throw nn::ShapeError("codebook table shape " + codes.shape_string() + " does not match latent dim " +
                         std::to_string(latent_dim_));
  }
  ElementTable t;
  t.element = element;
  t.base = next_base_;
  t.codes = std::move(codes);
  t.ema_count = std::move(counts);
  t.ema_sum = nn::Tensor(t.codes.rows(), latent_dim_);
  for (std::size_t k = 0; k < t.codes.rows(); ++k) {
    for (std::size_t d = 0; d < latent_dim_; ++d) t.ema_sum(k, d) = t.codes(k, d) * t.ema_count[k];
  }
  t.dead.resize(t.codes.rows());
  for (std::size_t k = 0; k < t.codes.rows(); ++k) t.dead[k] = t.ema_count[k] < ema_.dead_threshold;
  t.low_streak.assign(t.codes.rows(), 0);
  next_base_ += static_cast<std::uint32_t>(t.codes.rows());
  return tables_.emplace(element, std::move(t)).first->second;
}

const ElementTable* Codebook::table(Element element) const {
  auto it = tables_.find(element);
  return it == tables_.end() ? nullptr : &it->second;
}

Assignment Codebook::assign(std::span<const double> latent, Element element) const {
  const ElementTable* t = table(element);
  if (!t) {
    throw VqError(VqError::Kind::UnknownElement,
                  "no codebook table for element " + std::string(chem::element_symbol(element)));
  }
  if (latent.size() != latent_dim_) throw nn::ShapeError("latent width does not match codebook");
  Assignment a;
  a.code = argmax_dot(t->codes, latent, &a.similarity);
  return a;
}

std::uint32_t Codebook::token_id(Element element, std::size_t code) const {
  const ElementTable* t = table(element);
  if (!t) throw VqError(VqError::Kind::UnknownElement, "no codebook table for element");
  if (code >= t->size()) throw std::out_of_range("code index out of range");
  return t->base + static_cast<std::uint32_t>(code);
}

std::optional<std::pair<Element, std::size_t>> Codebook::decode(std::uint32_t token) const {
  for (const auto& [e, t] : tables_) {
    if (token >= t.base && token < t.base + t.size()) return std::make_pair(e, std::size_t{token - t.base});
  }
  return std::nullopt;
}

void Codebook::ema_update(const nn::Tensor& latents, std::span<const Element> elements,
                          std::span<const std::size_t> codes, SeededRng& rng) {
  if (frozen_) throw VqError(VqError::Kind::FrozenCodebook, "codebook is frozen");
  if (latents.rows() != elements.size() || codes.size() != elements.size() || latents.cols() != latent_dim_) {
    throw nn::ShapeError("ema_update: latents " + latents.shape_string() + " for " +
                         std::to_string(elements.size()) + " atoms");
  }
  std::map<Element, std::vector<std::size_t>> rows_by_element;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const ElementTable* t = table(elements[i]);
    if (!t) throw VqError(VqError::Kind::UnknownElement, "ema_update: element without table");
    if (codes[i] >= t->size()) throw std::out_of_range("ema_update: code index out of range");
    rows_by_element[elements[i]].push_back(i);
  }
  // A decay of 1 keeps every statistic, so nothing can change.
  if (ema_.decay >= 1.0) return;

  const double g = ema_.decay;
  for (auto& [element, t] : tables_) {
    const std::size_t k_count = t.size();
    std::vector<double> n(k_count, 0.0);
    nn::Tensor s(k_count, latent_dim_);
    const auto& rows = rows_by_element[element];
    for (std::size_t i : rows) {
      n[codes[i]] += 1.0;
      auto dst = s.row(codes[i]);
      auto src = latents.row(i);
      for (std::size_t d = 0; d < latent_dim_; ++d) dst[d] += src[d];
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      t.ema_count[k] = g * t.ema_count[k] + (1.0 - g) * n[k];
      for (std::size_t d = 0; d < latent_dim_; ++d) t.ema_sum(k, d) = g * t.ema_sum(k, d) + (1.0 - g) * s(k, d);
      std::vector<double> c(latent_dim_);
      const double denom = std::max(t.ema_count[k], 1e-12);
      for (std::size_t d = 0; d < latent_dim_; ++d) c[d] = t.ema_sum(k, d) / denom;
      if (normalize(c)) std::copy(c.begin(), c.end(), t.codes.row(k).begin());

      t.low_streak[k] = t.ema_count[k] < ema_.dead_threshold ? t.low_streak[k] + 1 : 0;
      if (t.low_streak[k] >= ema_.reinit_patience && !rows.empty()) {
        const std::size_t pick = rows[rng.below(rows.size())];
        std::vector<double> v(latents.row(pick).begin(), latents.row(pick).end());
        if (normalize(v)) {
          std::copy(v.begin(), v.end(), t.codes.row(k).begin());
          for (std::size_t d = 0; d < latent_dim_; ++d) t.ema_sum(k, d) = v[d] * t.ema_count[k];
        }
        t.low_streak[k] = 0;
      }
      t.dead[k] = t.ema_count[k] < ema_.dead_threshold;
    }
  }
}

double Codebook::max_norm_deviation() const {
  double worst = 0.0;
  for (const auto& [e, t] : tables_) {
    for (std::size_t k = 0; k < t.size(); ++k) {
      worst = std::max(worst, std::abs(std::sqrt(dot(t.codes.row(k), t.codes.row(k))) - 1.0));
    }
  }
  return worst;
}

void Codebook::write(std::ostream& out) const {
  using namespace nn::binio;
  out.write("VQAT", 4);
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(latent_dim_));
  write_u32(out, static_cast<std::uint32_t>(tables_.size()));
  for (const auto& [e, t] : tables_) {
    write_string(out, std::string(chem::element_symbol(e)));
    write_u32(out, static_cast<std::uint32_t>(t.size()));
    write_u32(out, t.base);
    for (double v : t.codes.values()) write_f32(out, static_cast<float>(v));
    for (double c : t.ema_count) write_f64(out, c);
  }
}

Codebook Codebook::read(std::istream& in) {
  using namespace nn::binio;
  auto bad = [](const std::string& what) { return VqError(VqError::Kind::BadFile, "codebook file: " + what); };
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "VQAT", 4) != 0) throw bad("bad magic, expected VQAT");
  try {
    if (read_u32(in) != 1) throw bad("unsupported version");
    const std::uint32_t dim = read_u32(in);
    const std::uint32_t count = read_u32(in);
    if (dim == 0 || dim > 4096 || count > chem::kElementCount) throw bad("implausible header");
    Codebook cb(dim, EmaConfig{});
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::string symbol = read_string(in, 8);
      Element e = Element::Unk;
      if (symbol != chem::element_symbol(Element::Unk)) {
        auto parsed = chem::element_from_symbol(symbol);
        if (!parsed) throw bad("unknown element symbol '" + symbol + "'");
        e = *parsed;
      }
      const std::uint32_t k = read_u32(in);
      const std::uint32_t base = read_u32(in);
      if (k == 0 || k > (1u << 20)) throw bad("implausible code count");
      if (base != cb.code_count()) throw bad("element bases are not contiguous");
      nn::Tensor codes(k, dim);
      for (double& v : codes.values()) v = static_cast<double>(read_f32(in));
      for (std::size_t r = 0; r < k; ++r) {
        if (!normalize(codes.row(r))) throw bad("zero code vector");
      }
      std::vector<double> counts(k);
      for (double& c : counts) c = read_f64(in);
      if (!codes.all_finite()) throw bad("non-finite code values");
      cb.add_table(e, std::move(codes), std::move(counts));
    }
    cb.freeze();
    return cb;
  } catch (const nn::CheckpointError& err) {
    throw bad(err.what());
  }
}

void Codebook::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw VqError(VqError::Kind::BadFile, "cannot open " + path.string() + " for writing");
  write(out);
}

Codebook Codebook::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VqError(VqError::Kind::BadFile, "cannot open " + path.string());
  return read(in);
}

KMeansResult kmeans(const nn::Tensor& points, std::size_t k, SeededRng& rng, std::size_t max_iter) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (n == 0) throw VqError(VqError::Kind::EmptyElement, "k-means needs at least one point");
  if (k == 0) throw std::invalid_argument("k-means needs k > 0");

  // k-means++ seeding.
  std::vector<std::size_t> seeds{rng.below(n)};
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), points.row(seeds[0]));
  while (seeds.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (total <= 1e-24) break;  // every point coincides with a seed
    double u = rng.uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      if (u < d2[i]) {
        pick = i;
        break;
      }
      u -= d2[i];
    }
    while (d2[pick] <= 0.0) --pick;  // guard against rounding at the tail
    seeds.push_back(pick);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), points.row(pick)));
  }

  KMeansResult res;
  res.centers = nn::Tensor(k, dim);
  res.surplus.assign(k, false);
  for (std::size_t c = 0; c < k; ++c) {
    auto row = res.centers.row(c);
    const std::size_t src = seeds[c % seeds.size()];
    std::copy(points.row(src).begin(), points.row(src).end(), row.begin());
    if (c >= seeds.size()) {
      res.surplus[c] = true;
      for (double& v : row) v += 1e-3 * rng.normal();
    }
    if (!normalize(row)) row[0] = 1.0;
  }

  std::vector<std::size_t> assign(n, k), prev;
  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    prev = assign;
    for (std::size_t i = 0; i < n; ++i) assign[i] = argmax_dot(res.centers, points.row(i));
    if (assign == prev) break;
    nn::Tensor sums(k, dim);
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[assign[i]];
      auto dst = sums.row(assign[i]);
      auto src = points.row(i);
      for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0 && normalize(sums.row(c))) {
        std::copy(sums.row(c).begin(), sums.row(c).end(), res.centers.row(c).begin());
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) assign[i] = argmax_dot(res.centers, points.row(i));
  res.sizes.assign(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++res.sizes[assign[i]];
    res.inertia += squared_distance(points.row(i), res.centers.row(assign[i]));
  }
  return res;
}

Codebook kmeans_init(const std::map<Element, nn::Tensor>& latents_by_element, std::size_t k, std::uint64_t seed,
                     std::size_t latent_dim, EmaConfig ema) {
  Codebook cb(latent_dim, ema);
  const SeededRng root(seed);
  for (const auto& [element, points] : latents_by_element) {
    if (points.rows() == 0) {
      throw VqError(VqError::Kind::EmptyElement,
                    "no latents for element " + std::string(chem::element_symbol(element)));
    }
    SeededRng rng = root.split(static_cast<std::uint64_t>(element));
    KMeansResult r = kmeans(points, k, rng);
    std::vector<double> counts(r.sizes.begin(), r.sizes.end());
    ElementTable& t = cb.add_table(element, std::move(r.centers), std::move(counts));
    for (std::size_t c = 0; c < k; ++c) t.dead[c] = t.dead[c] || r.surplus[c];
  }
  return cb;
}

}  // namespace vqatom::vq
