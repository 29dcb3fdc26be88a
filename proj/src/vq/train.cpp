#include "vqatom/vq/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vqatom/nn/ops.hpp"
#include "vqatom/nn/optim.hpp"

namespace vqatom::vq {

using chem::Element;

namespace {

constexpr std::size_t kMaxCodePairs = 2048;

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::max(std::sqrt(aa * bb), 1e-24);
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> sample_code_pairs(std::size_t k, SeededRng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (k < 2) return pairs;
  const std::size_t total = k * (k - 1) / 2;
  if (total <= kMaxCodePairs) {
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) pairs.emplace_back(a, b);
    }
    return pairs;
  }
  pairs.reserve(kMaxCodePairs);
  while (pairs.size() < kMaxCodePairs) {
    std::size_t a = rng.below(k);
    std::size_t b = rng.below(k - 1);
    if (b >= a) ++b;
    pairs.emplace_back(std::min(a, b), std::max(a, b));
  }
  return pairs;
}

double codebook_repulsion(const Codebook& codebook, double margin, SeededRng& rng) {
  long double total = 0.0L;
  std::size_t count = 0;
  for (const auto& [e, t] : codebook.tables()) {
    for (const auto& [a, b] : sample_code_pairs(t.size(), rng)) {
      const double h = std::max(0.0, cosine(t.codes.row(a), t.codes.row(b)) - margin);
      total += h * h;
      ++count;
    }
  }
  return count == 0 ? 0.0 : static_cast<double>(total / count);
}

VqLoss vq_loss(nn::Tape& tape, const nn::Var& latents, std::span<const Element> elements,
               std::span<const std::size_t> codes, const Codebook& codebook, const VqLossWeights& weights,
               SeededRng& rng) {
  using namespace nn;
  const std::size_t n = latents.rows();
  if (n == 0) throw VqError(VqError::Kind::EmptyBatch, "vq_loss on an empty batch");
  if (elements.size() != n || codes.size() != n || latents.cols() != codebook.latent_dim()) {
    throw ShapeError("vq_loss: latents " + latents.value().shape_string() + " for " +
                     std::to_string(elements.size()) + " atoms");
  }
  if (weights.lambda1 < 0.0 || weights.lambda2 < 0.0) throw std::invalid_argument("negative vq loss weight");

  Tensor targets(n, codebook.latent_dim());
  for (std::size_t i = 0; i < n; ++i) {
    const ElementTable* t = codebook.table(elements[i]);
    if (!t) throw VqError(VqError::Kind::UnknownElement, "vq_loss: element without table");
    const auto code = t->codes.row(codes[i]);
    std::copy(code.begin(), code.end(), targets.row(i).begin());
  }
  // mse averages over n * D entries; the commitment term is a per-atom mean.
  Var commit = scale(mse(latents, tape.constant(std::move(targets))), static_cast<double>(codebook.latent_dim()));
  Var unit = l2_normalize(latents, 1);
  Var latent_repel = pair_hinge_sq_mean(matmul_nt(unit, unit), weights.margin);
  const double cb = codebook_repulsion(codebook, weights.margin, rng);

  VqLoss out;
  out.commit = commit.value().item();
  out.latent_repel = latent_repel.value().item();
  out.codebook_repel = cb;
  out.total = add(add(commit, scale(latent_repel, weights.lambda1)),
                  tape.constant(Tensor::scalar(weights.lambda2 * cb)));
  return out;
}

VqTrainResult train_vq(std::span<const chem::MolGraph> corpus, const encoder::Encoder& initial,
                       const VqTrainConfig& config, const std::function<void(const EpochStats&)>& on_epoch) {
  if (corpus.empty()) throw VqError(VqError::Kind::EmptyCorpus, "train_vq needs a non-empty corpus");
  if (config.batch_size == 0 || config.codes_per_element == 0) {
    throw std::invalid_argument("batch size and codes per element must be positive");
  }
  const SeededRng root(config.seed);
  const std::size_t dim = initial.config().latent_dim;

  std::vector<feat::MolFeatures> features;
  features.reserve(corpus.size());
  for (const auto& g : corpus) features.push_back(feat::featurize_molecule(g));
  auto make_batch = [&](std::span<const std::size_t> members) {
    encoder::GraphBatch b;
    for (std::size_t m : members) b.append(corpus[m], features[m]);
    return b;
  };

  VqTrainResult result{initial, Codebook{}, {}};
  {
    std::vector<std::size_t> all(corpus.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const encoder::GraphBatch full = make_batch(all);
    const nn::Tensor z = result.encoder.encode(full);
    std::map<Element, std::vector<std::size_t>> rows;
    for (std::size_t i = 0; i < full.atom_count(); ++i) rows[full.elements[i]].push_back(i);
    std::map<Element, nn::Tensor> by_element;
    for (const auto& [e, idx] : rows) {
      nn::Tensor m(idx.size(), dim);
      for (std::size_t r = 0; r < idx.size(); ++r) std::copy(z.row(idx[r]).begin(), z.row(idx[r]).end(), m.row(r).begin());
      by_element.emplace(e, std::move(m));
    }
    result.codebook = kmeans_init(by_element, config.codes_per_element, root.split("kmeans").next_u64(), dim,
                                  config.ema);
  }

  std::vector<nn::Parameter*> params = result.encoder.parameters();
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  nn::Adam adam(params, adam_cfg);
  SeededRng order_rng = root.split("order");
  SeededRng pair_rng = root.split("pairs");
  SeededRng ema_rng = root.split("ema");

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    EpochStats stats;
    stats.epoch = epoch;
    for (const auto& [e, t] : result.codebook.tables()) stats.usage[e].assign(t.size(), 0);
    long double loss_sum = 0, commit_sum = 0, lat_sum = 0, cb_sum = 0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const encoder::GraphBatch batch =
          make_batch(std::span<const std::size_t>(order.data() + start, end - start));
      const std::size_t n = batch.atom_count();
      if (n == 0) continue;

      nn::Tape tape;
      nn::Var z = result.encoder.forward(tape, batch);
      std::vector<std::size_t> codes(n);
      for (std::size_t i = 0; i < n; ++i) {
        codes[i] = result.codebook.assign(z.value().row(i), batch.elements[i]).code;
        ++stats.usage[batch.elements[i]][codes[i]];
      }
      VqLoss loss = vq_loss(tape, z, batch.elements, codes, result.codebook, config.weights, pair_rng);
      tape.backward(loss.total);
      adam.zero_grad();
      tape.accumulate_param_grads(params);
      adam.step();
      result.codebook.ema_update(z.value(), batch.elements, codes, ema_rng);
      stats.max_norm_deviation = std::max(stats.max_norm_deviation, result.codebook.max_norm_deviation());

      stats.atoms += n;
      loss_sum += static_cast<long double>(loss.total.value().item()) * n;
      commit_sum += static_cast<long double>(loss.commit) * n;
      lat_sum += static_cast<long double>(loss.latent_repel) * n;
      cb_sum += static_cast<long double>(loss.codebook_repel) * n;
    }
    const long double atoms = std::max<std::size_t>(stats.atoms, 1);
    stats.loss = static_cast<double>(loss_sum / atoms);
    stats.commit = static_cast<double>(commit_sum / atoms);
    stats.latent_repel = static_cast<double>(lat_sum / atoms);
    stats.codebook_repel = static_cast<double>(cb_sum / atoms);
    for (const auto& [e, t] : result.codebook.tables()) {
      stats.dead_codes += static_cast<std::size_t>(std::count(t.dead.begin(), t.dead.end(), true));
    }
    if (on_epoch) on_epoch(stats);
    result.epochs.push_back(std::move(stats));
  }
  result.codebook.freeze();
  return result;
}

std::vector<chem::SmilesRecord> two_family_corpus(std::size_t per_family, std::uint64_t seed) {
  SeededRng rng(seed);
  static const char* const kSubstituents[] = {"", "", "C", "CC", "C(C)C"};
  std::vector<chem::SmilesRecord> out;
  for (std::size_t i = 0; i < per_family; ++i) {
    std::string alkane = "C";
    const std::size_t length = 1 + rng.below(8);
    for (std::size_t k = 0; k < length; ++k) alkane += rng.bernoulli(0.3) ? "C(C)" : "C";
    out.push_back({"alkane" + std::to_string(i), alkane, out.size() + 1});

    std::string aromatic;
    for (std::size_t k = 0; k < 6; ++k) {
      aromatic += "c";
      if (k == 0 || k == 5) aromatic += "1";
      const std::string sub = kSubstituents[rng.below(std::size(kSubstituents))];
      if (!sub.empty()) aromatic += "(" + sub + ")";
    }
    out.push_back({"aromatic" + std::to_string(i), aromatic, out.size() + 1});
  }
  return out;
}

}  // namespace vqatom::vq
