#include "vqatom/mlm/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include "vqatom/nn/ops.hpp"
#include "vqatom/nn/optim.hpp"
#include "vqatom/util/format.hpp"

namespace vqatom::mlm {

namespace {

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

double masked_accuracy(const nn::Tensor& logits, std::span<const std::size_t> labels) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += argmax_row(logits.row(i)) == labels[i];
  return labels.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(labels.size());
}

// Labeled-position-weighted mean loss with a fixed masking stream.
double validation_loss(const Transformer& model, const Vocab& vocab, const MaskingPolicy& policy,
                       const std::vector<std::vector<std::uint32_t>>& val, std::size_t batch_size,
                       std::uint64_t seed) {
  SeededRng rng(seed);
  long double total = 0.0L;
  std::size_t labeled = 0;
  for (std::size_t start = 0; start < val.size(); start += batch_size) {
    const std::size_t end = std::min(val.size(), start + batch_size);
    MaskedBatch mb = mask_batch(std::span(val).subspan(start, end - start), vocab, policy, rng);
    if (mb.skipped()) continue;
    nn::Tape tape(false);
    total += static_cast<long double>(mlm_loss(tape, model, mb).value().item()) * mb.positions.size();
    labeled += mb.positions.size();
  }
  return labeled == 0 ? INFINITY : static_cast<double>(total / labeled);
}

}  // namespace

void MaskingPolicy::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(mask_prob) || !prob(p_mask) || !prob(p_random) || !prob(p_keep) ||
      std::abs(p_mask + p_random + p_keep - 1.0) > 1e-12) {
    throw MlmError(MlmError::Kind::BadConfig, "masking probabilities must lie in [0, 1] and the split sum to 1");
  }
}

MaskedBatch mask_batch(std::span<const std::vector<std::uint32_t>> sequences, const Vocab& vocab,
                       const MaskingPolicy& policy, SeededRng& rng) {
  policy.validate();
  MaskedBatch out;
  out.inputs = TokenBatch::from_sequences(sequences, vocab.pad());
  for (std::size_t i = 0; i < out.inputs.ids.size(); ++i) {
    if (out.inputs.pad[i] || !rng.bernoulli(policy.mask_prob)) continue;
    out.positions.push_back(i);
    out.labels.push_back(out.inputs.ids[i]);
    const double u = rng.uniform();
    if (u < policy.p_mask) {
      out.inputs.ids[i] = vocab.mask();
      ++out.masked;
    } else if (u < policy.p_mask + policy.p_random) {
      out.inputs.ids[i] = static_cast<std::uint32_t>(rng.below(vocab.codes));
      ++out.randomized;
    } else {
      ++out.kept;
    }
  }
  return out;
}

nn::Var mlm_loss(nn::Tape& tape, const Transformer& model, const MaskedBatch& batch, SeededRng* dropout_rng) {
  if (batch.skipped()) throw MlmError(MlmError::Kind::NoLabels, "batch has no labeled positions");
  nn::Var hidden = model.encode(tape, batch.inputs, dropout_rng);
  return nn::cross_entropy(model.logits(tape, hidden, batch.positions), batch.labels);
}

double WarmupCosine::at(std::size_t step) const {
  if (warmup > 0 && step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total <= warmup + 1) return peak;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - 1 - warmup));
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

MlmTrainConfig MlmTrainConfig::paper() {
  MlmTrainConfig c;
  c.model = TransformerConfig::paper();
  c.lr = 2e-4;
  c.weight_decay = 0.01;
  c.clip_norm = 1.0;
  c.batch_size = 64;
  c.epochs = 65;
  return c;
}

MlmTrainResult train_mlm(const std::vector<std::vector<std::uint32_t>>& corpus, const Vocab& vocab,
                         const MlmTrainConfig& config, const std::function<void(const MlmLogRow&)>& on_step) {
  if (corpus.empty()) throw MlmError(MlmError::Kind::EmptyBatch, "empty MLM corpus");
  if (config.batch_size == 0) throw MlmError(MlmError::Kind::BadConfig, "batch size must be positive");
  config.masking.validate();
  const SeededRng root(config.seed);

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SeededRng split_rng = root.split("split");
  split_rng.shuffle(order.begin(), order.end());
  std::size_t n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * corpus.size()));
  if (n_val >= corpus.size()) n_val = corpus.size() - 1;
  std::vector<std::vector<std::uint32_t>> val, train;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? val : train).push_back(corpus[order[i]]);

  SeededRng init_rng = root.split("init");
  MlmTrainResult result{Transformer(config.model, vocab.size(), init_rng), {}, 0, INFINITY, 0};
  Transformer model = result.model;
  std::vector<nn::Parameter*> params = model.parameters();
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  adam_cfg.weight_decay = config.weight_decay;
  adam_cfg.decoupled = true;
  if (config.clip_norm > 0.0) adam_cfg.clip_norm = config.clip_norm;
  nn::Adam adam(params, adam_cfg);

  const std::size_t per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total = config.max_steps > 0 ? config.max_steps : per_epoch * config.epochs;
  const WarmupCosine schedule{config.lr,
                              static_cast<std::size_t>(std::floor(config.warmup_fraction * total)), total};
  const std::uint64_t val_seed = root.split("validation").next_u64();
  SeededRng order_rng = root.split("order"), mask_rng = root.split("mask"), drop_rng = root.split("dropout");

  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<std::vector<std::uint32_t>> batch;
  std::size_t cursor = idx.size();
  for (std::size_t step = 0; step < total; ++step) {
    if (cursor >= idx.size()) {
      order_rng.shuffle(idx.begin(), idx.end());
      cursor = 0;
    }
    batch.clear();
    for (; cursor < idx.size() && batch.size() < config.batch_size; ++cursor) batch.push_back(train[idx[cursor]]);

    MlmLogRow row;
    row.step = step;
    row.lr = schedule.at(step);
    MaskedBatch mb = mask_batch(batch, vocab, config.masking, mask_rng);
    if (mb.skipped()) {
      ++result.skipped_batches;
      row.loss = NAN;
    } else {
      nn::Tape tape;
      nn::Var hidden = model.encode(tape, mb.inputs, &drop_rng);
      nn::Var logits = model.logits(tape, hidden, mb.positions);
      nn::Var loss = nn::cross_entropy(logits, mb.labels);
      tape.backward(loss);
      adam.zero_grad();
      tape.accumulate_param_grads(params);
      adam.set_lr(row.lr);
      adam.step();
      row.loss = loss.value().item();
      row.masked_accuracy = masked_accuracy(logits.value(), mb.labels);
    }
    result.log.push_back(row);
    if (on_step) on_step(row);

    const bool epoch_end = cursor >= idx.size() || step + 1 == total;
    if (epoch_end && !val.empty()) {
      const double v = validation_loss(model, vocab, config.masking, val, config.batch_size, val_seed);
      if (v < result.best_validation_loss) {
        result.best_validation_loss = v;
        result.best_step = step;
        result.model = model;
      }
    }
  }
  if (val.empty()) {
    result.model = model;
    result.best_step = total == 0 ? 0 : total - 1;
  }
  return result;
}

void write_log_csv(std::ostream& out, std::span<const MlmLogRow> log) {
  out << "step,lr,loss,masked_accuracy\n";
  for (const MlmLogRow& r : log) out << r.step << ',' << format_double(r.lr) << ',' << format_double(r.loss) << ','
                                 << format_double(r.masked_accuracy) << '\n';
}

ProbeResult single_mask_probe(const Transformer& model, const Vocab& vocab,
                              std::span<const std::vector<std::uint32_t>> sequences) {
  std::vector<std::vector<std::uint32_t>> variants;
  std::vector<std::size_t> positions, labels;
  for (const auto& s : sequences) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      variants.push_back(s);
      variants.back()[j] = vocab.mask();
      labels.push_back(s[j]);
    }
  }
  ProbeResult out;
  if (variants.empty()) return out;
  TokenBatch batch = TokenBatch::from_sequences(variants, vocab.pad());
  std::size_t v = 0;
  for (const auto& s : sequences) {
    for (std::size_t j = 0; j < s.size(); ++j) positions.push_back(v++ * batch.length + j);
  }
  nn::Tape tape(false);
  nn::Var hidden = model.encode(tape, batch);
  nn::Var logits = model.logits(tape, hidden, positions);
  out.loss = nn::cross_entropy(logits, labels).value().item();
  out.accuracy = masked_accuracy(logits.value(), labels);
  out.positions = labels.size();
  return out;
}

}  // namespace vqatom::mlm
