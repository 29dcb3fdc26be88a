#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "vqatom/mlm/transformer.hpp"
#include "vqatom/nn/tape.hpp"
#include "vqatom/util/rng.hpp"

namespace vqatom::mlm {

struct MaskingPolicy {
  double mask_prob = 0.15;
  double p_mask = 0.8;
  double p_random = 0.1;
  double p_keep = 0.1;

  void validate() const;
};

struct MaskedBatch {
  TokenBatch inputs;
  std::vector<std::size_t> positions;  // flat indices into inputs
  std::vector<std::size_t> labels;     // original ids at positions
  std::size_t masked = 0;              // replaced by MASK
  std::size_t randomized = 0;          // replaced by a random codebook id
  std::size_t kept = 0;

  // No position was selected; the batch carries no loss.
  bool skipped() const { return positions.empty(); }
};

// Selects each non-PAD position with probability mask_prob, then replaces it
// with MASK, a uniform codebook id (never a special), or leaves it.
MaskedBatch mask_batch(std::span<const std::vector<std::uint32_t>> sequences, const Vocab& vocab,
                       const MaskingPolicy& policy, SeededRng& rng);

// Mean cross-entropy over the labeled positions.
nn::Var mlm_loss(nn::Tape& tape, const Transformer& model, const MaskedBatch& batch,
                 SeededRng* dropout_rng = nullptr);

// Linear warmup from 0 to peak over `warmup` steps, then cosine decay to 0 at
// step total - 1.
struct WarmupCosine {
  double peak = 1e-3;
  std::size_t warmup = 0;
  std::size_t total = 1;

  double at(std::size_t step) const;
};

struct MlmTrainConfig {
  TransformerConfig model = TransformerConfig::desk();
  MaskingPolicy masking;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  std::size_t max_steps = 0;  // when > 0, overrides epochs
  double warmup_fraction = 0.1;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  static MlmTrainConfig desk() { return {}; }
  static MlmTrainConfig paper();
};

struct MlmLogRow {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double masked_accuracy = 0.0;
};

struct MlmTrainResult {
  Transformer model;  // best on validation, or the final model without a validation split
  std::vector<MlmLogRow> log;
  std::size_t skipped_batches = 0;
  double best_validation_loss = 0.0;
  std::size_t best_step = 0;
};

MlmTrainResult train_mlm(const std::vector<std::vector<std::uint32_t>>& corpus, const Vocab& vocab,
                         const MlmTrainConfig& config,
                         const std::function<void(const MlmLogRow&)>& on_step = {});

void write_log_csv(std::ostream& out, std::span<const MlmLogRow> log);

struct ProbeResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t positions = 0;
};

// Masks one position at a time and scores the model's prediction for it.
ProbeResult single_mask_probe(const Transformer& model, const Vocab& vocab,
                              std::span<const std::vector<std::uint32_t>> sequences);

}  // namespace vqatom::mlm
