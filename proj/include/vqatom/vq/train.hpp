#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vqatom/chem/mol.hpp"
#include "vqatom/encoder/gine.hpp"
#include "vqatom/nn/tape.hpp"
#include "vqatom/vq/codebook.hpp"

namespace vqatom::vq {

struct VqLossWeights {
  double lambda1 = 1.0;  // latent repulsion
  double lambda2 = 0.1;  // codebook repulsion
  double margin = 0.5;
};

struct VqLoss {
  nn::Var total;
  double commit = 0.0;
  double latent_repel = 0.0;
  double codebook_repel = 0.0;
};

// Up to 2048 distinct same-element code pairs per element; every pair when
// the element has fewer.
std::vector<std::pair<std::size_t, std::size_t>> sample_code_pairs(std::size_t k, SeededRng& rng);

// Mean over sampled same-element pairs of max(0, cos(c_a, c_b) - margin)^2.
double codebook_repulsion(const Codebook& codebook, double margin, SeededRng& rng);

// commit + lambda1 * latent repulsion + lambda2 * codebook repulsion.
// Codes are constants; gradients reach only the latents.
VqLoss vq_loss(nn::Tape& tape, const nn::Var& latents, std::span<const chem::Element> elements,
               std::span<const std::size_t> codes, const Codebook& codebook, const VqLossWeights& weights,
               SeededRng& rng);

struct VqTrainConfig {
  std::size_t codes_per_element = 64;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  double lr = 1e-3;
  VqLossWeights weights;
  EmaConfig ema;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t atoms = 0;
  double loss = 0.0;  // atom-weighted means over the epoch's batches
  double commit = 0.0;
  double latent_repel = 0.0;
  double codebook_repel = 0.0;
  std::map<chem::Element, std::vector<std::size_t>> usage;
  std::size_t dead_codes = 0;
  double max_norm_deviation = 0.0;  // worst over every update in the epoch
};

struct VqTrainResult {
  encoder::Encoder encoder;
  Codebook codebook;
  std::vector<EpochStats> epochs;
};

// k-means initialization from the initial encoder, then per batch:
// encode, assign, loss backward, Adam step, EMA update. Freezes the codebook.
VqTrainResult train_vq(std::span<const chem::MolGraph> corpus, const encoder::Encoder& initial,
                       const VqTrainConfig& config,
                       const std::function<void(const EpochStats&)>& on_epoch = {});

// Acyclic alkanes and alkyl-substituted benzenes, alternating, deterministic
// per seed.
std::vector<chem::SmilesRecord> two_family_corpus(std::size_t per_family, std::uint64_t seed);

}  // namespace vqatom::vq
