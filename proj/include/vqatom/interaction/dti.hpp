#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqatom/eval/metrics.hpp"
#include "vqatom/eval/split.hpp"
#include "vqatom/mlm/transformer.hpp"
#include "vqatom/nn/layers.hpp"
#include "vqatom/nn/tape.hpp"
#include "vqatom/util/rng.hpp"
#include "vqatom/vq/train.hpp"

namespace vqatom::interaction {

class InteractionError : public std::runtime_error {
 public:
  enum class Kind { ShapeMismatch, EmptyLigand, EmptyProtein, BadConfig, BadDataset };
  InteractionError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct InteractionConfig {
  std::size_t heads = 8;
  std::size_t head_dim = 8;
  double temperature = 1.5;
  double token_dropout = 0.10;
  double lambda_reg = 0.2;
  std::size_t top_k = 8;
  double norm_eps = 1e-6;

  void validate() const;
};

// Per-head scaled dot-product logits in both directions.
struct DirectionalLogits {
  std::vector<nn::Var> ligand_to_protein;  // each ligand x protein
  std::vector<nn::Var> protein_to_ligand;  // each protein x ligand
};

// Projections of ligand and protein states into per-head query/key spaces.
struct InteractionHeads {
  nn::Linear ligand_query, protein_key;  // ligand -> protein
  nn::Linear protein_query, ligand_key;  // protein -> ligand

  InteractionHeads() = default;
  InteractionHeads(const std::string& prefix, std::size_t ligand_dim, std::size_t protein_dim,
                   const InteractionConfig& config, SeededRng& rng);
  void collect(std::vector<nn::Parameter*>& out);
  void collect(std::vector<const nn::Parameter*>& out) const;
};

DirectionalLogits pairwise_logits(nn::Tape& tape, const nn::Var& ligand, const nn::Var& protein,
                                  const InteractionHeads& heads, std::size_t n_heads);

// min(sigmoid(lp / tau), sigmoid(pl^T / tau)).
nn::Var sigmoid_fuse(const nn::Var& logits_lp, const nn::Var& logits_pl, double temperature);

// min(S / (row sums + eps), S / (column sums + eps)).
nn::Var bidir_normalize(const nn::Var& s, double eps);

// Frozen stand-in for a protein language model: residue i maps to a seeded
// random vector for its amino acid plus those of the (up to three) 3-mers
// covering it.
class ToyProteinEncoder {
 public:
  explicit ToyProteinEncoder(std::size_t dim = 256, std::uint64_t seed = 0);
  nn::Tensor encode(const std::string& sequence) const;
  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::vector<double> vector_for(const std::string& key) const;

  std::size_t dim_;
  std::uint64_t seed_;
};

struct DtiOutput {
  nn::Var logit;  // 1x1
  nn::Var score;  // 1x1
  std::vector<nn::Var> maps;  // normalized map per head
};

// Ligand Transformer body + interaction module + two linear heads over the
// per-head top-k means of the normalized maps.
class DtiModel {
 public:
  DtiModel() = default;
  DtiModel(const mlm::TransformerConfig& ligand_config, std::size_t vocab_size, std::size_t protein_dim,
           const InteractionConfig& config, SeededRng& rng);

  // Forward for a batch of ligands (token id lists) against their proteins
  // (residue states, one matrix per pair). Token dropout applies only when
  // dropout_rng is given.
  std::vector<DtiOutput> forward(nn::Tape& tape, const std::vector<std::vector<std::uint32_t>>& ligands,
                                 const std::vector<const nn::Tensor*>& proteins,
                                 SeededRng* dropout_rng = nullptr) const;
  DtiOutput forward_one(nn::Tape& tape, const std::vector<std::uint32_t>& ligand, const nn::Tensor& protein,
                        SeededRng* dropout_rng = nullptr) const;

  // Copies the body weights of a pretrained MLM model with the same config.
  void load_ligand_body(const mlm::Transformer& pretrained);
  void set_score_bias(double b) { score_head_.bias.value[0] = b; }

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  const InteractionConfig& config() const { return config_; }
  const mlm::Transformer& ligand_encoder() const { return ligand_; }

 private:
  DtiOutput head(nn::Tape& tape, const nn::Var& ligand_states, const nn::Var& protein_states,
                 SeededRng* dropout_rng) const;

  InteractionConfig config_;
  mlm::Transformer ligand_;
  InteractionHeads heads_;
  nn::Linear logit_head_, score_head_;
};

// BCE-with-logits over labels + lambda * MSE(score prediction, score).
nn::Var dti_loss(const std::vector<DtiOutput>& outputs, const std::vector<double>& labels,
                 const std::vector<double>& scores, double lambda_reg);

struct DtiExample {
  std::string ligand_id;
  std::string smiles;
  std::string protein_id;
  std::string sequence;
  double score = 0.0;
  int label = 0;
  std::vector<std::uint32_t> tokens;
};

// TSV with header ligand_id, smiles, protein_id, sequence, score. Labels are
// binarized from the score. Tokens are left empty.
std::vector<DtiExample> read_dti_tsv(std::istream& in, double threshold = eval::kDefaultThreshold);
void write_dti_tsv(std::ostream& out, const std::vector<DtiExample>& examples);

struct PlantedRuleConfig {
  std::size_t ligands = 40;
  std::size_t proteins = 140;
  std::size_t pairs_per_protein = 5;
  std::string motif = "WHC";  // protein 3-mer of the rule
  std::uint64_t seed = 0;
};

// Ligands are small acyclic/aromatic molecules, half carrying a carboxylic
// acid; proteins are random sequences of 10 to 30 residues, half carrying the
// motif. A pair is
// positive exactly when both hold; scores sit 0.8 above or below 12.1 with
// small noise, so binarization recovers the rule.
std::vector<DtiExample> planted_rule_dataset(const PlantedRuleConfig& config);
bool has_carboxylic_acid(const std::string& smiles);

// Trains a VQ tokenizer on the distinct ligands of a dataset.
vq::VqTrainResult fit_ligand_tokenizer(const std::vector<DtiExample>& examples, std::size_t codes_per_element,
                                       std::size_t epochs, std::uint64_t seed);
// Fills DtiExample::tokens; atoms of elements without a codebook table map to UNK.
void attach_tokens(std::vector<DtiExample>& examples, const vq::Codebook& codebook,
                   const encoder::Encoder& encoder);
// Permutes (score, label) across examples: the permutation-null control.
void shuffle_labels(std::vector<DtiExample>& examples, std::uint64_t seed);

struct DtiTrainConfig {
  mlm::TransformerConfig ligand = mlm::TransformerConfig::desk();
  InteractionConfig interaction;
  std::size_t protein_dim = 256;
  double lr = 1e-3;
  double weight_decay = 0.05;
  double warmup_fraction = 0.05;
  std::size_t batch_size = 8;
  std::size_t epochs = 20;
  std::array<double, eval::kSplitCount> ratios{5.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0};
  double identity = 0.4;
  double threshold = eval::kDefaultThreshold;
  std::uint64_t seed = 0;

  static DtiTrainConfig desk() { return {}; }
  static DtiTrainConfig paper();
};

struct DtiEpochRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_auroc = 0.0;
};

struct DtiPrediction {
  std::size_t pair_id = 0;
  double logit = 0.0;
  double probability = 0.0;
  int label = 0;
};

struct DtiTrainResult {
  DtiModel model;
  ToyProteinEncoder proteins;
  eval::ColdSplit split;
  std::vector<DtiEpochRow> log;
  std::size_t best_epoch = 0;
  double best_validation_auroc = -1.0;
  eval::RankingMetrics test_metrics;
  std::vector<DtiPrediction> test_predictions;
};

// Protein-cold split, training with validation-AUROC model selection, one
// test evaluation. Every example needs tokens. vocab_size covers the token
// ids plus the PAD/MASK/UNK specials.
DtiTrainResult train_dti(const std::vector<DtiExample>& examples, std::size_t vocab_size,
                         const DtiTrainConfig& config, const mlm::Transformer* pretrained = nullptr,
                         const std::function<void(const DtiEpochRow&)>& on_epoch = {});

// Inference-mode logits, one per example.
std::vector<DtiPrediction> predict(const DtiModel& model, const ToyProteinEncoder& proteins,
                                   const std::vector<DtiExample>& examples, const std::vector<std::size_t>& rows);

// pair_id, logit, probability, label
void write_predictions_csv(std::ostream& out, const std::vector<DtiPrediction>& predictions);

}  // namespace vqatom::interaction
