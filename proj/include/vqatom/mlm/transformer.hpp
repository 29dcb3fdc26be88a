#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqatom/nn/layers.hpp"
#include "vqatom/nn/tape.hpp"
#include "vqatom/util/rng.hpp"

namespace vqatom::mlm {

class MlmError : public std::runtime_error {
 public:
  enum class Kind { EmptyBatch, NoLabels, BadConfig, BadToken };
  MlmError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Codebook ids first, then PAD, MASK, UNK.
struct Vocab {
  std::uint32_t codes = 0;

  std::uint32_t pad() const { return codes; }
  std::uint32_t mask() const { return codes + 1; }
  std::uint32_t unk() const { return codes + 2; }
  std::uint32_t size() const { return codes + 3; }
};

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t model_dim = 64;
  std::size_t heads = 4;
  std::size_t ff_dim = 128;
  double dropout = 0.0;

  static TransformerConfig desk() { return {}; }
  static TransformerConfig paper() { return {10, 512, 16, 1024, 0.1}; }
  void validate() const;
};

// B sequences padded to a common length L, stored row-major (B*L).
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::uint32_t> ids;
  std::vector<bool> pad;

  static TokenBatch from_sequences(std::span<const std::vector<std::uint32_t>> seqs, std::uint32_t pad_id);
};

// Pre-norm Transformer encoder without positional encodings, plus a linear
// output head over the vocabulary (zero-initialized, so initial logits are
// uniform). Parameter names start with the given prefix.
class Transformer {
 public:
  struct Block {
    nn::LayerNorm ln1;
    nn::Linear q, k, v, o;
    nn::LayerNorm ln2;
    nn::Linear ff0, ff1;
  };

  Transformer() = default;
  Transformer(const TransformerConfig& config, std::size_t vocab_size, SeededRng& rng,
              const std::string& prefix = "mlm");

  // (B*L) x model_dim hidden states after the final layer norm. PAD keys get
  // zero attention weight. Dropout is active only when dropout_rng is given.
  nn::Var encode(nn::Tape& tape, const TokenBatch& batch, SeededRng* dropout_rng = nullptr) const;
  // Vocabulary logits for the given rows of the hidden states.
  nn::Var logits(nn::Tape& tape, const nn::Var& hidden, std::span<const std::size_t> rows) const;

  void collect(std::vector<nn::Parameter*>& out);
  void collect(std::vector<const nn::Parameter*>& out) const;
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;

  const TransformerConfig& config() const { return config_; }
  std::size_t vocab_size() const { return embedding_.value.rows(); }

 private:
  nn::Var attention(nn::Tape& tape, const Block& block, const nn::Var& x, const TokenBatch& batch) const;

  TransformerConfig config_;
  nn::Parameter embedding_;
  std::vector<Block> blocks_;
  nn::LayerNorm final_ln_;
  nn::Linear head_;
};

}  // namespace vqatom::mlm
