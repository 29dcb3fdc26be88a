#include "vqatom/mlm/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "vqatom/nn/ops.hpp"

namespace vqatom::mlm {

void TransformerConfig::validate() const {
  if (layers == 0 || model_dim == 0 || heads == 0 || ff_dim == 0) {
    throw MlmError(MlmError::Kind::BadConfig, "transformer dimensions must be positive");
  }
  if (model_dim % heads != 0) {
    throw MlmError(MlmError::Kind::BadConfig, "model_dim " + std::to_string(model_dim) +
                                                  " is not divisible by heads " + std::to_string(heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw MlmError(MlmError::Kind::BadConfig, "dropout must lie in [0, 1)");
}

TokenBatch TokenBatch::from_sequences(std::span<const std::vector<std::uint32_t>> seqs, std::uint32_t pad_id) {
  if (seqs.empty()) throw MlmError(MlmError::Kind::EmptyBatch, "no sequences in batch");
  TokenBatch b;
  b.batch = seqs.size();
  for (const auto& s : seqs) b.length = std::max(b.length, s.size());
  if (b.length == 0) throw MlmError(MlmError::Kind::EmptyBatch, "all sequences are empty");
  b.ids.assign(b.batch * b.length, pad_id);
  b.pad.assign(b.batch * b.length, true);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    for (std::size_t j = 0; j < seqs[i].size(); ++j) {
      b.ids[i * b.length + j] = seqs[i][j];
      b.pad[i * b.length + j] = false;
    }
  }
  return b;
}

Transformer::Transformer(const TransformerConfig& config, std::size_t vocab_size, SeededRng& rng,
                         const std::string& prefix)
    : config_(config) {
  config.validate();
  const std::size_t d = config.model_dim;
  nn::Tensor emb(vocab_size, d);
  for (double& v : emb.values()) v = 0.02 * rng.normal();
  embedding_ = nn::Parameter(prefix + ".embedding", std::move(emb));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    blocks_.push_back(Block{nn::LayerNorm(p + ".ln1", d), nn::Linear(p + ".q", d, d, rng),
                            nn::Linear(p + ".k", d, d, rng), nn::Linear(p + ".v", d, d, rng),
                            nn::Linear(p + ".o", d, d, rng), nn::LayerNorm(p + ".ln2", d),
                            nn::Linear(p + ".ff0", d, config.ff_dim, rng),
                            nn::Linear(p + ".ff1", config.ff_dim, d, rng)});
  }
  final_ln_ = nn::LayerNorm(prefix + ".final_ln", d);
  head_ = nn::Linear(prefix + ".head", d, vocab_size, rng, /*zero_init=*/true);
}

nn::Var Transformer::attention(nn::Tape& tape, const Block& block, const nn::Var& x,
                               const TokenBatch& batch) const {
  using namespace nn;
  const std::size_t dh = config_.model_dim / config_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Var q = block.q(tape, x), k = block.k(tape, x), v = block.v(tape, x);
  std::vector<Var> sequences;
  std::vector<std::size_t> rows(batch.length);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t j = 0; j < batch.length; ++j) rows[j] = b * batch.length + j;
    std::vector<bool> key_valid(batch.length);
    for (std::size_t j = 0; j < batch.length; ++j) key_valid[j] = !batch.pad[rows[j]];
    Var qb = gather_rows(q, rows), kb = gather_rows(k, rows), vb = gather_rows(v, rows);
    std::vector<Var> heads;
    for (std::size_t h = 0; h < config_.heads; ++h) {
      Var qh = slice_cols(qb, h * dh, dh), kh = slice_cols(kb, h * dh, dh), vh = slice_cols(vb, h * dh, dh);
      Var weights = masked_softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), key_valid);
      heads.push_back(matmul(weights, vh));
    }
    sequences.push_back(heads.size() == 1 ? heads[0] : concat(heads, 1));
  }
  Var merged = sequences.size() == 1 ? sequences[0] : concat(sequences, 0);
  return block.o(tape, merged);
}

nn::Var Transformer::encode(nn::Tape& tape, const TokenBatch& batch, SeededRng* dropout_rng) const {
  using namespace nn;
  if (batch.batch == 0 || batch.length == 0 || batch.ids.size() != batch.batch * batch.length) {
    throw MlmError(MlmError::Kind::EmptyBatch, "malformed or empty token batch");
  }
  std::vector<std::size_t> ids(batch.ids.begin(), batch.ids.end());
  for (std::size_t id : ids) {
    if (id >= vocab_size()) {
      throw MlmError(MlmError::Kind::BadToken,
                     "token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab_size()));
    }
  }
  const double p = dropout_rng ? config_.dropout : 0.0;
  Var x = gather_rows(tape.param(embedding_), ids);
  for (const Block& block : blocks_) {
    Var a = attention(tape, block, block.ln1(tape, x), batch);
    if (p > 0.0) a = dropout(a, p, *dropout_rng);
    x = add(x, a);
    Var f = block.ff1(tape, gelu(block.ff0(tape, block.ln2(tape, x))));
    if (p > 0.0) f = dropout(f, p, *dropout_rng);
    x = add(x, f);
  }
  return final_ln_(tape, x);
}

nn::Var Transformer::logits(nn::Tape& tape, const nn::Var& hidden, std::span<const std::size_t> rows) const {
  return head_(tape, nn::gather_rows(hidden, rows));
}

void Transformer::collect(std::vector<nn::Parameter*>& out) {
  out.push_back(&embedding_);
  for (Block& b : blocks_) {
    b.ln1.collect(out);
    b.q.collect(out);
    b.k.collect(out);
    b.v.collect(out);
    b.o.collect(out);
    b.ln2.collect(out);
    b.ff0.collect(out);
    b.ff1.collect(out);
  }
  final_ln_.collect(out);
  head_.collect(out);
}

void Transformer::collect(std::vector<const nn::Parameter*>& out) const {
  out.push_back(&embedding_);
  for (const Block& b : blocks_) {
    b.ln1.collect(out);
    b.q.collect(out);
    b.k.collect(out);
    b.v.collect(out);
    b.o.collect(out);
    b.ln2.collect(out);
    b.ff0.collect(out);
    b.ff1.collect(out);
  }
  final_ln_.collect(out);
  head_.collect(out);
}

std::vector<nn::Parameter*> Transformer::parameters() {
  std::vector<nn::Parameter*> out;
  collect(out);
  return out;
}

std::vector<const nn::Parameter*> Transformer::parameters() const {
  std::vector<const nn::Parameter*> out;
  collect(out);
  return out;
}

}  // namespace vqatom::mlm
