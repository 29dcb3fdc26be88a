#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "vqatom/mlm/pretrain.hpp"
#include "vqatom/nn/grad_check.hpp"
#include "vqatom/nn/ops.hpp"

using namespace vqatom;
using namespace vqatom::mlm;

namespace {

const Vocab kVocab{10};

std::vector<std::vector<std::uint32_t>> random_corpus(std::size_t n, std::size_t max_len, SeededRng& rng) {
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint32_t> s(1 + rng.below(max_len));
    for (auto& t : s) t = static_cast<std::uint32_t>(rng.below(kVocab.codes));
    out.push_back(s);
  }
  return out;
}

void randomize(nn::Parameter& p, SeededRng& rng, double scale) {
  for (double& v : p.value.values()) v = scale * rng.normal();
}

nn::Parameter* find_param(Transformer& model, const std::string& suffix) {
  for (nn::Parameter* p : model.parameters()) {
    if (p->name.size() >= suffix.size() && p->name.compare(p->name.size() - suffix.size(), suffix.size(), suffix) == 0)
      return p;
  }
  return nullptr;
}

}  // namespace

TEST(Vocab, SpecialsFollowCodes) {
  EXPECT_EQ(kVocab.pad(), 10u);
  EXPECT_EQ(kVocab.mask(), 11u);
  EXPECT_EQ(kVocab.unk(), 12u);
  EXPECT_EQ(kVocab.size(), 13u);
}

TEST(Config, PresetsAndValidation) {
  const TransformerConfig p = TransformerConfig::paper();
  EXPECT_EQ(p.layers, 10u);
  EXPECT_EQ(p.model_dim, 512u);
  EXPECT_EQ(p.heads, 16u);
  EXPECT_EQ(p.ff_dim, 1024u);
  EXPECT_DOUBLE_EQ(p.dropout, 0.1);
  const TransformerConfig d = TransformerConfig::desk();
  EXPECT_EQ(d.layers, 2u);
  EXPECT_EQ(d.model_dim, 64u);
  EXPECT_EQ(d.heads, 4u);
  EXPECT_EQ(d.ff_dim, 128u);
  TransformerConfig bad = d;
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), MlmError);
  MaskingPolicy mp;
  mp.p_keep = 0.2;
  EXPECT_THROW(mp.validate(), MlmError);
}

TEST(TokenBatch, PadsRaggedSequences) {
  std::vector<std::vector<std::uint32_t>> seqs{{1, 2, 3}, {4}};
  TokenBatch b = TokenBatch::from_sequences(seqs, kVocab.pad());
  EXPECT_EQ(b.batch, 2u);
  EXPECT_EQ(b.length, 3u);
  EXPECT_EQ(b.ids, (std::vector<std::uint32_t>{1, 2, 3, 4, 10, 10}));
  EXPECT_EQ(b.pad, (std::vector<bool>{false, false, false, false, true, true}));
  EXPECT_THROW(TokenBatch::from_sequences({}, 0), MlmError);
}

TEST(Masking, ZeroProbabilitySkipsBatch) {
  SeededRng rng(1);
  std::vector<std::vector<std::uint32_t>> seqs{{1, 2, 3}, {4, 5}};
  MaskedBatch mb = mask_batch(seqs, kVocab, {0.0, 0.8, 0.1, 0.1}, rng);
  EXPECT_TRUE(mb.skipped());
  SeededRng init(2);
  Transformer model(TransformerConfig::desk(), kVocab.size(), init);
  nn::Tape tape;
  try {
    mlm_loss(tape, model, mb);
    FAIL();
  } catch (const MlmError& e) {
    EXPECT_EQ(e.kind(), MlmError::Kind::NoLabels);
  }
}

TEST(Masking, FullMaskingNeverTouchesPad) {
  SeededRng rng(1);
  std::vector<std::vector<std::uint32_t>> seqs{{1, 2, 3, 4}, {5}, {6, 7}};
  MaskedBatch mb = mask_batch(seqs, kVocab, {1.0, 1.0, 0.0, 0.0}, rng);
  for (std::size_t i = 0; i < mb.inputs.ids.size(); ++i) {
    EXPECT_EQ(mb.inputs.ids[i], mb.inputs.pad[i] ? kVocab.pad() : kVocab.mask());
  }
  EXPECT_EQ(mb.positions.size(), 7u);
  EXPECT_EQ(mb.labels, (std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7}));
}

TEST(Masking, SelectionAndSplitStatistics) {
  SeededRng rng(42);
  SeededRng corpus_rng(3);
  std::size_t positions = 0, selected = 0, masked = 0, randomized = 0, kept = 0;
  while (positions < 200000) {
    auto seqs = random_corpus(16, 30, corpus_rng);
    MaskedBatch mb = mask_batch(seqs, kVocab, {}, rng);
    for (bool p : mb.inputs.pad) positions += !p;
    selected += mb.positions.size();
    masked += mb.masked;
    randomized += mb.randomized;
    kept += mb.kept;
    for (std::size_t k = 0; k < mb.positions.size(); ++k) {
      const std::uint32_t id = mb.inputs.ids[mb.positions[k]];
      EXPECT_TRUE(id == kVocab.mask() || id < kVocab.codes);
      EXPECT_FALSE(mb.inputs.pad[mb.positions[k]]);
    }
  }
  // Binomial standard errors are far below these bounds at this sample size.
  EXPECT_NEAR(static_cast<double>(selected) / positions, 0.15, 0.01);
  EXPECT_NEAR(static_cast<double>(masked) / selected, 0.8, 0.02);
  EXPECT_NEAR(static_cast<double>(randomized) / selected, 0.1, 0.02);
  EXPECT_NEAR(static_cast<double>(kept) / selected, 0.1, 0.02);
}

TEST(Loss, UniformInitializationIsLogVocab) {
  SeededRng init(5), rng(6), corpus_rng(7);
  Transformer model(TransformerConfig::desk(), kVocab.size(), init);
  auto seqs = random_corpus(8, 12, corpus_rng);
  MaskedBatch mb = mask_batch(seqs, kVocab, {0.5, 0.8, 0.1, 0.1}, rng);
  nn::Tape tape;
  EXPECT_EQ(mlm_loss(tape, model, mb).value().item(), std::log(static_cast<double>(kVocab.size())));
}

TEST(Loss, DecreasesWithCorrectMargin) {
  double prev = INFINITY;
  for (double margin : {0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
    nn::Tape tape;
    nn::Tensor logits(3, 5);
    const std::vector<std::size_t> labels{1, 4, 0};
    for (std::size_t i = 0; i < 3; ++i) logits(i, labels[i]) = margin;
    const double l = nn::cross_entropy(tape.input(logits), labels).value().item();
    EXPECT_LT(l, prev);
    prev = l;
  }
  EXPECT_LT(prev, 1e-12);
}

namespace {

struct GradFixture {
  Transformer model;
  MaskedBatch batch;
  std::vector<nn::Parameter*> params;  // everything except the key biases
  std::vector<nn::Parameter*> key_biases;
};

GradFixture one_layer(std::size_t dim, std::size_t heads, double head_scale) {
  TransformerConfig cfg{1, dim, heads, 2 * dim, 0.0};
  SeededRng init(9), rng(10);
  GradFixture f{Transformer(cfg, kVocab.size(), init), {}, {}, {}};
  randomize(*find_param(f.model, "head.weight"), rng, head_scale);
  for (nn::Parameter* p : f.model.parameters()) {
    if (p->name.find("bias") != std::string::npos) randomize(*p, rng, 0.05);
  }
  std::vector<std::vector<std::uint32_t>> seqs{{1, 3, 3, 7}, {2, 9}};
  SeededRng mrng(1);
  f.batch = mask_batch(seqs, kVocab, {0.6, 0.8, 0.1, 0.1}, mrng);
  // Softmax ignores a shift shared by a whole score row, so the key bias has
  // an identically zero gradient; it is checked absolutely instead.
  for (nn::Parameter* p : f.model.parameters()) {
    if (p->name.ends_with(".k.bias")) {
      f.key_biases.push_back(p);
    } else {
      f.params.push_back(p);
    }
  }
  return f;
}

void expect_zero_key_bias_grad(GradFixture& f) {
  nn::Tape tape;
  tape.backward(mlm_loss(tape, f.model, f.batch));
  for (nn::Parameter* p : f.key_biases) {
    for (double g : tape.grad_of(*p)->values()) EXPECT_LE(std::abs(g), 1e-15);
  }
}

}  // namespace

TEST(Loss, GradientCheckNarrowLayer) {
  GradFixture f = one_layer(8, 2, 0.5);
  ASSERT_FALSE(f.batch.skipped());
  expect_zero_key_bias_grad(f);
  auto loss = [&](nn::Tape& t) { return mlm_loss(t, f.model, f.batch); };
  const nn::GradCheckResult r = nn::grad_check(loss, f.params);
  EXPECT_LE(r.max_rel_error, 1e-5) << r.worst_param << "[" << r.worst_index << "] analytic " << r.worst_analytic
                                   << " numeric " << r.worst_numeric;
}

TEST(Loss, GradientCheckDeskLayer) {
  // Central differences on a loss near ln(V) carry ~1e-10 absolute noise, so a
  // relative bound of 1e-5 is only meaningful well above that floor (1e-4 in
  // gradient magnitude leaves a 10x margin). Below it the two
  // gradients must agree absolutely.
  GradFixture f = one_layer(64, 4, 0.05);
  expect_zero_key_bias_grad(f);
  auto loss = [&](nn::Tape& t) { return mlm_loss(t, f.model, f.batch); };
  const nn::GradCheckResult r = nn::grad_check(loss, f.params);
  EXPECT_EQ(r.coordinates, r.per_coordinate.size());
  double worst_rel = 0.0, worst_abs = 0.0;
  for (const nn::CoordinateGrad& c : r.per_coordinate) {
    if (std::abs(c.analytic) + std::abs(c.numeric) >= 1e-4) {
      worst_rel = std::max(worst_rel, c.rel_error());
    } else {
      worst_abs = std::max(worst_abs, std::abs(c.analytic - c.numeric));
    }
  }
  EXPECT_LE(worst_rel, 1e-5);
  EXPECT_LE(worst_abs, 1e-9);
}

TEST(Transformer, PadPositionsAreInvisible) {
  SeededRng init(11);
  Transformer model(TransformerConfig::desk(), kVocab.size(), init);
  std::vector<std::vector<std::uint32_t>> one{{1, 2, 3}};
  std::vector<std::vector<std::uint32_t>> two{{1, 2, 3}, {4, 5, 6, 7, 8, 9}};
  TokenBatch a = TokenBatch::from_sequences(one, kVocab.pad());
  TokenBatch b = TokenBatch::from_sequences(two, kVocab.pad());
  b.ids[3] = 9;  // PAD slots of the first row hold arbitrary ids
  b.ids[4] = 9;
  b.ids[5] = 9;
  nn::Tape ta(false), tb;
  nn::Var ha = model.encode(ta, a);
  nn::Var hb = model.encode(tb, b);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t d = 0; d < 64; ++d) EXPECT_NEAR(ha.value()(j, d), hb.value()(j, d), 1e-12);
  }
  // A loss on the first row's real tokens sends no gradient to the PAD slots.
  nn::Var rows = nn::gather_rows(hb, std::vector<std::size_t>{0, 1, 2});
  tb.backward(nn::sum(nn::mul(rows, rows)));
  const nn::Tensor& g = hb.grad();
  for (std::size_t j = 3; j < 6; ++j) {
    for (std::size_t d = 0; d < 64; ++d) EXPECT_EQ(g(j, d), 0.0);
  }
}

TEST(Transformer, TokenPermutationPermutesOutputs) {
  SeededRng init(12), rng(13);
  Transformer model(TransformerConfig::desk(), kVocab.size(), init);
  for (int rep = 0; rep < 10; ++rep) {
    auto seqs = random_corpus(1, 12, rng);
    std::vector<std::size_t> perm(seqs[0].size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());
    std::vector<std::vector<std::uint32_t>> permuted{std::vector<std::uint32_t>(seqs[0].size())};
    for (std::size_t i = 0; i < perm.size(); ++i) permuted[0][perm[i]] = seqs[0][i];
    nn::Tape t1(false), t2(false);
    nn::Var h1 = model.encode(t1, TokenBatch::from_sequences(seqs, kVocab.pad()));
    nn::Var h2 = model.encode(t2, TokenBatch::from_sequences(permuted, kVocab.pad()));
    for (std::size_t i = 0; i < perm.size(); ++i) {
      for (std::size_t d = 0; d < 64; ++d) EXPECT_NEAR(h1.value()(i, d), h2.value()(perm[i], d), 1e-9);
    }
  }
}

TEST(Transformer, RejectsOutOfVocabularyTokens) {
  SeededRng init(1);
  Transformer model(TransformerConfig::desk(), kVocab.size(), init);
  std::vector<std::vector<std::uint32_t>> seqs{{1, 99}};
  nn::Tape tape;
  EXPECT_THROW(model.encode(tape, TokenBatch::from_sequences(seqs, kVocab.pad())), MlmError);
}

TEST(Schedule, WarmupPeakAndDecay) {
  WarmupCosine s{1e-3, 50, 500};
  EXPECT_EQ(s.at(0), 0.0);
  EXPECT_DOUBLE_EQ(s.at(25), 5e-4);
  EXPECT_DOUBLE_EQ(s.at(50), 1e-3);
  EXPECT_LE(s.at(499), 0.01 * 1e-3);
  for (std::size_t t = 51; t < 500; ++t) EXPECT_LE(s.at(t), s.at(t - 1));
}

TEST(TrainMlm, ZeroLearningRateLeavesLossUnchanged) {
  SeededRng corpus_rng(14);
  auto corpus = random_corpus(32, 10, corpus_rng);
  MlmTrainConfig cfg;
  cfg.lr = 0.0;
  cfg.max_steps = 5;
  cfg.validation_fraction = 0.0;
  cfg.seed = 3;
  MlmTrainResult r = train_mlm(corpus, kVocab, cfg);
  SeededRng init_rng = SeededRng(3).split("init");
  Transformer fresh(cfg.model, kVocab.size(), init_rng);
  SeededRng m1(77), m2(77);
  MaskedBatch a = mask_batch(corpus, kVocab, {}, m1);
  MaskedBatch b = mask_batch(corpus, kVocab, {}, m2);
  nn::Tape t1(false), t2(false);
  EXPECT_NEAR(mlm_loss(t1, r.model, a).value().item(), mlm_loss(t2, fresh, b).value().item(), 1e-12);
}

TEST(TrainMlm, SingleSequenceOverfit) {
  // Token ids as produced for a small substituted aromatic molecule.
  const std::vector<std::uint32_t> seq{3, 3, 5, 7, 7, 7, 2, 9, 1, 3};
  std::vector<std::vector<std::uint32_t>> corpus(16, seq);
  MlmTrainConfig cfg;
  cfg.max_steps = 500;
  cfg.validation_fraction = 0.0;
  cfg.seed = 1;
  MlmTrainResult r = train_mlm(corpus, kVocab, cfg);
  std::vector<std::vector<std::uint32_t>> one{seq};
  ProbeResult p = single_mask_probe(r.model, kVocab, one);
  EXPECT_EQ(p.accuracy, 1.0);
  EXPECT_EQ(p.positions, seq.size());
  EXPECT_LT(p.loss, r.log.front().loss);
}

TEST(TrainMlm, ValidationSelectionAndDeterminism) {
  SeededRng corpus_rng(15);
  auto corpus = random_corpus(40, 8, corpus_rng);
  MlmTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.validation_fraction = 0.25;
  cfg.seed = 9;
  MlmTrainResult a = train_mlm(corpus, kVocab, cfg);
  MlmTrainResult b = train_mlm(corpus, kVocab, cfg);
  EXPECT_EQ(a.log.size(), 12u);  // 30 training sequences, 4 batches per epoch
  EXPECT_TRUE(std::isfinite(a.best_validation_loss));
  EXPECT_LT(a.best_step, a.log.size());
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].loss, b.log[i].loss);
  }
  std::ostringstream csv;
  write_log_csv(csv, a.log);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "step,lr,loss,masked_accuracy");
}
