#include <cmath>
#include <functional>
#include <ostream>
#include <string>

#include "cli/commands.hpp"
#include "vqatom/chem/mol.hpp"
#include "vqatom/encoder/gine.hpp"
#include "vqatom/eval/metrics.hpp"
#include "vqatom/interaction/dti.hpp"
#include "vqatom/mlm/pretrain.hpp"
#include "vqatom/nn/grad_check.hpp"
#include "vqatom/nn/ops.hpp"
#include "vqatom/util/format.hpp"
#include "vqatom/vq/train.hpp"

namespace vqatom::cli {

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

Outcome grad_outcome(const nn::GradCheckResult& r, double limit) {
  return {r.max_rel_error <= limit, "max rel error " + format_double(r.max_rel_error) + " over " +
                                        std::to_string(r.coordinates) + " coordinates (limit " +
                                        format_double(limit) + ")"};
}

// Splits out the attention key biases, whose gradient is identically zero.
std::vector<nn::Parameter*> without_key_bias(std::vector<nn::Parameter*> params) {
  std::erase_if(params, [](const nn::Parameter* p) { return p->name.ends_with(".k.bias"); });
  return params;
}

Outcome check_ops() {
  SeededRng rng(1);
  nn::Parameter x("x", nn::Tensor(4, 5)), w("w", nn::Tensor(5, 3));
  for (double& v : x.value.values()) v = rng.normal();
  for (double& v : w.value.values()) v = rng.normal() * 0.5;
  const std::vector<std::size_t> targets{0, 2, 1, 2};
  std::vector<nn::Parameter*> params{&x, &w};
  auto loss = [&](nn::Tape& t) {
    nn::Var h = nn::matmul(nn::sigmoid(t.param(x)), t.param(w));
    return nn::cross_entropy(h, targets);
  };
  return grad_outcome(nn::grad_check(loss, params), 1e-5);
}

Outcome check_encoder() {
  SeededRng init(4);
  encoder::Encoder enc(encoder::EncoderConfig{}, init);
  const chem::MolGraph g = chem::parse_smiles("CCO");
  const encoder::GraphBatch batch = encoder::GraphBatch::from_graph(g);
  std::map<chem::Element, nn::Tensor> by_element;
  const nn::Tensor z = enc.encode(batch);
  auto rows = [&](std::initializer_list<std::size_t> idx) {
    std::vector<double> v;
    for (std::size_t i : idx) v.insert(v.end(), z.row(i).begin(), z.row(i).end());
    return nn::Tensor::from_rows(idx.size(), z.cols(), v);
  };
  by_element[chem::Element::C] = rows({0, 1});
  by_element[chem::Element::O] = rows({2});
  const vq::Codebook cb = vq::kmeans_init(by_element, 1, 4);
  std::vector<std::size_t> codes;
  for (std::size_t i = 0; i < batch.atom_count(); ++i) codes.push_back(cb.assign(z.row(i), batch.elements[i]).code);
  std::vector<nn::Parameter*> params = enc.parameters();
  auto loss = [&](nn::Tape& t) {
    SeededRng r(1);
    return vq::vq_loss(t, enc.forward(t, batch), batch.elements, codes, cb, {}, r).total;
  };
  return grad_outcome(nn::grad_check(loss, params), 1e-4);
}

Outcome check_transformer() {
  const mlm::Vocab vocab{10};
  SeededRng init(9);
  mlm::Transformer model({1, 8, 2, 16, 0.0}, vocab.size(), init);
  SeededRng rng(10);
  for (nn::Parameter* p : model.parameters()) {
    if (p->name.find("bias") != std::string::npos || p->name.ends_with("head.weight")) {
      for (double& v : p->value.values()) v = 0.3 * rng.normal();
    }
  }
  const std::vector<std::vector<std::uint32_t>> seqs{{1, 3, 3, 7}, {2, 9}};
  SeededRng mrng(1);
  const mlm::MaskedBatch batch = mlm::mask_batch(seqs, vocab, {0.6, 0.8, 0.1, 0.1}, mrng);
  std::vector<nn::Parameter*> params = without_key_bias(model.parameters());
  auto loss = [&](nn::Tape& t) { return mlm::mlm_loss(t, model, batch); };
  return grad_outcome(nn::grad_check(loss, params), 1e-4);
}

Outcome check_dti() {
  interaction::InteractionConfig ic;
  ic.heads = 2;
  ic.head_dim = 4;
  ic.top_k = 2;
  SeededRng rng(3);
  interaction::DtiModel model({1, 8, 2, 16, 0.0}, 20, 6, ic, rng);
  model.set_score_bias(12.0);
  const nn::Tensor protein = interaction::ToyProteinEncoder(6, 3).encode("MKW");
  std::vector<nn::Parameter*> params = without_key_bias(model.parameters());
  auto loss = [&](nn::Tape& t) {
    std::vector<interaction::DtiOutput> o{model.forward_one(t, {3, 8}, protein)};
    return interaction::dti_loss(o, {1.0}, {12.5}, ic.lambda_reg);
  };
  return grad_outcome(nn::grad_check(loss, params), 1e-4);
}

Outcome check_metrics() {
  SeededRng rng(7);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.below(8));  // coarse values force ties
      labels[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (labels[i] != 1 || labels[j] != 0) continue;
        ++pairs;
        wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
      }
    }
    const eval::RankingMetrics m = eval::ranking_metrics(scores, labels);
    if (m.auroc != wins / static_cast<double>(pairs)) return {false, "auroc differs from the pairwise count"};
    for (const auto& [f, ef] : m.ef) {
      if (m.hit.at(f) != ef * m.base_rate) return {false, "hit != ef * base rate"};
    }
  }
  return {true, "200 randomized instances"};
}

}  // namespace

bool selfcheck(std::ostream& out) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"grad ops", check_ops},
      {"grad encoder+vq loss", check_encoder},
      {"grad transformer layer+mlm loss", check_transformer},
      {"grad dti forward+loss", check_dti},
      {"metrics oracle", check_metrics},
  };
  bool all = true;
  for (const auto& [name, fn] : checks) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all = all && o.ok;
    out << (o.ok ? "ok   " : "FAIL ") << name << ": " << o.detail << '\n';
  }
  return all;
}

}  // namespace vqatom::cli
