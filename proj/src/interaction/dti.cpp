#include "vqatom/interaction/dti.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "vqatom/chem/mol.hpp"
#include "vqatom/nn/ops.hpp"
#include "vqatom/nn/optim.hpp"
#include "vqatom/vq/tokenize.hpp"

namespace vqatom::interaction {

namespace {

using nn::Tensor;
using nn::Var;

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw InteractionError(InteractionError::Kind::ShapeMismatch, what);
}

std::string num(double v) { return nlohmann::json(v).dump(); }

// Rows and columns dropped whole; at least one of each survives.
Tensor token_dropout_mask(std::size_t rows, std::size_t cols, double p, SeededRng& rng) {
  std::vector<bool> keep_r(rows), keep_c(cols);
  for (std::size_t i = 0; i < rows; ++i) keep_r[i] = !rng.bernoulli(p);
  for (std::size_t j = 0; j < cols; ++j) keep_c[j] = !rng.bernoulli(p);
  if (std::none_of(keep_r.begin(), keep_r.end(), [](bool b) { return b; })) keep_r.assign(rows, true);
  if (std::none_of(keep_c.begin(), keep_c.end(), [](bool b) { return b; })) keep_c.assign(cols, true);
  Tensor mask(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) mask(i, j) = keep_r[i] && keep_c[j] ? 1.0 : 0.0;
  }
  return mask;
}

}  // namespace

void InteractionConfig::validate() const {
  auto bad = [](const std::string& what) { throw InteractionError(InteractionError::Kind::BadConfig, what); };
  if (heads == 0 || head_dim == 0) bad("interaction heads and head_dim must be positive");
  if (!(temperature > 0.0)) bad("temperature must be positive");
  if (!(token_dropout >= 0.0 && token_dropout < 1.0)) bad("token dropout must lie in [0, 1)");
  if (!(lambda_reg >= 0.0)) bad("lambda_reg must be non-negative");
  if (top_k == 0) bad("top_k must be positive");
  if (!(norm_eps > 0.0)) bad("norm_eps must be positive");
}

InteractionHeads::InteractionHeads(const std::string& prefix, std::size_t ligand_dim, std::size_t protein_dim,
                                   const InteractionConfig& config, SeededRng& rng) {
  const std::size_t width = config.heads * config.head_dim;
  ligand_query = nn::Linear(prefix + ".ligand_query", ligand_dim, width, rng);
  protein_key = nn::Linear(prefix + ".protein_key", protein_dim, width, rng);
  protein_query = nn::Linear(prefix + ".protein_query", protein_dim, width, rng);
  ligand_key = nn::Linear(prefix + ".ligand_key", ligand_dim, width, rng);
}

void InteractionHeads::collect(std::vector<nn::Parameter*>& out) {
  ligand_query.collect(out);
  protein_key.collect(out);
  protein_query.collect(out);
  ligand_key.collect(out);
}

void InteractionHeads::collect(std::vector<const nn::Parameter*>& out) const {
  ligand_query.collect(out);
  protein_key.collect(out);
  protein_query.collect(out);
  ligand_key.collect(out);
}

DirectionalLogits pairwise_logits(nn::Tape& tape, const Var& ligand, const Var& protein,
                                  const InteractionHeads& heads, std::size_t n_heads) {
  if (ligand.value().rows() == 0) throw InteractionError(InteractionError::Kind::EmptyLigand, "ligand has no tokens");
  if (protein.value().rows() == 0) {
    throw InteractionError(InteractionError::Kind::EmptyProtein, "protein has no residues");
  }
  require_shape(ligand.value().cols() == heads.ligand_query.in_dim(),
                "ligand states have width " + std::to_string(ligand.value().cols()) + ", expected " +
                    std::to_string(heads.ligand_query.in_dim()));
  require_shape(protein.value().cols() == heads.protein_key.in_dim(),
                "protein states have width " + std::to_string(protein.value().cols()) + ", expected " +
                    std::to_string(heads.protein_key.in_dim()));
  const std::size_t width = heads.ligand_query.out_dim();
  require_shape(n_heads > 0 && width % n_heads == 0, "projection width not divisible by head count");
  const std::size_t dh = width / n_heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

  const Var ql = heads.ligand_query(tape, ligand), kp = heads.protein_key(tape, protein);
  const Var qp = heads.protein_query(tape, protein), kl = heads.ligand_key(tape, ligand);
  DirectionalLogits out;
  for (std::size_t h = 0; h < n_heads; ++h) {
    out.ligand_to_protein.push_back(
        nn::scale(nn::matmul_nt(nn::slice_cols(ql, h * dh, dh), nn::slice_cols(kp, h * dh, dh)), inv));
    out.protein_to_ligand.push_back(
        nn::scale(nn::matmul_nt(nn::slice_cols(qp, h * dh, dh), nn::slice_cols(kl, h * dh, dh)), inv));
  }
  return out;
}

Var sigmoid_fuse(const Var& logits_lp, const Var& logits_pl, double temperature) {
  const Tensor& a = logits_lp.value();
  const Tensor& b = logits_pl.value();
  require_shape(a.rank() == 2 && b.rank() == 2 && a.rows() == b.cols() && a.cols() == b.rows(),
                "directional logits " + a.shape_string() + " and " + b.shape_string() + " are not transposes");
  if (!(temperature > 0.0)) throw InteractionError(InteractionError::Kind::BadConfig, "temperature must be positive");
  const double inv = 1.0 / temperature;
  return nn::minimum(nn::sigmoid(nn::scale(logits_lp, inv)), nn::sigmoid(nn::scale(nn::transpose(logits_pl), inv)));
}

Var bidir_normalize(const Var& s, double eps) {
  return nn::minimum(nn::normalize_rows_by_sum(s, eps), nn::normalize_cols_by_sum(s, eps));
}

ToyProteinEncoder::ToyProteinEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw InteractionError(InteractionError::Kind::BadConfig, "protein dim must be positive");
}

std::vector<double> ToyProteinEncoder::vector_for(const std::string& key) const {
  SeededRng rng = SeededRng(seed_).split(key);
  std::vector<double> v(dim_);
  for (double& x : v) x = rng.normal();
  return v;
}

Tensor ToyProteinEncoder::encode(const std::string& sequence) const {
  if (sequence.empty()) throw InteractionError(InteractionError::Kind::EmptyProtein, "empty protein sequence");
  const std::size_t n = sequence.size();
  Tensor out(n, dim_);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> aa = vector_for(std::string("aa:") + sequence[i]);
    for (std::size_t d = 0; d < dim_; ++d) out(i, d) = aa[d];
  }
  // Every 3-mer adds its vector to the three residues it covers.
  for (std::size_t s = 0; s + 3 <= n; ++s) {
    const std::vector<double> kmer = vector_for("3mer:" + sequence.substr(s, 3));
    for (std::size_t i = s; i < s + 3; ++i) {
      for (std::size_t d = 0; d < dim_; ++d) out(i, d) += kmer[d];
    }
  }
  return out;
}

DtiModel::DtiModel(const mlm::TransformerConfig& ligand_config, std::size_t vocab_size, std::size_t protein_dim,
                   const InteractionConfig& config, SeededRng& rng)
    : config_(config) {
  config_.validate();
  SeededRng ligand_rng = rng.split("ligand"), heads_rng = rng.split("heads"), out_rng = rng.split("out");
  ligand_ = mlm::Transformer(ligand_config, vocab_size, ligand_rng, "dti.ligand");
  heads_ = InteractionHeads("dti.interaction", ligand_config.model_dim, protein_dim, config_, heads_rng);
  logit_head_ = nn::Linear("dti.logit_head", config_.heads, 1, out_rng);
  score_head_ = nn::Linear("dti.score_head", config_.heads, 1, out_rng);
}

DtiOutput DtiModel::head(nn::Tape& tape, const Var& ligand_states, const Var& protein_states,
                         SeededRng* dropout_rng) const {
  DirectionalLogits logits = pairwise_logits(tape, ligand_states, protein_states, heads_, config_.heads);
  std::optional<Tensor> mask;
  if (dropout_rng && config_.token_dropout > 0.0) {
    mask = token_dropout_mask(ligand_states.value().rows(), protein_states.value().rows(), config_.token_dropout,
                              *dropout_rng);
  }
  DtiOutput out;
  std::vector<Var> pooled;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    Var fused = sigmoid_fuse(logits.ligand_to_protein[h], logits.protein_to_ligand[h], config_.temperature);
    if (mask) fused = nn::mul_const(fused, *mask);
    Var map = bidir_normalize(fused, config_.norm_eps);
    pooled.push_back(nn::top_k_mean(map, config_.top_k));
    out.maps.push_back(map);
  }
  const Var features = nn::concat(pooled, 1);
  out.logit = logit_head_(tape, features);
  out.score = score_head_(tape, features);
  return out;
}

std::vector<DtiOutput> DtiModel::forward(nn::Tape& tape, const std::vector<std::vector<std::uint32_t>>& ligands,
                                         const std::vector<const Tensor*>& proteins, SeededRng* dropout_rng) const {
  require_shape(ligands.size() == proteins.size(), "ligand and protein batch sizes differ");
  if (ligands.empty()) return {};
  for (const auto& l : ligands) {
    if (l.empty()) throw InteractionError(InteractionError::Kind::EmptyLigand, "ligand has no tokens");
  }
  const std::uint32_t pad = static_cast<std::uint32_t>(ligand_.vocab_size() - 3);
  const mlm::TokenBatch batch = mlm::TokenBatch::from_sequences(ligands, pad);
  // Sequence dropout inside the body draws from its own stream.
  std::optional<SeededRng> body_rng;
  if (dropout_rng) body_rng = dropout_rng->split("body");
  const Var hidden = ligand_.encode(tape, batch, body_rng ? &*body_rng : nullptr);
  std::vector<DtiOutput> out;
  for (std::size_t b = 0; b < ligands.size(); ++b) {
    std::vector<std::size_t> rows(ligands[b].size());
    std::iota(rows.begin(), rows.end(), b * batch.length);
    out.push_back(head(tape, nn::gather_rows(hidden, rows), tape.constant(*proteins[b]), dropout_rng));
  }
  return out;
}

DtiOutput DtiModel::forward_one(nn::Tape& tape, const std::vector<std::uint32_t>& ligand, const Tensor& protein,
                                SeededRng* dropout_rng) const {
  return forward(tape, {ligand}, {&protein}, dropout_rng).front();
}

void DtiModel::load_ligand_body(const mlm::Transformer& pretrained) {
  std::vector<nn::Parameter*> dst = ligand_.parameters();
  std::vector<const nn::Parameter*> src = pretrained.parameters();
  require_shape(dst.size() == src.size(), "pretrained ligand model has a different layout");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    require_shape(dst[i]->value.same_shape(src[i]->value),
                  "pretrained parameter " + src[i]->name + " has shape " + src[i]->value.shape_string() +
                      ", expected " + dst[i]->value.shape_string());
    dst[i]->value = src[i]->value;
  }
}

std::vector<nn::Parameter*> DtiModel::parameters() {
  std::vector<nn::Parameter*> out;
  for (nn::Parameter* p : ligand_.parameters()) {
    // The vocabulary head of the body is unused here.
    if (p->name.rfind("dti.ligand.head.", 0) != 0) out.push_back(p);
  }
  heads_.collect(out);
  logit_head_.collect(out);
  score_head_.collect(out);
  return out;
}

std::vector<const nn::Parameter*> DtiModel::parameters() const {
  std::vector<const nn::Parameter*> out;
  for (const nn::Parameter* p : ligand_.parameters()) {
    if (p->name.rfind("dti.ligand.head.", 0) != 0) out.push_back(p);
  }
  heads_.collect(out);
  logit_head_.collect(out);
  score_head_.collect(out);
  return out;
}

Var dti_loss(const std::vector<DtiOutput>& outputs, const std::vector<double>& labels,
             const std::vector<double>& scores, double lambda_reg) {
  require_shape(!outputs.empty() && outputs.size() == labels.size() && outputs.size() == scores.size(),
                "dti_loss needs one label and score per output");
  std::vector<Var> logits, preds;
  for (const DtiOutput& o : outputs) {
    logits.push_back(o.logit);
    preds.push_back(o.score);
  }
  nn::Tape& tape = outputs.front().logit.tape();
  const Var z = nn::concat(logits, 0);
  Var loss = nn::bce_with_logits(z, labels);
  if (lambda_reg != 0.0) {
    Tensor target(scores.size(), 1);
    for (std::size_t i = 0; i < scores.size(); ++i) target[i] = scores[i];
    loss = nn::add(loss, nn::scale(nn::mse(nn::concat(preds, 0), tape.constant(target)), lambda_reg));
  }
  return loss;
}

std::vector<DtiExample> read_dti_tsv(std::istream& in, double threshold) {
  auto bad = [](std::size_t line, const std::string& what) {
    throw InteractionError(InteractionError::Kind::BadDataset, "line " + std::to_string(line) + ": " + what);
  };
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) bad(1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ligand_id\tsmiles\tprotein_id\tsequence\tscore") {
    bad(1, "expected header ligand_id<TAB>smiles<TAB>protein_id<TAB>sequence<TAB>score");
  }
  std::vector<DtiExample> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) f.push_back(cell);
    if (f.size() != 5) bad(line_no, "expected 5 tab-separated fields, found " + std::to_string(f.size()));
    DtiExample ex{f[0], f[1], f[2], f[3], 0.0, 0, {}};
    std::size_t used = 0;
    try {
      ex.score = std::stod(f[4], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != f[4].size() || f[4].empty()) bad(line_no, "score '" + f[4] + "' is not a number");
    if (!std::isfinite(ex.score)) bad(line_no, "score is not finite");
    if (ex.sequence.empty()) bad(line_no, "empty protein sequence");
    ex.label = eval::binarize(ex.score, threshold);
    out.push_back(std::move(ex));
  }
  return out;
}

void write_dti_tsv(std::ostream& out, const std::vector<DtiExample>& examples) {
  out << "ligand_id\tsmiles\tprotein_id\tsequence\tscore\n";
  for (const DtiExample& e : examples) {
    out << e.ligand_id << '\t' << e.smiles << '\t' << e.protein_id << '\t' << e.sequence << '\t' << num(e.score)
        << '\n';
  }
}

bool has_carboxylic_acid(const std::string& smiles) {
  const chem::MolGraph g = chem::parse_smiles(smiles);
  const auto adj = g.adjacency();
  for (std::size_t c = 0; c < g.atom_count(); ++c) {
    if (g.atoms[c].element != chem::Element::C || g.atoms[c].aromatic) continue;
    bool carbonyl = false, hydroxyl = false;
    for (const chem::Neighbor& n : adj[c]) {
      const chem::Atom& o = g.atoms[n.atom];
      if (o.element != chem::Element::O) continue;
      const chem::BondOrder order = g.bonds[n.bond].order;
      if (order == chem::BondOrder::Double) carbonyl = true;
      if (order == chem::BondOrder::Single && adj[n.atom].size() == 1 && (o.total_h() == 1 || o.formal_charge == -1)) {
        hydroxyl = true;
      }
    }
    if (carbonyl && hydroxyl) return true;
  }
  return false;
}

std::vector<DtiExample> planted_rule_dataset(const PlantedRuleConfig& config) {
  if (config.motif.size() != 3) throw InteractionError(InteractionError::Kind::BadConfig, "motif must be a 3-mer");
  if (config.ligands < 2 || config.proteins < 3 || config.pairs_per_protein == 0 ||
      config.pairs_per_protein > config.ligands) {
    throw InteractionError(InteractionError::Kind::BadConfig, "planted-rule dataset is too small");
  }
  const SeededRng root(config.seed);
  SeededRng lig_rng = root.split("ligands"), prot_rng = root.split("proteins"), pair_rng = root.split("pairs");

  // Scaffolds and decoy oxygen groups, so that oxygen alone does not reveal
  // the acid.
  static const std::vector<std::string> scaffolds = {"CCCC", "CC(C)C", "c1ccccc1", "C1CCCCC1", "CCc1ccccc1",
                                                      "c1ccc(C)cc1", "CCCCCC", "CC(C)CC"};
  static const std::vector<std::string> decoys = {"CO", "C(=O)C", "C(=O)OC", "OC", "CC(=O)OCC"};
  std::vector<std::string> smiles(config.ligands);
  std::vector<bool> acid(config.ligands);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < config.ligands; ++i) {
    acid[i] = i % 2 == 0;
    for (int attempt = 0;; ++attempt) {
      std::string s = scaffolds[lig_rng.below(scaffolds.size())];
      if (lig_rng.bernoulli(0.5)) s += decoys[lig_rng.below(decoys.size())];
      s += acid[i] ? "C(=O)O" : decoys[lig_rng.below(decoys.size())];
      if (seen.insert(s).second || attempt > 50) {
        smiles[i] = s;
        break;
      }
    }
  }

  static const std::string amino = "ACDEFGHIKLMNPQRSTVWY";
  std::vector<std::string> sequences(config.proteins);
  std::vector<bool> motif(config.proteins);
  for (std::size_t p = 0; p < config.proteins; ++p) {
    motif[p] = p % 2 == 0;
    for (;;) {
      const std::size_t len = 10 + prot_rng.below(21);
      std::string s;
      for (std::size_t k = 0; k < len; ++k) s += amino[prot_rng.below(amino.size())];
      if (motif[p]) s.replace(prot_rng.below(len - 2), 3, config.motif);
      if ((s.find(config.motif) != std::string::npos) == motif[p]) {
        sequences[p] = s;
        break;
      }
    }
  }

  std::vector<DtiExample> out;
  std::vector<std::size_t> ligand_order(config.ligands);
  for (std::size_t p = 0; p < config.proteins; ++p) {
    std::iota(ligand_order.begin(), ligand_order.end(), std::size_t{0});
    pair_rng.shuffle(ligand_order.begin(), ligand_order.end());
    for (std::size_t k = 0; k < config.pairs_per_protein; ++k) {
      const std::size_t l = ligand_order[k];
      const bool positive = acid[l] && motif[p];
      const double score = 12.1 + (positive ? 0.8 : -0.8) + 0.1 * std::clamp(pair_rng.normal(), -3.0, 3.0);
      out.push_back({"lig" + std::to_string(l), smiles[l], "prot" + std::to_string(p), sequences[p], score,
                     eval::binarize(score), {}});
    }
  }
  return out;
}

vq::VqTrainResult fit_ligand_tokenizer(const std::vector<DtiExample>& examples, std::size_t codes_per_element,
                                       std::size_t epochs, std::uint64_t seed) {
  std::map<std::string, std::string> ligands;
  for (const DtiExample& e : examples) ligands.emplace(e.smiles, e.ligand_id);
  std::vector<chem::MolGraph> graphs;
  for (const auto& [smiles, id] : ligands) graphs.push_back(chem::parse_smiles(smiles));
  SeededRng enc_rng = SeededRng(seed).split("encoder");
  const encoder::Encoder initial(encoder::EncoderConfig{}, enc_rng);
  vq::VqTrainConfig config;
  config.codes_per_element = codes_per_element;
  config.epochs = epochs;
  config.seed = seed;
  return vq::train_vq(graphs, initial, config);
}

void attach_tokens(std::vector<DtiExample>& examples, const vq::Codebook& codebook,
                   const encoder::Encoder& encoder) {
  std::map<std::string, std::vector<std::uint32_t>> cache;
  vq::TokenizeOptions options;
  options.unk_fallback = true;
  for (DtiExample& e : examples) {
    auto it = cache.find(e.smiles);
    if (it == cache.end()) {
      it = cache.emplace(e.smiles, vq::tokenize(chem::parse_smiles(e.smiles), codebook, encoder, options).tokens).first;
    }
    e.tokens = it->second;
  }
}

void shuffle_labels(std::vector<DtiExample>& examples, std::uint64_t seed) {
  std::vector<std::size_t> perm(examples.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  SeededRng rng(seed);
  rng.shuffle(perm.begin(), perm.end());
  std::vector<std::pair<double, int>> targets;
  for (const DtiExample& e : examples) targets.emplace_back(e.score, e.label);
  for (std::size_t i = 0; i < examples.size(); ++i) std::tie(examples[i].score, examples[i].label) = targets[perm[i]];
}

DtiTrainConfig DtiTrainConfig::paper() {
  DtiTrainConfig c;
  c.ligand = mlm::TransformerConfig::paper();
  c.ligand.dropout = 0.4;
  c.lr = 3e-5;
  c.weight_decay = 0.05;
  c.warmup_fraction = 0.05;
  c.batch_size = 16;
  c.epochs = 30;
  return c;
}

std::vector<DtiPrediction> predict(const DtiModel& model, const ToyProteinEncoder& proteins,
                                   const std::vector<DtiExample>& examples, const std::vector<std::size_t>& rows) {
  std::map<std::string, Tensor> cache;
  std::vector<DtiPrediction> out;
  constexpr std::size_t chunk = 32;
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const std::size_t end = std::min(rows.size(), start + chunk);
    std::vector<std::vector<std::uint32_t>> ligands;
    std::vector<const Tensor*> prots;
    for (std::size_t i = start; i < end; ++i) {
      const DtiExample& e = examples[rows[i]];
      auto it = cache.find(e.sequence);
      if (it == cache.end()) it = cache.emplace(e.sequence, proteins.encode(e.sequence)).first;
      ligands.push_back(e.tokens);
      prots.push_back(&it->second);
    }
    nn::Tape tape(false);
    const std::vector<DtiOutput> outs = model.forward(tape, ligands, prots);
    for (std::size_t i = start; i < end; ++i) {
      const double z = outs[i - start].logit.value().item();
      out.push_back({rows[i], z, 1.0 / (1.0 + std::exp(-z)), examples[rows[i]].label});
    }
  }
  return out;
}

DtiTrainResult train_dti(const std::vector<DtiExample>& examples, std::size_t vocab_size,
                         const DtiTrainConfig& config, const mlm::Transformer* pretrained,
                         const std::function<void(const DtiEpochRow&)>& on_epoch) {
  auto bad = [](const std::string& what) { throw InteractionError(InteractionError::Kind::BadDataset, what); };
  if (examples.empty()) bad("empty DTI dataset");
  if (config.batch_size == 0) throw InteractionError(InteractionError::Kind::BadConfig, "batch size must be positive");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].tokens.empty()) bad("example " + std::to_string(i) + " has no ligand tokens");
  }
  const SeededRng root(config.seed);

  std::map<std::string, std::string> sequences;
  std::vector<eval::SplitPair> pairs;
  for (const DtiExample& e : examples) {
    auto [it, inserted] = sequences.emplace(e.protein_id, e.sequence);
    if (!inserted && it->second != e.sequence) bad("protein " + e.protein_id + " has two different sequences");
    pairs.push_back({e.ligand_id, e.protein_id, e.label});
  }
  DtiTrainResult result;
  result.split = eval::protein_cold_split(sequences, pairs, config.identity, config.ratios, root.split("split").next_u64());
  const auto& train = result.split.pairs[eval::kTrain];
  const auto& val = result.split.pairs[eval::kValidation];
  const auto& test = result.split.pairs[eval::kTest];

  const ToyProteinEncoder protein_encoder(config.protein_dim, root.split("protein").next_u64());
  result.proteins = protein_encoder;
  std::map<std::string, Tensor> protein_states;
  for (const auto& [id, seq] : sequences) protein_states.emplace(id, protein_encoder.encode(seq));

  SeededRng init_rng = root.split("init");
  DtiModel model(config.ligand, vocab_size, config.protein_dim, config.interaction, init_rng);
  if (pretrained) model.load_ligand_body(*pretrained);
  double mean_score = 0.0;
  for (std::size_t i : train) mean_score += examples[i].score;
  model.set_score_bias(mean_score / static_cast<double>(train.size()));

  std::vector<nn::Parameter*> params = model.parameters();
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  adam_cfg.weight_decay = config.weight_decay;
  adam_cfg.decoupled = true;
  nn::Adam adam(params, adam_cfg);
  const std::size_t per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total = per_epoch * config.epochs;
  const auto warmup = static_cast<std::size_t>(std::floor(config.warmup_fraction * static_cast<double>(total)));

  SeededRng order_rng = root.split("order"), drop_rng = root.split("dropout");
  std::vector<std::size_t> idx(train.begin(), train.end());
  result.model = model;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(idx.begin(), idx.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += config.batch_size, ++step) {
      const std::size_t end = std::min(idx.size(), start + config.batch_size);
      std::vector<std::vector<std::uint32_t>> ligands;
      std::vector<const Tensor*> prots;
      std::vector<double> labels, scores;
      for (std::size_t i = start; i < end; ++i) {
        const DtiExample& e = examples[idx[i]];
        ligands.push_back(e.tokens);
        prots.push_back(&protein_states.at(e.protein_id));
        labels.push_back(e.label);
        scores.push_back(e.score);
      }
      nn::Tape tape;
      SeededRng batch_rng = drop_rng.split(step);
      const std::vector<DtiOutput> outs = model.forward(tape, ligands, prots, &batch_rng);
      const Var loss = dti_loss(outs, labels, scores, config.interaction.lambda_reg);
      tape.backward(loss);
      adam.zero_grad();
      tape.accumulate_param_grads(params);
      adam.set_lr(warmup > 0 && step < warmup ? config.lr * static_cast<double>(step + 1) / (warmup + 1) : config.lr);
      adam.step();
      loss_sum += loss.value().item() * static_cast<double>(end - start);
    }
    DtiEpochRow row{epoch, loss_sum / static_cast<double>(idx.size()), NAN};
    const std::vector<DtiPrediction> vp = predict(model, protein_encoder, examples, val);
    std::vector<double> s;
    std::vector<int> y;
    for (const DtiPrediction& p : vp) {
      s.push_back(p.logit);
      y.push_back(p.label);
    }
    row.validation_auroc = eval::auroc(s, y);
    if (row.validation_auroc > result.best_validation_auroc) {
      result.best_validation_auroc = row.validation_auroc;
      result.best_epoch = epoch;
      result.model = model;
    }
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }

  result.test_predictions = predict(result.model, protein_encoder, examples, test);
  std::vector<double> s;
  std::vector<int> y;
  for (const DtiPrediction& p : result.test_predictions) {
    s.push_back(p.logit);
    y.push_back(p.label);
  }
  result.test_metrics = eval::ranking_metrics(s, y);
  return result;
}

void write_predictions_csv(std::ostream& out, const std::vector<DtiPrediction>& predictions) {
  out << "pair_id,logit,probability,label\n";
  for (const DtiPrediction& p : predictions) {
    out << p.pair_id << ',' << num(p.logit) << ',' << num(p.probability) << ',' << p.label << '\n';
  }
}

}  // namespace vqatom::interaction
