#include "cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli/config.hpp"
#include "vqatom/chem/mol.hpp"
#include "vqatom/eval/metrics.hpp"
#include "vqatom/eval/split.hpp"
#include "vqatom/featurize/features.hpp"
#include "vqatom/interaction/dti.hpp"
#include "vqatom/mlm/pretrain.hpp"
#include "vqatom/nn/checkpoint.hpp"
#include "vqatom/nn/tensor.hpp"
#include "vqatom/util/format.hpp"
#include "vqatom/vq/tokenize.hpp"
#include "vqatom/vq/train.hpp"

namespace vqatom::cli {

namespace {

using nlohmann::ordered_json;

// ---------------------------------------------------------------- plumbing

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(worker_count(), n);
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    body(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(body, t, workers);
    for (auto& th : pool) th.join();
  }
  // The error of the earliest record wins, whatever the thread timing.
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::ifstream open_input(const std::string& path, const std::string& flag) {
  if (path.empty()) throw InputError(flag + " is required");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

void write_to(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& fn) {
  if (path.empty()) {
    fn(fallback);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  fn(f);
  f.flush();
  if (!f) throw InputError("write failed: " + path);
}

std::string encoder_path(const RunConfig& c, const std::string& codebook) {
  return c.checkpoint.empty() ? codebook + ".encoder" : c.checkpoint;
}

struct Molecule {
  chem::SmilesRecord record;
  chem::MolGraph graph;
};

std::vector<Molecule> load_molecules(const std::string& path) {
  std::ifstream in = open_input(path, "--input");
  std::vector<chem::SmilesRecord> records = chem::read_smiles_records(in);
  std::vector<Molecule> out(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    out[i].record = records[i];
    try {
      out[i].graph = chem::parse_smiles(records[i].smiles);
    } catch (const chem::ParseError& e) {
      throw InputError(path + ":" + std::to_string(records[i].line) + ": " + records[i].id + ": " +
                       std::string(chem::parse_error_name(e.kind())) + " at offset " + std::to_string(e.offset()) +
                       ": " + e.detail());
    }
  });
  if (out.empty()) throw InputError(path + ": no molecules");
  return out;
}

std::string_view order_name(chem::BondOrder o) {
  switch (o) {
    case chem::BondOrder::Single: return "single";
    case chem::BondOrder::Double: return "double";
    case chem::BondOrder::Triple: return "triple";
    case chem::BondOrder::Aromatic: return "aromatic";
  }
  return "single";
}

encoder::Encoder load_encoder(const RunConfig& c, const std::string& path) {
  SeededRng unused(0);
  encoder::Encoder enc(c.encoder, unused);
  std::vector<nn::Parameter*> params = enc.parameters();
  nn::assign_parameters(params, nn::load_checkpoint(path));
  return enc;
}

// ---------------------------------------------------------------- commands

void cmd_parse(const RunConfig& c, std::ostream& out) {
  const std::vector<Molecule> mols = load_molecules(c.input);
  write_to(c.output, out, [&](std::ostream& os) {
    for (const Molecule& m : mols) {
      ordered_json j;
      j["id"] = m.record.id;
      j["smiles"] = m.record.smiles;
      ordered_json atoms = ordered_json::array();
      for (const chem::Atom& a : m.graph.atoms) {
        ordered_json ja;
        ja["element"] = std::string(chem::element_symbol(a.element));
        ja["charge"] = a.formal_charge;
        ja["h"] = a.total_h();
        ja["aromatic"] = a.aromatic;
        atoms.push_back(ja);
      }
      j["atoms"] = atoms;
      ordered_json bonds = ordered_json::array();
      for (const chem::Bond& b : m.graph.bonds) bonds.push_back({b.a, b.b, std::string(order_name(b.order))});
      j["bonds"] = bonds;
      j["rings"] = m.graph.rings;
      os << j.dump() << '\n';
    }
  });
}

void cmd_featurize(const RunConfig& c, std::ostream& out) {
  const std::vector<Molecule> mols = load_molecules(c.input);
  std::vector<std::string> lines(mols.size());
  parallel_for(mols.size(), [&](std::size_t i) {
    const feat::MolFeatures f = feat::featurize_molecule(mols[i].graph);
    ordered_json j;
    j["id"] = mols[i].record.id;
    j["n_atoms"] = mols[i].graph.atom_count();
    j["features"] = f.atoms;
    ordered_json bonds = ordered_json::array();
    for (auto [a, b] : f.bond_atoms) bonds.push_back({a, b});
    j["bonds"] = bonds;
    j["bond_features"] = f.bonds;
    lines[i] = j.dump();
  });
  write_to(c.output, out, [&](std::ostream& os) {
    for (const auto& l : lines) os << l << '\n';
  });
}

void cmd_train_vq(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const std::string cb_path = c.codebook.empty() ? c.output : c.codebook;
  if (cb_path.empty()) throw InputError("train-vq needs --codebook (or --output) for the codebook file");
  const std::vector<Molecule> mols = load_molecules(c.input);
  std::vector<chem::MolGraph> graphs;
  for (const Molecule& m : mols) graphs.push_back(m.graph);

  SeededRng init = SeededRng(c.seed).split("encoder");
  const encoder::Encoder initial(c.encoder, init);
  vq::VqTrainConfig vc = c.vq;
  vc.seed = c.seed;
  double worst_norm = 0.0;
  out << "epoch,atoms,loss,commit,latent_repel,codebook_repel,dead_codes,max_norm_deviation\n";
  const vq::VqTrainResult r = vq::train_vq(graphs, initial, vc, [&](const vq::EpochStats& s) {
    out << s.epoch << ',' << s.atoms << ',' << format_double(s.loss) << ',' << format_double(s.commit) << ','
        << format_double(s.latent_repel) << ',' << format_double(s.codebook_repel) << ',' << s.dead_codes << ','
        << format_double(s.max_norm_deviation) << '\n';
    err << "epoch " << s.epoch << " commit " << format_double(s.commit) << '\n';
    worst_norm = std::max(worst_norm, s.max_norm_deviation);
  });
  worst_norm = std::max(worst_norm, r.codebook.max_norm_deviation());
  if (worst_norm > 1e-9) {
    throw InvariantError("codebook rows drifted from unit norm by " + format_double(worst_norm));
  }
  r.codebook.save(cb_path);
  const std::vector<const nn::Parameter*> params = r.encoder.parameters();
  nn::save_checkpoint(encoder_path(c, cb_path), params);
  err << "codebook: " << r.codebook.code_count() << " codes over " << r.codebook.tables().size()
      << " elements -> " << cb_path << '\n';
}

void cmd_tokenize(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.codebook.empty()) throw InputError("tokenize needs --codebook");
  const vq::Codebook cb = vq::Codebook::load(c.codebook);
  const encoder::Encoder enc = load_encoder(c, encoder_path(c, c.codebook));
  const std::vector<Molecule> mols = load_molecules(c.input);
  std::vector<std::string> lines(mols.size());
  std::vector<std::size_t> unk(mols.size(), 0);
  parallel_for(mols.size(), [&](std::size_t i) {
    vq::TokenSequence seq = vq::tokenize(mols[i].graph, cb, enc, {.unk_fallback = true});
    seq.id = mols[i].record.id;
    seq.smiles = mols[i].record.smiles;
    unk[i] = static_cast<std::size_t>(std::count(seq.tokens.begin(), seq.tokens.end(), cb.unk_id()));
    lines[i] = vq::to_json_line(seq);
  });
  write_to(c.output, out, [&](std::ostream& os) {
    for (const auto& l : lines) os << l << '\n';
  });
  const std::size_t total_unk = std::accumulate(unk.begin(), unk.end(), std::size_t{0});
  if (total_unk > 0) err << total_unk << " atoms of elements without a codebook table mapped to UNK\n";
}

std::vector<std::vector<std::uint32_t>> read_token_lines(const std::string& path, const mlm::Vocab& vocab) {
  std::ifstream in = open_input(path, "--input");
  std::vector<std::vector<std::uint32_t>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(where + "invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array()) {
      throw InputError(where + "expected an object with a \"tokens\" array");
    }
    std::vector<std::uint32_t> seq;
    for (const auto& t : j["tokens"]) {
      if (!t.is_number_unsigned() || t.get<std::uint64_t>() >= vocab.size() || t.get<std::uint64_t>() == vocab.pad() ||
          t.get<std::uint64_t>() == vocab.mask()) {
        throw InputError(where + "token " + t.dump() + " is not a codebook or UNK id for this codebook");
      }
      seq.push_back(t.get<std::uint32_t>());
    }
    if (!seq.empty()) out.push_back(std::move(seq));
  }
  if (out.empty()) throw InputError(path + ": no token sequences");
  return out;
}

void cmd_pretrain_mlm(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.codebook.empty()) throw InputError("pretrain-mlm needs --codebook for the vocabulary");
  if (c.checkpoint.empty()) throw InputError("pretrain-mlm needs --checkpoint for the model file");
  const vq::Codebook cb = vq::Codebook::load(c.codebook);
  const mlm::Vocab vocab{cb.code_count()};
  const auto corpus = read_token_lines(c.input, vocab);
  mlm::MlmTrainConfig mc = c.mlm;
  mc.seed = c.seed;
  const mlm::MlmTrainResult r = mlm::train_mlm(corpus, vocab, mc);
  write_to(c.output, out, [&](std::ostream& os) { mlm::write_log_csv(os, r.log); });
  const std::vector<const nn::Parameter*> params = r.model.parameters();
  nn::save_checkpoint(c.checkpoint, params);
  err << "sequences " << corpus.size() << ", best validation loss " << format_double(r.best_validation_loss)
      << " at step " << r.best_step << ", skipped batches " << r.skipped_batches << '\n';
}

std::vector<interaction::DtiExample> read_dataset(const std::string& path, double threshold) {
  std::ifstream in = open_input(path, "--input");
  try {
    return interaction::read_dti_tsv(in, threshold);
  } catch (const interaction::InteractionError& e) {
    throw InputError(path + ": " + e.what());
  }
}

void cmd_train_dti_toy(const RunConfig& c, bool shuffle, const std::string& dataset_out, std::ostream& out,
                       std::ostream& err) {
  std::vector<interaction::DtiExample> examples;
  if (c.input.empty()) {
    interaction::PlantedRuleConfig pc = c.planted;
    pc.seed = c.seed;
    examples = interaction::planted_rule_dataset(pc);
    err << "planted-rule dataset: " << examples.size() << " pairs\n";
  } else {
    examples = read_dataset(c.input, c.threshold);
  }
  if (shuffle) interaction::shuffle_labels(examples, c.seed + 1);
  if (!dataset_out.empty()) {
    write_to(dataset_out, out, [&](std::ostream& os) { interaction::write_dti_tsv(os, examples); });
  }
  const vq::VqTrainResult tok = interaction::fit_ligand_tokenizer(examples, c.tokenizer_codes, c.tokenizer_epochs, c.seed);
  interaction::attach_tokens(examples, tok.codebook, tok.encoder);
  if (!c.codebook.empty()) {
    tok.codebook.save(c.codebook);
    const std::vector<const nn::Parameter*> params = tok.encoder.parameters();
    nn::save_checkpoint(c.codebook + ".encoder", params);
  }
  interaction::DtiTrainConfig dc = c.dti;
  dc.seed = c.seed;
  dc.threshold = c.threshold;
  dc.identity = c.identity;
  dc.ratios = c.ratios;
  const interaction::DtiTrainResult r =
      interaction::train_dti(examples, tok.codebook.vocab_size(), dc, nullptr, [&](const interaction::DtiEpochRow& row) {
        err << "epoch " << row.epoch << " loss " << format_double(row.train_loss) << " validation_auroc "
            << format_double(row.validation_auroc) << '\n';
      });
  err << eval::split_summary(r.split);
  err << "best epoch " << r.best_epoch << ", validation auroc " << format_double(r.best_validation_auroc) << '\n';
  if (!c.output.empty()) {
    write_to(c.output, out, [&](std::ostream& os) { interaction::write_predictions_csv(os, r.test_predictions); });
  }
  if (!c.checkpoint.empty()) {
    const interaction::DtiModel& model = r.model;
    const std::vector<const nn::Parameter*> params = model.parameters();
    nn::save_checkpoint(c.checkpoint, params);
  }
  out << eval::metrics_json(r.test_metrics) << '\n';
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) return out;
    start = comma + 1;
  }
}

void cmd_eval(const RunConfig& c, std::ostream& out) {
  std::ifstream in = open_input(c.input, "--pred");
  std::string line;
  if (!std::getline(in, line)) throw InputError(c.input + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv(line);
  auto column = [&](const std::string& name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const std::ptrdiff_t label_col = column("label");
  std::ptrdiff_t score_col = column("logit");
  if (score_col < 0) score_col = column("probability");
  if (label_col < 0 || score_col < 0) {
    throw InputError(c.input + ":1: header needs a label column and a logit or probability column");
  }
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = c.input + ":" + std::to_string(lineno) + ": ";
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw InputError(where + "expected " + std::to_string(header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    const std::string& s = fields[static_cast<std::size_t>(score_col)];
    double score = 0.0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), score);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) throw InputError(where + "bad score '" + s + "'");
    const std::string& l = fields[static_cast<std::size_t>(label_col)];
    if (l != "0" && l != "1") throw InputError(where + "label must be 0 or 1, got '" + l + "'");
    scores.push_back(score);
    labels.push_back(l == "1" ? 1 : 0);
  }
  eval::RankingMetrics m;
  try {
    m = eval::ranking_metrics(scores, labels);
  } catch (const eval::EvalError& e) {
    throw InputError(c.input + ": " + e.what());
  }
  if (!c.output.empty()) write_to(c.output, out, [&](std::ostream& os) { eval::write_metrics_csv(os, m); });
  out << eval::metrics_json(m) << '\n';
}

void cmd_split(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const std::vector<interaction::DtiExample> examples = read_dataset(c.input, c.threshold);
  std::map<std::string, std::string> sequences;
  std::vector<eval::SplitPair> pairs;
  for (const auto& ex : examples) {
    auto [it, inserted] = sequences.emplace(ex.protein_id, ex.sequence);
    if (!inserted && it->second != ex.sequence) {
      throw InputError(c.input + ": protein " + ex.protein_id + " has two different sequences");
    }
    pairs.push_back({ex.ligand_id, ex.protein_id, ex.label});
  }
  const eval::ColdSplit split = eval::protein_cold_split(sequences, pairs, c.identity, c.ratios, c.seed);
  write_to(c.output, out, [&](std::ostream& os) { eval::write_split_manifest(os, split); });
  (c.output.empty() ? err : out) << eval::split_summary(split);
}

// ---------------------------------------------------------------- options

struct Subcommand {
  std::string name;
  std::string help;
  std::string section;  // receives --epochs / --lr
};

const std::vector<Subcommand>& subcommands() {
  static const std::vector<Subcommand> list = {
      {"parse", "Parse SMILES into atom/bond JSON lines", ""},
      {"featurize", "Atom and bond feature vectors as JSON lines", ""},
      {"train-vq", "Train the encoder and per-element codebooks", "vq"},
      {"tokenize", "Map molecules to VQ-Atom token ids", ""},
      {"pretrain-mlm", "Masked-token pretraining on tokenized molecules", "mlm"},
      {"train-dti-toy", "Protein-cold DTI training on the planted-rule dataset", "dti"},
      {"eval", "Ranking metrics of a predictions CSV", ""},
      {"split", "Protein-cold split manifest of a DTI dataset", ""},
      {"selfcheck", "Gradient checks and metric oracles", ""},
  };
  return list;
}

struct Flags {
  std::map<std::string, std::string> values;  // flag name without dashes -> value
  bool shuffle_labels = false;
  std::string dataset_out;
};

void add_options(CLI::App* sub, Flags& flags, const Subcommand& cmd) {
  static const std::vector<std::pair<std::string, std::string>> common = {
      {"seed", "Random seed (u64)"},
      {"preset", "desk or paper"},
      {"config", "key=value config file with [sections]"},
      {"input", "Input file"},
      {"output", "Output file (stdout when omitted)"},
      {"codebook", "Codebook file"},
      {"checkpoint", "Parameter checkpoint file"},
      {"codes-per-element", "Codes per element table"},
      {"epochs", "Training epochs"},
      {"lr", "Learning rate"},
      {"threshold", "Score binarization threshold"},
      {"identity", "Clustering similarity threshold"},
      {"ratios", "Train,validation,test fractions"},
  };
  for (const auto& [name, help] : common) {
    sub->add_option_function<std::string>(
        "--" + name, [&flags, name = name](const std::string& v) { flags.values[name] = v; }, help);
  }
  if (cmd.name == "eval") {
    sub->add_option_function<std::string>(
        "--pred", [&flags](const std::string& v) { flags.values["pred"] = v; }, "Predictions CSV");
  }
  if (cmd.name == "train-dti-toy") {
    sub->add_flag("--shuffle-labels", flags.shuffle_labels, "Permute scores and labels (null control)");
    sub->add_option("--write-dataset", flags.dataset_out, "Also write the training dataset as TSV");
  }
}

// " key=value" for every key whose value differs between the two configs.
std::string changed_keys(const RunConfig& base, const RunConfig& c) {
  std::istringstream a(base.dump()), b(c.dump());
  std::string la, lb, out;
  while (std::getline(a, la) && std::getline(b, lb)) {
    if (la != lb) out += " " + lb;
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig resolve_config(const Flags& flags, const Subcommand& cmd) {
  auto flag = [&](const std::string& name) -> const std::string* {
    auto it = flags.values.find(name);
    return it == flags.values.end() ? nullptr : &it->second;
  };
  std::vector<std::pair<std::string, std::string>> entries;
  if (const std::string* path = flag("config")) entries = parse_config_text(read_file(*path), *path);
  Preset preset = Preset::Desk;
  for (const auto& [k, v] : entries) {
    if (k == "preset") preset = parse_preset(v);
  }
  if (const std::string* p = flag("preset")) preset = parse_preset(*p);
  RunConfig c = RunConfig::for_preset(preset);
  for (const auto& [k, v] : entries) {
    if (k != "preset") c.set(k, v);
  }
  for (const char* key : {"seed", "input", "output", "codebook", "checkpoint", "threshold", "identity", "ratios"}) {
    if (const std::string* v = flag(key)) c.set(key, *v);
  }
  if (const std::string* v = flag("pred")) c.set("input", *v);
  auto sectioned = [&](const std::string& name, const std::string& key) {
    const std::string* v = flag(name);
    if (!v) return;
    if (cmd.section.empty()) throw InputError("--" + name + " does not apply to " + cmd.name);
    c.set(cmd.section + "." + key, *v);
  };
  sectioned("epochs", "epochs");
  sectioned("lr", "lr");
  if (const std::string* v = flag("codes-per-element")) {
    if (cmd.section == "vq") {
      c.set("vq.codes_per_element", *v);
    } else if (cmd.section == "dti") {
      c.set("dti.tokenizer_codes", *v);
    } else {
      throw InputError("--codes-per-element does not apply to " + cmd.name);
    }
  }
  return c;
}

}  // namespace

unsigned worker_count() {
  if (const char* env = std::getenv("VQATOM_THREADS")) {
    unsigned n = 0;
    const std::string s(env);
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec != std::errc() || end != s.data() + s.size() || n == 0) {
      throw InputError("VQATOM_THREADS must be a positive integer, got '" + s + "'");
    }
    return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"VQ-Atom: atom-level molecular tokens, masked pretraining and toy DTI", "vqatom"};
  app.require_subcommand(1);
  Flags flags;
  std::map<CLI::App*, const Subcommand*> by_app;
  for (const Subcommand& cmd : subcommands()) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    add_options(sub, flags, cmd);
    by_app[sub] = &cmd;
  }
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  const Subcommand* cmd = nullptr;
  for (const auto& [sub, c] : by_app) {
    if (sub->parsed()) cmd = c;
  }

  try {
    worker_count();  // validates VQATOM_THREADS up front
    const RunConfig c = resolve_config(flags, *cmd);
    err << "# vqatom " << cmd->name << " seed=" << c.seed << " preset=" << (c.preset == Preset::Paper ? "paper" : "desk")
        << '\n';
    if (c.preset == Preset::Paper) {
      err << "# paper constants: " << paper_constants_line(RunConfig::for_preset(Preset::Paper)) << '\n';
    }
    if (const std::string overrides = changed_keys(RunConfig::for_preset(c.preset), c); !overrides.empty()) {
      err << "# overrides:" << overrides << '\n';
    }

    if (cmd->name == "parse") cmd_parse(c, out);
    else if (cmd->name == "featurize") cmd_featurize(c, out);
    else if (cmd->name == "train-vq") cmd_train_vq(c, out, err);
    else if (cmd->name == "tokenize") cmd_tokenize(c, out, err);
    else if (cmd->name == "pretrain-mlm") cmd_pretrain_mlm(c, out, err);
    else if (cmd->name == "train-dti-toy") cmd_train_dti_toy(c, flags.shuffle_labels, flags.dataset_out, out, err);
    else if (cmd->name == "eval") cmd_eval(c, out);
    else if (cmd->name == "split") cmd_split(c, out, err);
    else if (cmd->name == "selfcheck") {
      if (!selfcheck(out)) {
        err << "error: selfcheck failed\n";
        return kExitInvariant;
      }
    }
    return kExitOk;
  } catch (const InvariantError& e) {
    err << "error: invariant failure: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::logic_error& e) {
    err << "error: invariant failure: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace vqatom::cli
