#include "cli/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

#include "vqatom/util/format.hpp"

namespace vqatom::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
    throw InputError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

std::size_t to_positive(const std::string& key, const std::string& v) {
  const std::size_t n = to_size(key, v);
  if (n == 0) throw InputError(key + ": must be positive");
  return n;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
    throw InputError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

double to_unit(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x < 0.0 || x > 1.0) throw InputError(key + ": must lie in [0, 1]");
  return x;
}

double to_positive_double(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (!(x > 0.0)) throw InputError(key + ": must be positive");
  return x;
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string num(double v) { return format_double(v); }
std::string num(std::size_t v) { return std::to_string(v); }

#define VQ_SIZE(KEY, FIELD) \
  Entry{KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_size(k, v); }, \
        [](const RunConfig& c) { return num(c.FIELD); }}
#define VQ_POS(KEY, FIELD) \
  Entry{KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_positive(k, v); }, \
        [](const RunConfig& c) { return num(c.FIELD); }}
#define VQ_REAL(KEY, FIELD) \
  Entry{KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_double(k, v); }, \
        [](const RunConfig& c) { return num(c.FIELD); }}
#define VQ_PREAL(KEY, FIELD) \
  Entry{KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_positive_double(k, v); }, \
        [](const RunConfig& c) { return num(c.FIELD); }}
#define VQ_UNIT(KEY, FIELD) \
  Entry{KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_unit(k, v); }, \
        [](const RunConfig& c) { return num(c.FIELD); }}
#define VQ_PATH(KEY, FIELD) \
  Entry{KEY, [](RunConfig& c, const std::string&, const std::string& v) { c.FIELD = v; }, \
        [](const RunConfig& c) { return c.FIELD; }}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      Entry{"preset", [](RunConfig& c, const std::string&, const std::string& v) { c.preset = parse_preset(v); },
            [](const RunConfig& c) { return std::string(c.preset == Preset::Paper ? "paper" : "desk"); }},
      VQ_PATH("input", input),
      VQ_PATH("output", output),
      VQ_PATH("codebook", codebook),
      VQ_PATH("checkpoint", checkpoint),
      VQ_REAL("threshold", threshold),
      VQ_UNIT("identity", identity),
      Entry{"ratios", [](RunConfig& c, const std::string&, const std::string& v) { c.ratios = parse_ratios(v); },
            [](const RunConfig& c) {
              return num(c.ratios[0]) + "," + num(c.ratios[1]) + "," + num(c.ratios[2]);
            }},

      VQ_POS("encoder.layers", encoder.layers),
      VQ_POS("encoder.hidden_dim", encoder.hidden_dim),
      VQ_POS("encoder.latent_dim", encoder.latent_dim),

      VQ_POS("vq.codes_per_element", vq.codes_per_element),
      VQ_POS("vq.batch_size", vq.batch_size),
      VQ_POS("vq.epochs", vq.epochs),
      VQ_PREAL("vq.lr", vq.lr),
      VQ_REAL("vq.lambda1", vq.weights.lambda1),
      VQ_REAL("vq.lambda2", vq.weights.lambda2),
      VQ_REAL("vq.margin", vq.weights.margin),
      VQ_UNIT("vq.ema_decay", vq.ema.decay),
      VQ_REAL("vq.dead_threshold", vq.ema.dead_threshold),
      VQ_SIZE("vq.reinit_patience", vq.ema.reinit_patience),

      VQ_POS("mlm.layers", mlm.model.layers),
      VQ_POS("mlm.model_dim", mlm.model.model_dim),
      VQ_POS("mlm.heads", mlm.model.heads),
      VQ_POS("mlm.ff_dim", mlm.model.ff_dim),
      VQ_UNIT("mlm.dropout", mlm.model.dropout),
      VQ_UNIT("mlm.mask_prob", mlm.masking.mask_prob),
      VQ_PREAL("mlm.lr", mlm.lr),
      VQ_REAL("mlm.weight_decay", mlm.weight_decay),
      VQ_REAL("mlm.clip_norm", mlm.clip_norm),
      VQ_POS("mlm.batch_size", mlm.batch_size),
      VQ_POS("mlm.epochs", mlm.epochs),
      VQ_SIZE("mlm.max_steps", mlm.max_steps),
      VQ_UNIT("mlm.warmup_fraction", mlm.warmup_fraction),
      VQ_UNIT("mlm.validation_fraction", mlm.validation_fraction),

      VQ_POS("dti.ligand_layers", dti.ligand.layers),
      VQ_POS("dti.ligand_model_dim", dti.ligand.model_dim),
      VQ_POS("dti.ligand_heads", dti.ligand.heads),
      VQ_POS("dti.ligand_ff_dim", dti.ligand.ff_dim),
      VQ_UNIT("dti.ligand_dropout", dti.ligand.dropout),
      VQ_POS("dti.heads", dti.interaction.heads),
      VQ_POS("dti.head_dim", dti.interaction.head_dim),
      VQ_PREAL("dti.temperature", dti.interaction.temperature),
      VQ_UNIT("dti.token_dropout", dti.interaction.token_dropout),
      VQ_REAL("dti.lambda_reg", dti.interaction.lambda_reg),
      VQ_POS("dti.top_k", dti.interaction.top_k),
      VQ_POS("dti.protein_dim", dti.protein_dim),
      VQ_PREAL("dti.lr", dti.lr),
      VQ_REAL("dti.weight_decay", dti.weight_decay),
      VQ_UNIT("dti.warmup_fraction", dti.warmup_fraction),
      VQ_POS("dti.batch_size", dti.batch_size),
      VQ_POS("dti.epochs", dti.epochs),
      VQ_POS("dti.tokenizer_codes", tokenizer_codes),
      VQ_POS("dti.tokenizer_epochs", tokenizer_epochs),
      VQ_REAL("dti.layerwise_lr_decay", recorded.layerwise_lr_decay),
      VQ_REAL("dti.esm_lr_multiplier", recorded.esm_lr_multiplier),
      VQ_SIZE("dti.esm_frozen_layers", recorded.esm_frozen_layers),

      VQ_POS("toy.ligands", planted.ligands),
      VQ_POS("toy.proteins", planted.proteins),
      VQ_POS("toy.pairs_per_protein", planted.pairs_per_protein),
      VQ_PATH("toy.motif", planted.motif),
  };
  return table;
}

#undef VQ_SIZE
#undef VQ_POS
#undef VQ_REAL
#undef VQ_PREAL
#undef VQ_UNIT
#undef VQ_PATH

const Entry* find_entry(const std::string& key) {
  for (const Entry& e : entries()) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

}  // namespace

Preset parse_preset(const std::string& text) {
  if (text == "desk") return Preset::Desk;
  if (text == "paper") return Preset::Paper;
  throw InputError("preset must be 'desk' or 'paper', got '" + text + "'");
}

RunConfig RunConfig::for_preset(Preset preset) {
  RunConfig c;
  c.preset = preset;
  if (preset == Preset::Paper) {
    c.vq.codes_per_element = 10000;
    c.vq.batch_size = 256;
    c.vq.epochs = 50;
    c.vq.lr = 1e-3;
    c.mlm = mlm::MlmTrainConfig::paper();
    c.dti = interaction::DtiTrainConfig::paper();
  }
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Entry* e = find_entry(key);
  if (!e) throw InputError("unknown config key '" + key + "'");
  e->set(*this, key, value);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const Entry& e : entries()) k.push_back(e.key);
    return k;
  }();
  return out;
}

std::string RunConfig::dump() const {
  std::string out;
  for (const Entry& e : entries()) out += e.key + "=" + e.get(*this) + "\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                   const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw InputError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw InputError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(where + "expected key = value");
    const std::string name = trim(line.substr(0, eq));
    if (name.empty()) throw InputError(where + "missing key");
    const std::string key = section.empty() ? name : section + "." + name;
    if (!find_entry(key)) throw InputError(where + "unknown config key '" + key + "'");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

std::array<double, eval::kSplitCount> parse_ratios(const std::string& text) {
  std::array<double, eval::kSplitCount> out{};
  std::size_t start = 0, n = 0;
  while (true) {
    const auto comma = text.find(',', start);
    const std::string part = trim(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (n == eval::kSplitCount) throw InputError("ratios: expected three comma-separated values");
    out[n++] = to_double("ratios", part);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (n != eval::kSplitCount) throw InputError("ratios: expected three comma-separated values");
  double sum = 0.0;
  for (double r : out) {
    if (r < 0.0) throw InputError("ratios: values must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw InputError("ratios: values must sum to 1");
  return out;
}

std::string paper_constants_line(const RunConfig& c) {
  std::ostringstream out;
  out << "codes_per_element=" << c.vq.codes_per_element << " latent_dim=" << c.encoder.latent_dim
      << " encoder_layers=" << c.encoder.layers << " mlm_dims=" << c.mlm.model.layers << '/' << c.mlm.model.model_dim
      << '/' << c.mlm.model.heads << '/' << c.mlm.model.ff_dim << " mlm_dropout=" << num(c.mlm.model.dropout)
      << " mask=" << num(c.mlm.masking.mask_prob) << " mlm_lr=" << num(c.mlm.lr) << " mlm_batch=" << c.mlm.batch_size
      << " mlm_epochs=" << c.mlm.epochs << " tau=" << num(c.dti.interaction.temperature)
      << " interaction_heads=" << c.dti.interaction.heads << " token_dropout=" << num(c.dti.interaction.token_dropout)
      << " threshold=" << num(c.threshold) << " lambda1=" << num(c.vq.weights.lambda1)
      << " lambda2=" << num(c.vq.weights.lambda2) << " lambda_reg=" << num(c.dti.interaction.lambda_reg)
      << " vq_lr=" << num(c.vq.lr) << " vq_batch=" << c.vq.batch_size << " vq_epochs=" << c.vq.epochs
      << " dti_lr=" << num(c.dti.lr) << " dti_wd=" << num(c.dti.weight_decay) << " dti_batch=" << c.dti.batch_size
      << " dti_epochs=" << c.dti.epochs << " dti_dropout=" << num(c.dti.ligand.dropout)
      << " warmup=" << num(c.dti.warmup_fraction) << " llrd=" << num(c.recorded.layerwise_lr_decay)
      << " esm_lr_multiplier=" << num(c.recorded.esm_lr_multiplier)
      << " esm_frozen_layers=" << c.recorded.esm_frozen_layers;
  return out.str();
}

}  // namespace vqatom::cli
