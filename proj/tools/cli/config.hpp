#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqatom/encoder/gine.hpp"
#include "vqatom/interaction/dti.hpp"
#include "vqatom/mlm/pretrain.hpp"
#include "vqatom/vq/train.hpp"

namespace vqatom::cli {

// Bad flags, config files, input files or records. Maps to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A checked invariant did not hold. Maps to exit code 3.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Preset { Desk, Paper };

// Constants the paper states for components this pipeline replaces (ESM
// fine-tuning). They are echoed with the paper preset but not used.
struct RecordedConstants {
  double layerwise_lr_decay = 0.97;
  double esm_lr_multiplier = 0.1;
  std::size_t esm_frozen_layers = 28;
};

struct RunConfig {
  std::uint64_t seed = 0;
  Preset preset = Preset::Desk;

  std::string input, output, codebook, checkpoint;

  double threshold = eval::kDefaultThreshold;
  double identity = 0.4;
  std::array<double, eval::kSplitCount> ratios{5.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0};

  encoder::EncoderConfig encoder;
  vq::VqTrainConfig vq;
  mlm::MlmTrainConfig mlm;
  interaction::DtiTrainConfig dti;
  std::size_t tokenizer_codes = 8;   // ligand tokenizer of train-dti-toy
  std::size_t tokenizer_epochs = 2;
  interaction::PlantedRuleConfig planted;
  RecordedConstants recorded;

  static RunConfig for_preset(Preset preset);

  // Sets one key. Keys are "name" or "section.name", e.g. "vq.epochs".
  // Throws InputError for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  // Every accepted key in a stable order.
  static const std::vector<std::string>& keys();
  // key=value lines for every key, in keys() order.
  std::string dump() const;
};

Preset parse_preset(const std::string& text);

// Flat key=value text with [section] headers; '#' starts a comment. Returns
// entries as "section.key" -> value in file order, with "file:line" context
// in errors.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                   const std::string& origin);

// "a,b,c" with non-negative entries summing to 1.
std::array<double, eval::kSplitCount> parse_ratios(const std::string& text);

// The paper constant set, one line, for the run header.
std::string paper_constants_line(const RunConfig& config);

}  // namespace vqatom::cli
