#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqatom/chem/mol.hpp"
#include "vqatom/encoder/gine.hpp"
#include "vqatom/vq/codebook.hpp"

namespace vqatom::vq {

struct TokenSequence {
  std::string id;
  std::string smiles;
  std::vector<std::uint32_t> tokens;  // one per atom, atom order
  std::vector<chem::Element> elements;
};

struct TokenizeOptions {
  // Map atoms of elements without a table to the UNK id instead of throwing.
  bool unk_fallback = false;
};

TokenSequence tokenize(const chem::MolGraph& graph, const Codebook& codebook, const encoder::Encoder& encoder,
                       const TokenizeOptions& options = {});

// {"id":..., "smiles":..., "tokens":[...], "elements":[...]} without a newline.
std::string to_json_line(const TokenSequence& seq);

}  // namespace vqatom::vq
