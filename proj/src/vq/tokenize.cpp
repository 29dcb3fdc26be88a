#include "vqatom/vq/tokenize.hpp"

#include <json.hpp>

namespace vqatom::vq {

TokenSequence tokenize(const chem::MolGraph& graph, const Codebook& codebook, const encoder::Encoder& encoder,
                       const TokenizeOptions& options) {
  if (!codebook.frozen()) throw VqError(VqError::Kind::NotFrozen, "tokenize needs a frozen codebook");
  TokenSequence seq;
  const std::size_t n = graph.atoms.size();
  seq.tokens.reserve(n);
  seq.elements.reserve(n);
  if (n == 0) return seq;
  const nn::Tensor z = encoder.encode(encoder::GraphBatch::from_graph(graph));
  for (std::size_t i = 0; i < n; ++i) {
    const chem::Element e = graph.atoms[i].element;
    seq.elements.push_back(e);
    if (!codebook.table(e)) {
      if (!options.unk_fallback) {
        throw VqError(VqError::Kind::UnknownElement,
                      "no codebook table for element " + std::string(chem::element_symbol(e)));
      }
      seq.tokens.push_back(codebook.unk_id());
      continue;
    }
    seq.tokens.push_back(codebook.token_id(e, codebook.assign(z.row(i), e).code));
  }
  return seq;
}

std::string to_json_line(const TokenSequence& seq) {
  nlohmann::ordered_json j;
  j["id"] = seq.id;
  j["smiles"] = seq.smiles;
  j["tokens"] = seq.tokens;
  std::vector<std::string> symbols;
  for (chem::Element e : seq.elements) symbols.emplace_back(chem::element_symbol(e));
  j["elements"] = symbols;
  return j.dump();
}

}  // namespace vqatom::vq
