#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqatom/chem/mol.hpp"
#include "vqatom/nn/tensor.hpp"
#include "vqatom/util/rng.hpp"

namespace vqatom::vq {

class VqError : public std::runtime_error {
 public:
  enum class Kind { EmptyElement, UnknownElement, FrozenCodebook, NotFrozen, EmptyBatch, EmptyCorpus, BadFile };
  VqError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct EmaConfig {
  double decay = 0.99;
  double dead_threshold = 1e-3;
  std::size_t reinit_patience = 5;
};

struct ElementTable {
  chem::Element element = chem::Element::C;
  std::uint32_t base = 0;
  nn::Tensor codes;     // K x D, unit rows
  std::vector<double> ema_count;
  nn::Tensor ema_sum;   // K x D
  std::vector<bool> dead;
  std::vector<std::size_t> low_streak;

  std::size_t size() const { return codes.rows(); }
};

struct Assignment {
  std::size_t code = 0;
  double similarity = 0.0;
};

// Per-element code tables laid out in element order; the token for code k of
// element e is base(e) + k. Three special ids follow the code range.
class Codebook {
 public:
  Codebook() = default;
  Codebook(std::size_t latent_dim, EmaConfig ema) : latent_dim_(latent_dim), ema_(ema) {}

  // Adds a table and assigns its base after all existing tables.
  ElementTable& add_table(chem::Element element, nn::Tensor codes, std::vector<double> counts);

  const ElementTable* table(chem::Element element) const;
  const std::map<chem::Element, ElementTable>& tables() const { return tables_; }
  std::size_t latent_dim() const { return latent_dim_; }
  const EmaConfig& ema_config() const { return ema_; }
  void set_ema_config(const EmaConfig& ema) { ema_ = ema; }

  std::uint32_t code_count() const { return next_base_; }
  std::uint32_t pad_id() const { return next_base_; }
  std::uint32_t mask_id() const { return next_base_ + 1; }
  std::uint32_t unk_id() const { return next_base_ + 2; }
  std::uint32_t vocab_size() const { return next_base_ + 3; }

  // Highest dot product with the element's codes; ties go to the lower index.
  Assignment assign(std::span<const double> latent, chem::Element element) const;
  std::uint32_t token_id(chem::Element element, std::size_t code) const;
  std::optional<std::pair<chem::Element, std::size_t>> decode(std::uint32_t token) const;

  // EMA re-estimation from one batch. latents[i] belongs to elements[i] and
  // was assigned codes[i].
  void ema_update(const nn::Tensor& latents, std::span<const chem::Element> elements,
                  std::span<const std::size_t> codes, SeededRng& rng);

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  // Largest |norm - 1| over all code rows.
  double max_norm_deviation() const;

  void write(std::ostream& out) const;
  static Codebook read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Codebook load(const std::filesystem::path& path);

 private:
  std::size_t latent_dim_ = 16;
  EmaConfig ema_;
  std::map<chem::Element, ElementTable> tables_;
  std::uint32_t next_base_ = 0;
  bool frozen_ = false;
};

struct KMeansResult {
  nn::Tensor centers;             // K x D, unit rows
  std::vector<std::size_t> sizes; // points per center
  std::vector<bool> surplus;      // duplicated because distinct points < K
  std::size_t iterations = 0;
  double inertia = 0.0;           // sum of squared distances to centers
};

// Spherical k-means with k-means++ seeding; stops at an assignment fixpoint or
// after max_iter Lloyd steps.
KMeansResult kmeans(const nn::Tensor& points, std::size_t k, SeededRng& rng, std::size_t max_iter = 100);

Codebook kmeans_init(const std::map<chem::Element, nn::Tensor>& latents_by_element, std::size_t k,
                     std::uint64_t seed, std::size_t latent_dim = 16, EmaConfig ema = {});

}  // namespace vqatom::vq
