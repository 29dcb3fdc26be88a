#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>

#include "vqatom/nn/tape.hpp"

namespace vqatom::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary parameter file:
//   "VQNM" | u32 version | u32 record count |
//   per record: u32 name length, name bytes, u32 rank, u32 dims[rank],
//               f64 values (little-endian, row-major)
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, std::span<const Parameter* const> params);
void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter* const> params);

std::map<std::string, Tensor> read_checkpoint(std::istream& in);
std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path);

// Copies tensors into parameters by name. Throws when a name is missing or a
// shape differs.
void assign_parameters(std::span<Parameter* const> params, const std::map<std::string, Tensor>& values);

namespace binio {
void write_u32(std::ostream& out, std::uint32_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);
std::uint32_t read_u32(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in, std::uint32_t max_len = 1u << 20);
}  // namespace binio

}  // namespace vqatom::nn
