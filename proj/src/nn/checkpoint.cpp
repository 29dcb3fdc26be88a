#include "vqatom/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace vqatom::nn {

namespace binio {

namespace {
template <typename U>
void write_le(std::ostream& out, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(buf, sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
  unsigned char buf[sizeof(U)];
  in.read(reinterpret_cast<char*>(buf), sizeof(U));
  if (!in) throw CheckpointError("unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}
}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }
void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
float read_f32(std::istream& in) { return std::bit_cast<float>(read_le<std::uint32_t>(in)); }
double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }

std::string read_string(std::istream& in, std::uint32_t max_len) {
  const std::uint32_t n = read_u32(in);
  if (n > max_len) throw CheckpointError("string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw CheckpointError("unexpected end of file in string");
  return s;
}

}  // namespace binio

void write_checkpoint(std::ostream& out, std::span<const Parameter* const> params) {
  out.write("VQNM", 4);
  binio::write_u32(out, kCheckpointVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    binio::write_string(out, p->name);
    binio::write_u32(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) binio::write_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p->value.values()) binio::write_f64(out, v);
  }
}

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter* const> params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
  if (!out) throw CheckpointError("write failed for " + path.string());
}

std::map<std::string, Tensor> read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "VQNM", 4) != 0) throw CheckpointError("bad magic, expected VQNM");
  const std::uint32_t version = binio::read_u32(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = binio::read_u32(in);
  std::map<std::string, Tensor> out;
  for (std::uint32_t r = 0; r < count; ++r) {
    std::string name = binio::read_string(in, 4096);
    const std::uint32_t rank = binio::read_u32(in);
    if (rank > 8) throw CheckpointError("rank " + std::to_string(rank) + " too large for " + name);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = binio::read_u32(in);
    Tensor t(shape);
    for (double& v : t.values()) v = binio::read_f64(in);
    if (!t.all_finite()) throw CheckpointError("non-finite values in " + name);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

void assign_parameters(std::span<Parameter* const> params, const std::map<std::string, Tensor>& values) {
  for (Parameter* p : params) {
    auto it = values.find(p->name);
    if (it == values.end()) throw CheckpointError("checkpoint is missing " + p->name);
    if (!it->second.same_shape(p->value)) {
      throw CheckpointError("shape mismatch for " + p->name + ": checkpoint " +
                            it->second.shape_string() + " vs model " + p->value.shape_string());
    }
    p->value = it->second;
  }
}

}  // namespace vqatom::nn
