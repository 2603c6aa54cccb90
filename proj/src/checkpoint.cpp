// Checkpoint layout (all integers u64 little-endian, reals IEEE-754 binary64
// little-endian):
//   magic "CMLCKPT1" (8 bytes)
//   M, d_0 .. d_{M-1}, hidden_dim, latent_dim, head_hidden_dim, num_classes
//   P (parameter count), then P reals in declaration order.

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "cml/errors.hpp"
#include "cml/model.hpp"

namespace cml {

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'M', 'L', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes;
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
  std::array<unsigned char, 8> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw ParseError(path + ": truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ClassifierParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put_u64(out, params.spec.num_modalities());
  for (std::size_t d : params.spec.modality_dims) put_u64(out, d);
  put_u64(out, params.spec.hidden_dim);
  put_u64(out, params.spec.latent_dim);
  put_u64(out, params.spec.head_hidden_dim);
  put_u64(out, params.spec.num_classes);
  put_u64(out, params.values.size());
  for (double v : params.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw IoError("failed writing " + path);
}

ClassifierParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::array<char, 8> magic;
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw ParseError(path + ": not a checkpoint file");

  ModelSpec spec;
  const std::uint64_t m = get_u64(in, path);
  if (m > 63) throw ParseError(path + ": implausible modality count");
  for (std::uint64_t i = 0; i < m; ++i) spec.modality_dims.push_back(get_u64(in, path));
  spec.hidden_dim = get_u64(in, path);
  spec.latent_dim = get_u64(in, path);
  spec.head_hidden_dim = get_u64(in, path);
  spec.num_classes = get_u64(in, path);
  try {
    spec.validate();
  } catch (const SpecError& e) {
    throw ParseError(path + ": " + e.what());
  }
  ClassifierParams params(spec);
  const std::uint64_t count = get_u64(in, path);
  if (count != params.values.size())
    throw ParseError(path + ": parameter count " + std::to_string(count) + " does not match header (" +
                     std::to_string(params.values.size()) + ")");
  for (double& v : params.values) v = std::bit_cast<double>(get_u64(in, path));
  return params;
}

}  // namespace cml
