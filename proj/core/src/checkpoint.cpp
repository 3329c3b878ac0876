#include "mccl/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "mccl/error.hpp"

namespace mccl {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'C', 'L'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw CheckpointError("truncated checkpoint " + path);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::istream& in, const std::string& path) {
  const std::uint32_t bits = read_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::map<std::string, Tensor32>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create checkpoint " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d)
      write_u32(out, static_cast<std::uint32_t>(t.dim(d)));
    for (std::int64_t i = 0; i < t.numel(); ++i) write_f32(out, t[i]);
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

std::map<std::string, Tensor32> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError("bad magic in checkpoint " + path);
  }
  const std::uint32_t version = read_u32(in, path);
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " in " + path);
  }
  const std::uint32_t count = read_u32(in, path);
  std::map<std::string, Tensor32> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw CheckpointError("truncated checkpoint " + path);
    }
    const std::uint32_t rank = read_u32(in, path);
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<int>(read_u32(in, path));
    auto t = Tensor32::zeros(shape);
    for (std::int64_t j = 0; j < t.numel(); ++j) t[j] = read_f32(in, path);
    tensors.emplace(std::move(name), std::move(t));
  }
  return tensors;
}

}  // namespace mccl
