#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "graphcaps/binary_io.hpp"
#include "graphcaps/nn/parameter.hpp"

namespace graphcaps::nn {

// Checkpoint layout, little-endian:
//
//   8 bytes  magic "GCAPCKPT"
//   u32      format version (1)
//   u32      metadata length L, then L bytes of free text (the model config)
//   u32      array count
//   per array:
//     u32 name length, name bytes, u32 rank, rank x u64 dims,
//     product(dims) x IEEE-754 binary64 values
inline constexpr std::array<char, 8> kCheckpointMagic{'G', 'C', 'A', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string metadata;
  std::map<std::string, Tensor> arrays;
};

inline void save_checkpoint(std::filesystem::path const& path, std::vector<Parameter*> const& params,
                            std::string const& metadata = {}) {
  using graphcaps::detail::put_le;
  std::vector<unsigned char> buf(kCheckpointMagic.begin(), kCheckpointMagic.end());
  put_le<std::uint32_t>(buf, kCheckpointVersion);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(metadata.size()));
  buf.insert(buf.end(), metadata.begin(), metadata.end());
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(params.size()));
  for (auto const* p : params) {
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(p->name.size()));
    buf.insert(buf.end(), p->name.begin(), p->name.end());
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) put_le<std::uint64_t>(buf, d);
    for (double x : p->value.values()) put_le<double>(buf, x);
  }
  write_file_atomic(path, buf);
}

inline Checkpoint read_checkpoint(std::filesystem::path const& path) {
  using graphcaps::detail::get_le;
  auto const buf = read_file_bytes(path);
  std::size_t at = 0;
  auto need = [&](std::size_t n) {
    if (buf.size() - at < n) throw FormatError(path.string() + ": truncated checkpoint");
  };
  need(16);
  if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), buf.begin())) {
    throw FormatError(path.string() + ": not a checkpoint file");
  }
  at = 8;
  if (auto v = get_le<std::uint32_t>(&buf[at]); v != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  at += 4;
  auto read_u32 = [&] {
    need(4);
    auto v = get_le<std::uint32_t>(&buf[at]);
    at += 4;
    return v;
  };
  auto read_string = [&] {
    auto n = read_u32();
    need(n);
    std::string s(buf.begin() + static_cast<std::ptrdiff_t>(at), buf.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
    return s;
  };
  Checkpoint ck;
  ck.metadata = read_string();
  auto const count = read_u32();
  for (std::uint32_t a = 0; a < count; ++a) {
    auto name = read_string();
    auto const rank = read_u32();
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) {
      need(8);
      shape.push_back(get_le<std::uint64_t>(&buf[at]));
      at += 8;
    }
    if (shape.empty()) throw FormatError(path.string() + ": array " + name + " has rank 0");
    Tensor t(shape);
    need(t.size() * 8);
    for (double& x : t.values()) {
      x = get_le<double>(&buf[at]);
      at += 8;
    }
    ck.arrays.emplace(std::move(name), std::move(t));
  }
  if (at != buf.size()) throw FormatError(path.string() + ": trailing bytes after last array");
  return ck;
}

/// Restores parameter values by name; every parameter must be present with its exact shape.
inline std::string load_checkpoint(std::filesystem::path const& path, std::vector<Parameter*> const& params) {
  auto ck = read_checkpoint(path);
  for (auto* p : params) {
    auto it = ck.arrays.find(p->name);
    if (it == ck.arrays.end()) throw FormatError(path.string() + ": missing array " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw ShapeError(path.string() + ": array " + p->name + " has shape " + to_string(it->second.shape()) +
                       ", model expects " + to_string(p->value.shape()));
    }
    p->value = std::move(it->second);
  }
  return ck.metadata;
}

}  // namespace graphcaps::nn
