#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "graphcaps/binary_io.hpp"
#include "graphcaps/error.hpp"
#include "graphcaps/tensorizer.hpp"

namespace graphcaps {

// Tensor cache layout, all integers little-endian:
//
//   offset  size  field
//        0     8  magic "GCAPTNSR"
//        8     4  u32 format version (1)
//       12     4  u32 width w
//       16     4  u32 receptive field size k
//       20     4  u32 node-label alphabet size d (tensors have d + 1 channels)
//       24     8  u64 number of graphs N
//       32     4  u32 labelling procedure (0 = betweenness, 1 = canonical)
//       36     4  u32 tie-break (0 = consistent, 1 = node index)
//       40     8  u64 node-permutation seed
//       48     4  u32 number of classes C
//       52     4  u32 padded anchor slots (graphs smaller than w)
//       56        N * w * k * (d + 1) IEEE-754 binary32 values, row-major,
//                 graph-major
//        ...      N * i32 class labels
inline constexpr std::array<char, 8> kTensorCacheMagic{'G', 'C', 'A', 'P', 'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kTensorCacheVersion = 1;
inline constexpr std::size_t kTensorCacheHeaderSize = 56;

inline void write_tensor_cache(std::filesystem::path const& path, TensorSet const& set) {
  std::vector<unsigned char> buf;
  buf.reserve(kTensorCacheHeaderSize + set.data.size() * 4 + set.labels.size() * 4);
  buf.insert(buf.end(), kTensorCacheMagic.begin(), kTensorCacheMagic.end());
  detail::put_le<std::uint32_t>(buf, kTensorCacheVersion);
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(set.width));
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(set.field_size));
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(set.label_alphabet_size));
  detail::put_le<std::uint64_t>(buf, set.size());
  detail::put_le<std::uint32_t>(buf, set.procedure == LabellingProcedure::BetweennessCentrality ? 0u : 1u);
  detail::put_le<std::uint32_t>(buf, set.ties == TieBreak::Consistent ? 0u : 1u);
  detail::put_le<std::uint64_t>(buf, set.seed);
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(set.num_classes));
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(set.padded_anchors));
  for (double v : set.data) detail::put_le<float>(buf, static_cast<float>(v));
  for (int c : set.labels) detail::put_le<std::int32_t>(buf, c);

  write_file_atomic(path, buf);
}

inline TensorSet read_tensor_cache(std::filesystem::path const& path) {
  auto const buf = read_file_bytes(path);
  if (buf.size() < kTensorCacheHeaderSize ||
      !std::equal(kTensorCacheMagic.begin(), kTensorCacheMagic.end(), buf.begin())) {
    throw FormatError(path.string() + ": not a tensor cache file");
  }
  unsigned char const* p = buf.data();
  if (auto v = detail::get_le<std::uint32_t>(p + 8); v != kTensorCacheVersion) {
    throw FormatError(path.string() + ": unsupported cache version " + std::to_string(v));
  }
  TensorSet set;
  set.width = static_cast<int>(detail::get_le<std::uint32_t>(p + 12));
  set.field_size = static_cast<int>(detail::get_le<std::uint32_t>(p + 16));
  set.label_alphabet_size = static_cast<int>(detail::get_le<std::uint32_t>(p + 20));
  auto const count = detail::get_le<std::uint64_t>(p + 24);
  set.procedure = detail::get_le<std::uint32_t>(p + 32) == 0 ? LabellingProcedure::BetweennessCentrality
                                                             : LabellingProcedure::Canonical;
  set.ties = detail::get_le<std::uint32_t>(p + 36) == 0 ? TieBreak::Consistent : TieBreak::NodeIndex;
  set.seed = detail::get_le<std::uint64_t>(p + 40);
  set.num_classes = static_cast<int>(detail::get_le<std::uint32_t>(p + 48));
  set.padded_anchors = detail::get_le<std::uint32_t>(p + 52);

  auto const values = count * set.sample_size();
  if (buf.size() != kTensorCacheHeaderSize + values * 4 + count * 4) {
    throw FormatError(path.string() + ": size does not match header");
  }
  set.data.resize(values);
  unsigned char const* q = p + kTensorCacheHeaderSize;
  for (std::size_t i = 0; i < values; ++i, q += 4) set.data[i] = detail::get_le<float>(q);
  set.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i, q += 4) set.labels[i] = detail::get_le<std::int32_t>(q);
  return set;
}

/// Cache file name for a (dataset, w, k, procedure, tie-break, seed) key.
inline std::string tensor_cache_name(std::string const& dataset, TensorizerOptions const& opts,
                                     std::uint64_t seed) {
  std::string name = dataset + "_" + std::string(to_string(opts.procedure)) + "_w" +
                     std::to_string(opts.width) + "_k" + std::to_string(opts.field_size) + "_s" +
                     std::to_string(seed);
  if (opts.ties == TieBreak::NodeIndex) name += "_naive";
  return name + ".gct";
}

}  // namespace graphcaps
