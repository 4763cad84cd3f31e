#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "graphcaps/binary_io.hpp"
#include "graphcaps/error.hpp"

#ifndef GRAPHCAPS_VERSION
#define GRAPHCAPS_VERSION "0.0.0"
#endif
#ifndef GRAPHCAPS_GIT_REVISION
#define GRAPHCAPS_GIT_REVISION "unknown"
#endif

namespace graphcaps::experiment {

inline std::string version_stamp() { return std::string(GRAPHCAPS_VERSION) + "+" + GRAPHCAPS_GIT_REVISION; }

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::span<unsigned char const> bytes,
                                std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(std::span(reinterpret_cast<unsigned char const*>(s.data()), s.size()));
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string file_checksum(std::filesystem::path const& path) {
  auto bytes = read_file_bytes(path);
  return "fnv1a64:" + hex64(fnv1a64(bytes));
}

/// Checksums of every regular file in a dataset directory, keyed by file name.
inline nlohmann::ordered_json directory_checksums(std::filesystem::path const& dir) {
  std::vector<std::filesystem::path> files;
  for (auto const& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (auto const& f : files) out[f.filename().string()] = file_checksum(f);
  return out;
}

inline std::string utc_timestamp() {
  auto const t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text_atomic(std::filesystem::path const& path, std::string_view text) {
  write_file_atomic(path, std::vector<unsigned char>(text.begin(), text.end()));
}

inline std::string read_text(std::filesystem::path const& path) {
  auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

/// Keys that identify a run; the remaining manifest fields (command line,
/// timestamps) describe one invocation of it.
inline constexpr std::array<char const*, 4> kManifestIdentityKeys{"config", "seeds", "datasets", "version"};

/// Writes `manifest` to dir/config.json unless an equivalent manifest is
/// already there. A manifest is never rewritten: a directory holding a
/// different run is refused.
/// \returns true when an existing manifest was found (the run resumes).
inline bool write_manifest(std::filesystem::path const& dir, nlohmann::ordered_json const& manifest) {
  auto const path = dir / "config.json";
  if (std::filesystem::exists(path)) {
    auto const old = nlohmann::ordered_json::parse(read_text(path));
    for (char const* key : kManifestIdentityKeys) {
      if (old.value(key, nlohmann::ordered_json()) != manifest.value(key, nlohmann::ordered_json())) {
        throw ConfigError(dir.string() + " holds a different run (" + key +
                          " differs); pick another run id or pass --force");
      }
    }
    return true;
  }
  write_text_atomic(path, manifest.dump(2) + "\n");
  return false;
}

}  // namespace graphcaps::experiment
