#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "tscert/cli/config.hpp"

namespace tscert::cli {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr const char* kManifestFormat = "tscert-run-manifest";

struct Manifest {
  std::string toolkit_version;
  std::string command;
  Settings config;
  std::map<std::string, std::uint64_t> seeds;
  double wall_clock_seconds = 0.0;
  std::map<std::string, std::string> outputs;  // role -> path
  std::map<std::string, double> metrics;
  std::size_t threads = 1;
};

std::string to_json_text(const Manifest& m);

/// Strict reader: unknown top-level fields, a different format tag or a
/// newer schema version are rejected with DataError naming the file.
Manifest read_manifest(const std::filesystem::path& path);

// Writes `text` to path.tmp, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace tscert::cli
