#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "tscert/cli/config.hpp"
#include "tscert/cli/manifest.hpp"

namespace tscert::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

struct CommandOptions {
  std::filesystem::path config;
  std::filesystem::path out = ".";
  std::optional<std::string> delimiter;
  std::size_t threads = 1;
};

/// Settings after command-line overrides, with relative paths made
/// absolute and the checkpoint directory defaulted to the output directory.
Settings resolve_settings(const CommandOptions& opts);

// Each command writes its outputs plus <command>_manifest.json into opts.out
// and returns the manifest it wrote.
Manifest cmd_train(const CommandOptions& opts, std::ostream& log);
Manifest cmd_certify(const CommandOptions& opts, std::ostream& log);
Manifest cmd_attack(const CommandOptions& opts, std::ostream& log);
Manifest cmd_ablate(const CommandOptions& opts, std::ostream& log);
Manifest cmd_report(const CommandOptions& opts, std::ostream& log);

/// Entry point behind main(): parses arguments, dispatches, and maps
/// errors to exit codes (2 config, 3 data, 4 numerical).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tscert::cli
