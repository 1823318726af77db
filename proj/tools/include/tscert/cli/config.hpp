#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tscert/attacks.hpp"
#include "tscert/masks.hpp"
#include "tscert/nnkit.hpp"
#include "tscert/smoothing.hpp"
#include "tscert/tsdata.hpp"

namespace tscert::cli {

inline constexpr int kConfigSchemaVersion = 1;

/// Resolved settings keyed by "section.key". Every known key is present
/// after resolution, defaults filled in.
using Settings = std::map<std::string, std::string>;

// The documented schema: every accepted key with its default value.
const Settings& default_settings();

/// Parses sectioned key = value text. A top-level `version` line, if
/// present, must equal kConfigSchemaVersion. Unknown sections or keys throw
/// ConfigError naming the field path.
Settings parse_config_text(const std::string& text, const std::string& origin = "<config>");

/// Loads either a config file or a run manifest (JSON, detected by a
/// leading '{'); for a manifest the embedded resolved config is used.
Settings load_settings(const std::filesystem::path& path);

struct DatasetSettings {
  std::string source = "cbf";  // cbf | overlap | ucr
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  tsdata::Delimiter delimiter = tsdata::Delimiter::tab;
  std::size_t train_per_label = 10;
  std::size_t test_per_label = 300;
  std::size_t length = 128;
  std::size_t labels = 3;
  double separation = 4.0;
  bool znormalize = true;
  std::uint64_t seed = 1;
};

struct AttackSettings {
  attacks::AttackConfig attack;
  std::vector<double> epsilons;
  bool include_benign = false;
  std::filesystem::path benign_checkpoint;
  std::size_t max_samples = 0;  // 0: every test series
};

struct AblationSettings {
  std::string study = "size";  // size | keep_ratio
  std::vector<std::size_t> sizes;
  std::vector<masks::MaskKind> kinds;
  std::vector<double> keep_ratios;
};

struct ReportSettings {
  std::vector<std::filesystem::path> manifests;
  double surface_sigma = 1.0;
  std::vector<double> surface_alphas;
  std::size_t surface_points = 51;
};

struct RunConfig {
  DatasetSettings dataset;
  std::vector<nnkit::ConvBlock> blocks;
  std::uint64_t model_seed = 0;
  nnkit::TrainConfig training;
  smoothing::SmoothingConfig smoothing;
  AttackSettings attack;
  AblationSettings ablation;
  ReportSettings report;
  std::filesystem::path checkpoint_dir;
};

/// Typed view of settings. Conversion failures throw ConfigError with the
/// field path.
RunConfig to_run_config(const Settings& settings);

// Sections of the settings as nested string maps, for manifests.
std::map<std::string, std::map<std::string, std::string>> split_sections(const Settings& settings);

}  // namespace tscert::cli
