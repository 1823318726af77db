#include "tscert/cli/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tscert/errors.hpp"

namespace tscert::cli {

std::string to_json_text(const Manifest& m) {
  nlohmann::ordered_json doc;
  doc["format"] = kManifestFormat;
  doc["schema_version"] = kManifestSchemaVersion;
  doc["toolkit_version"] = m.toolkit_version;
  doc["command"] = m.command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [section, body] : split_sections(m.config)) {
    for (const auto& [key, value] : body) config[section][key] = value;
  }
  doc["config"] = config;
  doc["seeds"] = m.seeds;
  doc["threads"] = m.threads;
  doc["wall_clock_seconds"] = m.wall_clock_seconds;
  doc["outputs"] = m.outputs;
  doc["metrics"] = m.metrics;
  return doc.dump(2) + "\n";
}

Manifest read_manifest(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(where + ": cannot open manifest");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": not valid JSON: " + e.what());
  }
  static const std::set<std::string> known{"format",  "schema_version",     "toolkit_version",
                                           "command", "config",             "seeds",
                                           "threads", "wall_clock_seconds", "outputs",
                                           "metrics"};
  if (!doc.is_object()) throw DataError(where + ": manifest is not an object");
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw DataError(where + ": unknown manifest field '" + key + "'");
  }
  for (const auto& key : known) {
    if (!doc.contains(key)) throw DataError(where + ": manifest field '" + key + "' is missing");
  }
  if (doc["format"] != kManifestFormat) throw DataError(where + ": not a run manifest");
  if (!doc["schema_version"].is_number_integer() ||
      doc["schema_version"].get<int>() != kManifestSchemaVersion) {
    throw DataError(where + ": unsupported manifest schema version " + doc["schema_version"].dump());
  }
  Manifest m;
  try {
    m.toolkit_version = doc["toolkit_version"].get<std::string>();
    m.command = doc["command"].get<std::string>();
    m.seeds = doc["seeds"].get<std::map<std::string, std::uint64_t>>();
    m.threads = doc["threads"].get<std::size_t>();
    m.wall_clock_seconds = doc["wall_clock_seconds"].get<double>();
    m.outputs = doc["outputs"].get<std::map<std::string, std::string>>();
    m.metrics = doc["metrics"].get<std::map<std::string, double>>();
    for (const auto& [section, body] : doc["config"].items()) {
      for (const auto& [key, value] : body.items()) {
        m.config[section + "." + key] = value.get<std::string>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": malformed manifest: " + e.what());
  }
  return m;
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace tscert::cli
