#include "tscert/cli/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tscert/errors.hpp"

namespace tscert::cli {
namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const Settings& s) : s_(s) {}

  const std::string& text(const std::string& path) const {
    const auto it = s_.find(path);
    if (it == s_.end()) throw ConfigError(path + ": missing");
    return it->second;
  }

  double real(const std::string& path) const {
    const auto& t = text(path);
    try {
      std::size_t used = 0;
      const double v = std::stod(t, &used);
      if (used != t.size() || !std::isfinite(v)) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(path + ": expected a number, got '" + t + "'");
    }
  }

  std::uint64_t u64(const std::string& path) const { return parse_u64(path, text(path)); }
  std::size_t count(const std::string& path) const { return static_cast<std::size_t>(u64(path)); }

  bool flag(const std::string& path) const {
    const auto& t = text(path);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw ConfigError(path + ": expected true or false, got '" + t + "'");
  }

  std::vector<double> reals(const std::string& path) const {
    std::vector<double> out;
    for (const auto& item : split_list(text(path))) {
      Settings one{{path, item}};
      out.push_back(Reader(one).real(path));
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& path) const {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(text(path))) {
      out.push_back(static_cast<std::size_t>(parse_u64(path, item)));
    }
    return out;
  }

  template <class F>
  auto wrap(const std::string& path, F&& f) const -> decltype(f(std::string{})) {
    try {
      return f(text(path));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }

 private:
  static std::uint64_t parse_u64(const std::string& path, const std::string& t) {
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || end != t.data() + t.size()) {
      throw ConfigError(path + ": expected a non-negative integer, got '" + t + "'");
    }
    return v;
  }

  const Settings& s_;
};

std::vector<nnkit::ConvBlock> parse_blocks(const std::string& text) {
  std::vector<nnkit::ConvBlock> blocks;
  for (const auto& item : split_list(text)) {
    const auto x = item.find('x');
    std::size_t ch = 0, k = 0;
    const bool ok =
        x != std::string::npos &&
        std::from_chars(item.data(), item.data() + x, ch).ptr == item.data() + x &&
        std::from_chars(item.data() + x + 1, item.data() + item.size(), k).ptr ==
            item.data() + item.size();
    if (!ok) throw ConfigError("block '" + item + "' is not of the form <channels>x<kernel>");
    blocks.push_back({ch, k});
  }
  if (blocks.empty()) throw ConfigError("at least one block is required");
  return blocks;
}

std::filesystem::path optional_path(const std::string& text) {
  return text.empty() ? std::filesystem::path{} : std::filesystem::path(text);
}

bool known_section(const std::string& name);

}  // namespace

const Settings& default_settings() {
  static const Settings defaults{
      {"dataset.source", "cbf"},
      {"dataset.train_path", ""},
      {"dataset.test_path", ""},
      {"dataset.delimiter", "tab"},
      {"dataset.train_per_label", "10"},
      {"dataset.test_per_label", "300"},
      {"dataset.length", "128"},
      {"dataset.labels", "3"},
      {"dataset.separation", "4"},
      {"dataset.znormalize", "true"},
      {"dataset.seed", "1"},
      {"model.blocks", "16x7,16x5"},
      {"model.seed", "11"},
      {"training.epochs", "100"},
      {"training.batch_size", "16"},
      {"training.learning_rate", "0.001"},
      {"training.optimizer", "adam"},
      {"training.seed", "5"},
      {"smoothing.sigma", "0.4"},
      {"smoothing.mode", "single"},
      {"smoothing.ensemble_size", "5"},
      {"smoothing.draws", "1000"},
      {"smoothing.beta", "0.001"},
      {"smoothing.seed", "77"},
      {"masks.kind", "binomial"},
      {"masks.keep_ratio", "0.9"},
      {"attack.epsilons", "0.25,0.5,0.75,1.0"},
      {"attack.steps", "40"},
      {"attack.step_size", "0"},
      {"attack.eot_draws", "16"},
      {"attack.vote_draws", "200"},
      {"attack.seed", "3"},
      {"attack.include_benign", "false"},
      {"attack.benign_checkpoint", ""},
      {"attack.max_samples", "0"},
      {"ablation.study", "size"},
      {"ablation.sizes", "1,5,10"},
      {"ablation.kinds", "binomial,continuous"},
      {"ablation.keep_ratios", "0.5,0.7,0.9,1.0"},
      {"report.manifests", ""},
      {"report.surface_sigma", "1"},
      {"report.surface_alphas", "1.5,2,5,10,100"},
      {"report.surface_points", "51"},
      {"run.checkpoint_dir", ""},
  };
  return defaults;
}

namespace {

bool known_section(const std::string& name) {
  const auto it = default_settings().lower_bound(name + ".");
  return it != default_settings().end() && it->first.rfind(name + ".", 0) == 0;
}

}  // namespace

Settings parse_config_text(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  Settings out = default_settings();
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      if (section != "version") {
        // An empty [section] parses like a bare key.
        if (body.data().empty() && known_section(section)) continue;
        throw ConfigError(section + ": unknown top-level key");
      }
      if (trim(body.data()) != std::to_string(kConfigSchemaVersion)) {
        throw ConfigError("version: unsupported config schema version '" + body.data() + "'");
      }
      continue;
    }
    for (const auto& [key, value] : body) {
      const std::string path = section + "." + key;
      if (!out.contains(path)) throw ConfigError(path + ": unknown field");
      out[path] = trim(value.data());
    }
  }
  to_run_config(out);
  return out;
}

Settings load_settings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos || text[first] != '{') {
    return parse_config_text(text, path.string());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": manifest is not valid JSON: " + e.what());
  }
  if (!doc.contains("config") || !doc["config"].is_object()) {
    throw ConfigError(path.string() + ": manifest has no config object");
  }
  std::ostringstream ini;
  ini << "version = " << kConfigSchemaVersion << "\n";
  for (const auto& [section, body] : doc["config"].items()) {
    if (!body.is_object()) throw ConfigError(path.string() + ": config." + section + " is not an object");
    ini << "[" << section << "]\n";
    for (const auto& [key, value] : body.items()) {
      if (!value.is_string()) {
        throw ConfigError(path.string() + ": config." + section + "." + key + " is not a string");
      }
      ini << key << " = " << value.get<std::string>() << "\n";
    }
  }
  return parse_config_text(ini.str(), path.string());
}

RunConfig to_run_config(const Settings& s) {
  Reader r(s);
  RunConfig c;

  auto& d = c.dataset;
  d.source = r.text("dataset.source");
  if (d.source != "cbf" && d.source != "overlap" && d.source != "ucr") {
    throw ConfigError("dataset.source: expected cbf, overlap or ucr, got '" + d.source + "'");
  }
  d.train_path = optional_path(r.text("dataset.train_path"));
  d.test_path = optional_path(r.text("dataset.test_path"));
  d.delimiter = r.wrap("dataset.delimiter", tsdata::parse_delimiter);
  d.train_per_label = r.count("dataset.train_per_label");
  d.test_per_label = r.count("dataset.test_per_label");
  d.length = r.count("dataset.length");
  d.labels = r.count("dataset.labels");
  d.separation = r.real("dataset.separation");
  d.znormalize = r.flag("dataset.znormalize");
  d.seed = r.u64("dataset.seed");
  if (d.source == "ucr" && (d.train_path.empty() || d.test_path.empty())) {
    throw ConfigError("dataset.train_path: ucr source needs train_path and test_path");
  }

  c.blocks = r.wrap("model.blocks", parse_blocks);
  c.model_seed = r.u64("model.seed");

  c.training.epochs = r.count("training.epochs");
  c.training.batch_size = r.count("training.batch_size");
  c.training.learning_rate = r.real("training.learning_rate");
  const auto& opt = r.text("training.optimizer");
  if (opt == "adam") {
    c.training.optimizer = nnkit::Optimizer::adam;
  } else if (opt == "sgd") {
    c.training.optimizer = nnkit::Optimizer::sgd;
  } else {
    throw ConfigError("training.optimizer: expected adam or sgd, got '" + opt + "'");
  }
  c.training.seed = r.u64("training.seed");
  r.wrap("training.epochs", [&](const std::string&) {
    nnkit::validate(c.training);
    return 0;
  });

  auto& sm = c.smoothing;
  sm.sigma = r.real("smoothing.sigma");
  sm.mode = r.wrap("smoothing.mode", smoothing::parse_mode);
  sm.ensemble_size =
      sm.mode == smoothing::EnsembleMode::single ? 1 : r.count("smoothing.ensemble_size");
  r.count("smoothing.ensemble_size");
  sm.draws = r.count("smoothing.draws");
  sm.beta = r.real("smoothing.beta");
  sm.base_seed = r.u64("smoothing.seed");
  sm.mask_kind = r.wrap("masks.kind", masks::parse_mask_kind);
  sm.keep_ratio = r.real("masks.keep_ratio");
  r.wrap("smoothing.mode", [&](const std::string&) {
    smoothing::validate(sm);
    return 0;
  });
  if (sm.mode == smoothing::EnsembleMode::deep_ensemble && sm.ensemble_size < 2) {
    throw ConfigError("smoothing.ensemble_size: deep_ensemble needs at least 2 members");
  }

  auto& a = c.attack;
  a.epsilons = r.reals("attack.epsilons");
  a.attack.steps = r.count("attack.steps");
  a.attack.step_size = r.real("attack.step_size");
  a.attack.eot_draws = r.count("attack.eot_draws");
  a.attack.vote_draws = r.count("attack.vote_draws");
  a.attack.seed = r.u64("attack.seed");
  a.include_benign = r.flag("attack.include_benign");
  a.benign_checkpoint = optional_path(r.text("attack.benign_checkpoint"));
  a.max_samples = r.count("attack.max_samples");
  for (double e : a.epsilons) {
    if (e < 0.0) throw ConfigError("attack.epsilons: values must be non-negative");
  }
  r.wrap("attack.steps", [&](const std::string&) {
    attacks::validate(a.attack);
    return 0;
  });

  auto& ab = c.ablation;
  ab.study = r.text("ablation.study");
  if (ab.study != "size" && ab.study != "keep_ratio") {
    throw ConfigError("ablation.study: expected size or keep_ratio, got '" + ab.study + "'");
  }
  ab.sizes = r.counts("ablation.sizes");
  for (const auto& k : split_list(r.text("ablation.kinds"))) {
    ab.kinds.push_back(r.wrap("ablation.kinds", [&](const std::string&) { return masks::parse_mask_kind(k); }));
  }
  ab.keep_ratios = r.reals("ablation.keep_ratios");
  for (double p : ab.keep_ratios) {
    if (p < 0.0 || p > 1.0) throw ConfigError("ablation.keep_ratios: values must lie in [0, 1]");
  }

  auto& rep = c.report;
  for (const auto& m : split_list(r.text("report.manifests"))) rep.manifests.emplace_back(m);
  rep.surface_sigma = r.real("report.surface_sigma");
  rep.surface_alphas = r.reals("report.surface_alphas");
  rep.surface_points = r.count("report.surface_points");
  if (rep.surface_points < 2) throw ConfigError("report.surface_points: need at least 2");
  for (double al : rep.surface_alphas) {
    if (!(al > 1.0)) throw ConfigError("report.surface_alphas: values must exceed 1");
  }

  c.checkpoint_dir = optional_path(r.text("run.checkpoint_dir"));
  return c;
}

std::map<std::string, std::map<std::string, std::string>> split_sections(const Settings& settings) {
  std::map<std::string, std::map<std::string, std::string>> out;
  for (const auto& [path, value] : settings) {
    const auto dot = path.find('.');
    out[path.substr(0, dot)][path.substr(dot + 1)] = value;
  }
  return out;
}

}  // namespace tscert::cli
