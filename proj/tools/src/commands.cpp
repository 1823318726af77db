#include "tscert/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "tscert/certmath.hpp"
#include "tscert/errors.hpp"
#include "tscert/evalkit.hpp"
#include "tscert/random.hpp"

#ifndef TSCERT_VERSION
#define TSCERT_VERSION "0.0.0"
#endif

namespace tscert::cli {
namespace fs = std::filesystem;
namespace {

using Clock = std::chrono::steady_clock;

struct Context {
  Settings settings;
  RunConfig cfg;
  Clock::time_point start = Clock::now();
};

Context make_context(const CommandOptions& opts) {
  Context ctx;
  ctx.settings = resolve_settings(opts);
  ctx.cfg = to_run_config(ctx.settings);
  return ctx;
}

Manifest begin_manifest(const Context& ctx, const std::string& command, const CommandOptions& opts) {
  Manifest m;
  m.toolkit_version = TSCERT_VERSION;
  m.command = command;
  m.config = ctx.settings;
  m.threads = opts.threads;
  m.seeds = {{"dataset", ctx.cfg.dataset.seed},
             {"model", ctx.cfg.model_seed},
             {"training", ctx.cfg.training.seed},
             {"smoothing", ctx.cfg.smoothing.base_seed},
             {"attack", ctx.cfg.attack.attack.seed}};
  return m;
}

void finish(Manifest& m, const Context& ctx, const CommandOptions& opts) {
  m.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - ctx.start).count();
  const auto path = opts.out / (m.command + "_manifest.json");
  m.outputs["manifest"] = path.string();
  write_atomic(path, to_json_text(m));
}

tsdata::DatasetPair load_data(const DatasetSettings& d) {
  tsdata::DatasetPair pair;
  const auto train_seed = derive_seed(d.seed, 0);
  const auto test_seed = derive_seed(d.seed, 1);
  if (d.source == "cbf") {
    pair.train = tsdata::generate_cbf(d.train_per_label, d.length, train_seed, tsdata::Split::train);
    pair.test = tsdata::generate_cbf(d.test_per_label, d.length, test_seed, tsdata::Split::test);
  } else if (d.source == "overlap") {
    pair.train = tsdata::generate_overlap(d.train_per_label, d.length, d.labels, d.separation,
                                          train_seed, tsdata::Split::train);
    pair.test = tsdata::generate_overlap(d.test_per_label, d.length, d.labels, d.separation,
                                         test_seed, tsdata::Split::test);
  } else {
    pair = tsdata::load_ucr_pair(d.train_path, d.test_path, d.delimiter);
  }
  if (d.znormalize) {
    pair.train = tsdata::znormalize(pair.train);
    pair.test = tsdata::znormalize(pair.test);
  }
  return pair;
}

nnkit::ModelConfig model_config(const RunConfig& cfg, const tsdata::Dataset& data) {
  return {data.length, data.num_labels, cfg.blocks, cfg.model_seed};
}

std::optional<masks::MaskSpec> training_masks(const RunConfig& cfg, std::size_t length) {
  const auto& sm = cfg.smoothing;
  if (sm.mode != smoothing::EnsembleMode::self_ensemble || sm.keep_ratio >= 1.0) return std::nullopt;
  return masks::MaskSpec{sm.mask_kind, sm.keep_ratio, length};
}

std::vector<fs::path> checkpoint_paths(const RunConfig& cfg) {
  if (cfg.smoothing.mode != smoothing::EnsembleMode::deep_ensemble) {
    return {cfg.checkpoint_dir / "model.ckpt"};
  }
  std::vector<fs::path> out;
  for (std::size_t i = 1; i <= cfg.smoothing.ensemble_size; ++i) {
    out.push_back(cfg.checkpoint_dir / ("member_" + std::to_string(i) + ".ckpt"));
  }
  return out;
}

std::shared_ptr<const nnkit::ConvNet> load_model(const fs::path& path, const tsdata::Dataset& data) {
  auto params = nnkit::load_checkpoint(path);
  if (params.config.input_length != data.length || params.config.num_labels != data.num_labels) {
    throw ShapeError(path.string() + ": checkpoint expects length " +
                     std::to_string(params.config.input_length) + " and " +
                     std::to_string(params.config.num_labels) + " labels, dataset has length " +
                     std::to_string(data.length) + " and " + std::to_string(data.num_labels) +
                     " labels");
  }
  return std::make_shared<const nnkit::ConvNet>(std::move(params));
}

smoothing::EnsembleClassifier load_classifier(const RunConfig& cfg, const tsdata::Dataset& data) {
  const auto& sm = cfg.smoothing;
  const auto paths = checkpoint_paths(cfg);
  switch (sm.mode) {
    case smoothing::EnsembleMode::single:
      return smoothing::EnsembleClassifier::single(load_model(paths.front(), data));
    case smoothing::EnsembleMode::self_ensemble:
      return smoothing::EnsembleClassifier::self_ensemble(
          load_model(paths.front(), data),
          masks::fixed_mask_set(sm.base_seed, sm.ensemble_size,
                                {sm.mask_kind, sm.keep_ratio, data.length}));
    case smoothing::EnsembleMode::deep_ensemble: {
      std::vector<std::shared_ptr<const nnkit::LogitModel>> members;
      for (const auto& p : paths) members.push_back(load_model(p, data));
      return smoothing::EnsembleClassifier::deep_ensemble(std::move(members));
    }
  }
  throw ConfigError("smoothing.mode: unsupported");
}

std::string format_number(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

template <class Writer>
void write_table(const fs::path& path, Writer&& writer) {
  std::ostringstream text;
  writer(text);
  write_atomic(path, text.str());
}

std::vector<double> curve_grid(std::span<const evalkit::CertificationRecord> records) {
  double top = 0.0;
  for (const auto& r : records) top = std::max(top, r.radius);
  const auto steps = static_cast<std::size_t>(std::ceil(top / 0.05)) + 1;
  std::vector<double> grid;
  for (std::size_t i = 0; i <= steps; ++i) grid.push_back(0.05 * static_cast<double>(i));
  return grid;
}

}  // namespace

Settings resolve_settings(const CommandOptions& opts) {
  auto settings = load_settings(opts.config);
  if (opts.delimiter) settings["dataset.delimiter"] = *opts.delimiter;
  for (const char* key : {"dataset.train_path", "dataset.test_path", "attack.benign_checkpoint"}) {
    if (!settings[key].empty()) settings[key] = fs::absolute(settings[key]).lexically_normal().string();
  }
  auto& ckpt = settings["run.checkpoint_dir"];
  ckpt = fs::absolute(ckpt.empty() ? opts.out : fs::path(ckpt)).lexically_normal().string();
  std::string manifests;
  std::stringstream list(settings["report.manifests"]);
  std::string item;
  while (std::getline(list, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    if (!manifests.empty()) manifests += ",";
    manifests += fs::absolute(item.substr(b, e - b + 1)).lexically_normal().string();
  }
  settings["report.manifests"] = manifests;
  to_run_config(settings);
  return settings;
}

Manifest cmd_train(const CommandOptions& opts, std::ostream& log) {
  auto ctx = make_context(opts);
  const auto& cfg = ctx.cfg;
  const auto data = load_data(cfg.dataset);
  const auto mc = model_config(cfg, data.train);
  auto m = begin_manifest(ctx, "train", opts);
  const auto paths = checkpoint_paths(cfg);
  fs::create_directories(cfg.checkpoint_dir);

  std::vector<nnkit::TrainResult> results;
  if (cfg.smoothing.mode == smoothing::EnsembleMode::deep_ensemble) {
    // Same seeds as smoothing::train_deep_ensemble, kept per member for the loss traces.
    for (std::size_t i = 1; i <= cfg.smoothing.ensemble_size; ++i) {
      auto member_mc = mc;
      member_mc.seed = derive_seed(mc.seed, i);
      auto tc = cfg.training;
      tc.seed = derive_seed(cfg.training.seed, i);
      log << "training member " << i << "/" << cfg.smoothing.ensemble_size << "\n";
      results.push_back(smoothing::train_smoothed(data.train, member_mc, tc, cfg.smoothing.sigma, std::nullopt));
    }
  } else {
    log << "training " << smoothing::to_string(cfg.smoothing.mode) << " model\n";
    results.push_back(smoothing::train_smoothed(data.train, mc, cfg.training, cfg.smoothing.sigma,
                                                training_masks(cfg, data.train.length)));
  }
  double final_loss = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    nnkit::save_checkpoint(paths[i], results[i].params);
    m.outputs["checkpoint_" + std::to_string(i + 1)] = paths[i].string();
    if (!results[i].loss_trace.empty()) final_loss += results[i].loss_trace.back();
  }
  m.metrics["final_loss"] = final_loss / static_cast<double>(results.size());
  m.metrics["parameter_count"] = static_cast<double>(nnkit::parameter_count(mc));
  m.metrics["train_size"] = static_cast<double>(data.train.size());
  finish(m, ctx, opts);
  return m;
}

Manifest cmd_certify(const CommandOptions& opts, std::ostream& log) {
  auto ctx = make_context(opts);
  const auto& cfg = ctx.cfg;
  const auto data = load_data(cfg.dataset);
  const auto clf = load_classifier(cfg, data.test);
  log << "certifying " << data.test.size() << " series with " << cfg.smoothing.draws << " draws\n";
  const auto records = evalkit::certify_dataset(clf, data.test, cfg.smoothing, opts.threads);
  auto m = begin_manifest(ctx, "certify", opts);

  const auto records_path = opts.out / "records.tsv";
  write_table(records_path, [&](std::ostream& o) { evalkit::write_records(o, records); });
  const auto grid = curve_grid(records);
  const auto curve = evalkit::accuracy_radius_curve(records, grid);
  const auto curve_path = opts.out / "curve.tsv";
  write_table(curve_path, [&](std::ostream& o) { evalkit::write_curve(o, curve); });

  std::size_t abstained = 0;
  for (const auto& r : records) abstained += r.abstained;
  m.outputs["records"] = records_path.string();
  m.outputs["curve"] = curve_path.string();
  m.metrics["acr"] = evalkit::acr(records);
  m.metrics["accuracy"] = evalkit::certified_accuracy(records, 0.0);
  m.metrics["abstained"] = static_cast<double>(abstained);
  m.metrics["n_samples"] = static_cast<double>(records.size());
  log << "ACR " << format_number(m.metrics["acr"]) << ", accuracy "
      << format_number(m.metrics["accuracy"]) << "\n";
  finish(m, ctx, opts);
  return m;
}

Manifest cmd_attack(const CommandOptions& opts, std::ostream& log) {
  auto ctx = make_context(opts);
  const auto& cfg = ctx.cfg;
  if (cfg.attack.epsilons.empty()) throw ConfigError("attack.epsilons: list is empty");
  auto data = load_data(cfg.dataset);
  if (cfg.attack.max_samples > 0 && data.test.series.size() > cfg.attack.max_samples) {
    data.test.series.resize(cfg.attack.max_samples);
  }
  const auto clf = load_classifier(cfg, data.test);
  std::optional<smoothing::EnsembleClassifier> benign;
  std::vector<attacks::NamedTarget> targets;
  if (cfg.attack.include_benign) {
    if (!cfg.attack.benign_checkpoint.empty()) {
      benign = smoothing::EnsembleClassifier::single(load_model(cfg.attack.benign_checkpoint, data.test));
      targets.push_back({"benign", {&*benign, 0.0}});
    } else {
      targets.push_back({"benign", {&clf, 0.0}});
    }
  }
  targets.push_back({smoothing::to_string(cfg.smoothing.mode), {&clf, cfg.smoothing.sigma}});
  log << "attacking " << data.test.size() << " series at " << cfg.attack.epsilons.size()
      << " budgets\n";
  const auto rows =
      attacks::attack_sweep(targets, data.test, cfg.attack.epsilons, cfg.attack.attack, opts.threads);

  auto m = begin_manifest(ctx, "attack", opts);
  const auto path = opts.out / "asr.tsv";
  write_table(path, [&](std::ostream& o) { attacks::write_asr_table(o, rows); });
  m.outputs["asr"] = path.string();
  for (const auto& r : rows) m.metrics["asr." + r.setup + "@" + format_number(r.epsilon)] = r.asr;
  m.metrics["n_samples"] = static_cast<double>(data.test.size());
  finish(m, ctx, opts);
  return m;
}

Manifest cmd_ablate(const CommandOptions& opts, std::ostream& log) {
  auto ctx = make_context(opts);
  const auto& cfg = ctx.cfg;
  const auto data = load_data(cfg.dataset);
  auto m = begin_manifest(ctx, "ablate", opts);
  auto sm = cfg.smoothing;
  sm.mode = smoothing::EnsembleMode::self_ensemble;
  sm.ensemble_size = std::stoul(ctx.settings.at("smoothing.ensemble_size"));

  if (cfg.ablation.study == "size") {
    if (cfg.smoothing.mode == smoothing::EnsembleMode::deep_ensemble) {
      throw ConfigError("ablation.study: size ablation needs a single-model checkpoint");
    }
    if (!std::is_sorted(cfg.ablation.sizes.begin(), cfg.ablation.sizes.end())) {
      throw ConfigError("ablation.sizes: must be sorted ascending");
    }
    const auto model = load_model(checkpoint_paths(cfg).front(), data.test);
    log << "ensemble-size ablation over " << cfg.ablation.sizes.size() << " sizes\n";
    const auto rows = evalkit::ablate_ensemble_size(model, data.test, cfg.ablation.sizes, sm, opts.threads);
    const auto path = opts.out / "ablation_size.tsv";
    write_table(path, [&](std::ostream& o) {
      o << "ensemble_size\tacr\taccuracy\n" << std::setprecision(17);
      for (const auto& r : rows) o << r.ensemble_size << '\t' << r.acr << '\t' << r.accuracy << '\n';
    });
    m.outputs["ablation"] = path.string();
    for (const auto& r : rows) m.metrics["acr.m" + std::to_string(r.ensemble_size)] = r.acr;
  } else {
    log << "keep-ratio ablation over " << cfg.ablation.kinds.size() * cfg.ablation.keep_ratios.size()
        << " settings\n";
    const auto rows = evalkit::ablate_keep_ratio(data.train, data.test, model_config(cfg, data.train),
                                                 cfg.training, cfg.ablation.kinds,
                                                 cfg.ablation.keep_ratios, sm, opts.threads);
    const auto path = opts.out / "ablation_keep_ratio.tsv";
    write_table(path, [&](std::ostream& o) {
      o << "kind\tkeep_ratio\tacr\taccuracy\n" << std::setprecision(17);
      for (const auto& r : rows) {
        o << masks::to_string(r.kind) << '\t' << r.keep_ratio << '\t' << r.acr << '\t' << r.accuracy << '\n';
      }
    });
    m.outputs["ablation"] = path.string();
    for (const auto& r : rows) {
      m.metrics["acr." + masks::to_string(r.kind) + "@" + format_number(r.keep_ratio)] = r.acr;
    }
  }
  finish(m, ctx, opts);
  return m;
}

Manifest cmd_report(const CommandOptions& opts, std::ostream& log) {
  auto ctx = make_context(opts);
  const auto& cfg = ctx.cfg;
  struct Row {
    std::string dataset;
    double sigma = 0.0;
    std::string sigma_text;
    std::string mode;
    std::string ensemble_size;
    double acr = 0.0;
    double accuracy = 0.0;
    std::string manifest;
  };
  std::vector<Row> rows;
  for (const auto& path : cfg.report.manifests) {
    const auto man = read_manifest(path);
    const auto need = [&](const std::string& key) -> const std::string& {
      const auto it = man.config.find(key);
      if (it == man.config.end()) throw DataError(path.string() + ": config field '" + key + "' is missing");
      return it->second;
    };
    const auto metric = [&](const std::string& key) {
      const auto it = man.metrics.find(key);
      if (it == man.metrics.end()) throw DataError(path.string() + ": metric '" + key + "' is missing");
      return it->second;
    };
    if (man.command != "certify") throw DataError(path.string() + ": not a certify manifest");
    Row r;
    r.dataset = need("dataset.source");
    try {
      r.sigma_text = need("smoothing.sigma");
      r.sigma = std::stod(r.sigma_text);
    } catch (const std::exception&) {
      throw DataError(path.string() + ": smoothing.sigma is not a number");
    }
    r.mode = need("smoothing.mode");
    r.ensemble_size = r.mode == "single" ? "1" : need("smoothing.ensemble_size");
    r.acr = metric("acr");
    r.accuracy = metric("accuracy");
    r.manifest = path.string();
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.sigma < b.sigma; });

  auto m = begin_manifest(ctx, "report", opts);
  const auto summary = opts.out / "summary.tsv";
  write_table(summary, [&](std::ostream& o) {
    o << "dataset\tsigma\tmode\tensemble_size\tacr\taccuracy\tmanifest\n" << std::setprecision(17);
    for (const auto& r : rows) {
      o << r.dataset << '\t' << r.sigma_text << '\t' << r.mode << '\t' << r.ensemble_size << '\t' << r.acr
        << '\t' << r.accuracy << '\t' << r.manifest << '\n';
    }
  });
  std::vector<double> pa_grid;
  for (std::size_t i = 0; i < cfg.report.surface_points; ++i) {
    pa_grid.push_back(0.5 + 0.5 * static_cast<double>(i) / static_cast<double>(cfg.report.surface_points));
  }
  const auto surface = certmath::emit_radius_surface(cfg.report.surface_sigma, cfg.report.surface_alphas, pa_grid);
  const auto surface_path = opts.out / "radius_surface.tsv";
  write_table(surface_path, [&](std::ostream& o) { certmath::write_radius_surface(o, surface); });
  log << "report: " << rows.size() << " rows\n";
  m.outputs["summary"] = summary.string();
  m.outputs["radius_surface"] = surface_path.string();
  m.metrics["rows"] = static_cast<double>(rows.size());
  finish(m, ctx, opts);
  return m;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Certified robustness toolkit for time-series classifiers"};
  app.require_subcommand(1);
  CommandOptions opts;
  std::string delimiter;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"train", "Train checkpoint(s) with noise (and masks for self_ensemble)"},
      {"certify", "Certify the test split and write records, curve and ACR"},
      {"attack", "Run the PGD-l2 sweep and write the ASR table"},
      {"ablate", "Ensemble-size or keep-ratio ablation"},
      {"report", "Combine certify manifests and emit the radius surface"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "Config file or run manifest")->required();
    sub->add_option("--out", opts.out, "Output directory")->capture_default_str();
    sub->add_option("--delimiter", delimiter, "UCR delimiter: tab or comma");
    sub->add_option("--threads", opts.threads, "Worker threads")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (!delimiter.empty()) opts.delimiter = delimiter;
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    fs::create_directories(opts.out);
    Manifest m;
    if (name == "train") m = cmd_train(opts, err);
    else if (name == "certify") m = cmd_certify(opts, err);
    else if (name == "attack") m = cmd_attack(opts, err);
    else if (name == "ablate") m = cmd_ablate(opts, err);
    else m = cmd_report(opts, err);
    out << m.outputs["manifest"] << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace tscert::cli
