#include "tscert/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "tscert/errors.hpp"
#include "tscert/parallel.hpp"

namespace tscert::evalkit {

std::vector<CertificationRecord> certify_dataset(const smoothing::EnsembleClassifier& classifier,
                                                 const tsdata::Dataset& data,
                                                 const smoothing::SmoothingConfig& cfg,
                                                 std::size_t threads) {
  smoothing::validate(cfg);
  if (data.length != classifier.input_length()) {
    throw ShapeError("dataset length does not match the classifier");
  }
  std::vector<CertificationRecord> records(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const auto& s = data.series[i];
    const auto counts =
        smoothing::sample_counts(classifier, s.values, cfg.sigma, cfg.draws, cfg.base_seed, i);
    const auto cert = certmath::certify_counts(counts, cfg.sigma, cfg.beta);
    records[i] = {i,
                  s.label,
                  cert.prediction,
                  cert.radius.abstained ? 0.0 : cert.radius.radius,
                  cert.radius.abstained,
                  cert.bounds.pa_lower,
                  cert.bounds.pb_upper};
  });
  return records;
}

double acr(std::span<const CertificationRecord> records) {
  if (records.empty()) throw DataError("acr of an empty record set");
  double total = 0.0;
  for (const auto& r : records) {
    if (r.correct()) total += r.radius;
  }
  return total / static_cast<double>(records.size());
}

double certified_accuracy(std::span<const CertificationRecord> records, double r) {
  if (r < 0.0) throw ConfigError("certified accuracy radius must be non-negative");
  if (records.empty()) return 0.0;
  const auto hits = std::count_if(records.begin(), records.end(), [r](const auto& rec) {
    return rec.correct() && rec.radius >= r;
  });
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::vector<CurvePoint> accuracy_radius_curve(std::span<const CertificationRecord> records,
                                              std::span<const double> grid) {
  if (!std::is_sorted(grid.begin(), grid.end())) throw ConfigError("radius grid must be ascending");
  std::vector<CurvePoint> curve;
  curve.reserve(grid.size());
  for (double r : grid) curve.push_back({r, certified_accuracy(records, r)});
  return curve;
}

void write_records(std::ostream& out, std::span<const CertificationRecord> records) {
  out << "index\ttrue\tpred\tradius\tabstained\tpa_lower\tpb_upper\n" << std::setprecision(17);
  for (const auto& r : records) {
    out << r.index << '\t' << r.true_label << '\t' << r.predicted << '\t' << r.radius << '\t'
        << (r.abstained ? 1 : 0) << '\t' << r.pa_lower << '\t' << r.pb_upper << '\n';
  }
}

std::vector<CertificationRecord> read_records(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("index\t", 0) != 0) {
    throw DataError("records file has no header");
  }
  std::vector<CertificationRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    CertificationRecord r;
    int abstained = 0;
    if (!(ls >> r.index >> r.true_label >> r.predicted >> r.radius >> abstained >> r.pa_lower >>
          r.pb_upper)) {
      throw DataError("malformed record line: " + line);
    }
    r.abstained = abstained != 0;
    out.push_back(r);
  }
  return out;
}

void write_curve(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "radius\tcertified_accuracy\n" << std::setprecision(17);
  for (const auto& p : curve) out << p.radius << '\t' << p.accuracy << '\n';
}

MarginStats margin_stats(const smoothing::EnsembleClassifier& classifier, std::span<const double> x,
                         double sigma, std::size_t draws, std::uint64_t seed,
                         std::uint64_t sample_id) {
  if (draws < 2) throw ConfigError("margin statistics need at least two draws");
  const std::size_t k = classifier.num_labels();
  std::vector<std::vector<double>> scores;
  scores.reserve(draws);
  std::vector<double> mean(k, 0.0);
  std::vector<double> noisy(x.size());
  for (std::size_t j = 0; j < draws; ++j) {
    smoothing::add_noise(x, sigma, smoothing::noise_seed(seed, sample_id, j), noisy);
    scores.push_back(classifier.logits(noisy));
    for (std::size_t l = 0; l < k; ++l) mean[l] += scores.back()[l];
  }

  MarginStats stats;
  stats.top = smoothing::argmax(mean);
  stats.min_margins.reserve(draws);
  stats.top_scores.reserve(draws);
  for (const auto& z : scores) {
    double smallest = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < k; ++l) {
      if (l != stats.top) smallest = std::min(smallest, z[stats.top] - z[l]);
    }
    stats.min_margins.push_back(smallest);
    stats.top_scores.push_back(z[stats.top]);
  }
  const double n = static_cast<double>(draws);
  stats.mean = std::accumulate(stats.min_margins.begin(), stats.min_margins.end(), 0.0) / n;
  double ss = 0.0;
  for (double m : stats.min_margins) ss += (m - stats.mean) * (m - stats.mean);
  stats.variance = ss / (n - 1.0);
  stats.p_positive =
      static_cast<double>(std::count_if(stats.min_margins.begin(), stats.min_margins.end(),
                                        [](double m) { return m > 0.0; })) /
      n;
  return stats;
}

std::vector<SizeAblationRow> ablate_ensemble_size(std::shared_ptr<const nnkit::LogitModel> model,
                                                  const tsdata::Dataset& test,
                                                  std::span<const std::size_t> sizes,
                                                  const smoothing::SmoothingConfig& cfg,
                                                  std::size_t threads) {
  if (!std::is_sorted(sizes.begin(), sizes.end())) throw ConfigError("ensemble sizes must be sorted");
  std::vector<SizeAblationRow> rows;
  const masks::MaskSpec spec{cfg.mask_kind, cfg.keep_ratio, model->input_length()};
  for (std::size_t m : sizes) {
    auto clf = smoothing::EnsembleClassifier::self_ensemble(
        model, masks::fixed_mask_set(cfg.base_seed, m, spec));
    auto run_cfg = cfg;
    run_cfg.mode = smoothing::EnsembleMode::self_ensemble;
    run_cfg.ensemble_size = m;
    const auto records = certify_dataset(clf, test, run_cfg, threads);
    rows.push_back({m, acr(records), certified_accuracy(records, 0.0)});
  }
  return rows;
}

std::vector<KeepRatioRow> ablate_keep_ratio(const tsdata::Dataset& train,
                                            const tsdata::Dataset& test,
                                            const nnkit::ModelConfig& model_cfg,
                                            const nnkit::TrainConfig& train_cfg,
                                            std::span<const masks::MaskKind> kinds,
                                            std::span<const double> keep_ratios,
                                            const smoothing::SmoothingConfig& cfg,
                                            std::size_t threads) {
  std::vector<KeepRatioRow> rows;
  for (auto kind : kinds) {
    for (double p : keep_ratios) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("keep ratio must lie in [0, 1]");
      const masks::MaskSpec spec{kind, p, model_cfg.input_length};
      std::optional<masks::MaskSpec> train_mask;
      if (p < 1.0) train_mask = spec;
      auto trained = smoothing::train_smoothed(train, model_cfg, train_cfg, cfg.sigma, train_mask);
      auto model = std::make_shared<const nnkit::ConvNet>(std::move(trained.params));
      auto clf = smoothing::EnsembleClassifier::self_ensemble(
          model, masks::fixed_mask_set(cfg.base_seed, cfg.ensemble_size, spec));
      auto run_cfg = cfg;
      run_cfg.mode = smoothing::EnsembleMode::self_ensemble;
      run_cfg.mask_kind = kind;
      run_cfg.keep_ratio = p;
      const auto records = certify_dataset(clf, test, run_cfg, threads);
      rows.push_back({kind, p, acr(records), certified_accuracy(records, 0.0)});
    }
  }
  return rows;
}

}  // namespace tscert::evalkit
