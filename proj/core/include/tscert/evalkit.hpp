#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "tscert/certmath.hpp"
#include "tscert/masks.hpp"
#include "tscert/nnkit.hpp"
#include "tscert/smoothing.hpp"
#include "tscert/tsdata.hpp"

namespace tscert::evalkit {

struct CertificationRecord {
  std::size_t index = 0;
  std::size_t true_label = 0;
  std::size_t predicted = 0;
  double radius = 0.0;
  bool abstained = true;
  double pa_lower = 0.0;
  double pb_upper = 1.0;

  bool correct() const noexcept { return !abstained && predicted == true_label; }
  friend bool operator==(const CertificationRecord&, const CertificationRecord&) = default;
};

/// Certifies every series of `data`: cfg.draws votes per sample (noise seeded
/// by (cfg.base_seed, sample index)), Clopper-Pearson bounds at cfg.beta, and
/// the Renyi radius at cfg.sigma.
std::vector<CertificationRecord> certify_dataset(const smoothing::EnsembleClassifier& classifier,
                                                 const tsdata::Dataset& data,
                                                 const smoothing::SmoothingConfig& cfg,
                                                 std::size_t threads = 1);

// Mean of radius * [correct]; wrong and abstained records count as 0.
double acr(std::span<const CertificationRecord> records);
// Fraction correct, not abstained, with radius >= r.
double certified_accuracy(std::span<const CertificationRecord> records, double r);

struct CurvePoint {
  double radius = 0.0;
  double accuracy = 0.0;
};

std::vector<CurvePoint> accuracy_radius_curve(std::span<const CertificationRecord> records,
                                              std::span<const double> grid);

// Tab-separated: index, true, pred, radius, abstained, pa_lower, pb_upper.
void write_records(std::ostream& out, std::span<const CertificationRecord> records);
std::vector<CertificationRecord> read_records(std::istream& in);
void write_curve(std::ostream& out, std::span<const CurvePoint> curve);

struct MarginStats {
  std::size_t top = 0;                // A: argmax of the mean logits over draws
  std::vector<double> min_margins;    // per draw: min over i != A of c_A - c_i
  std::vector<double> top_scores;     // per draw: c_A
  double mean = 0.0;                  // of min_margins
  double variance = 0.0;              // unbiased, of min_margins
  double p_positive = 0.0;            // fraction of draws with min margin > 0
};

/// Margin statistics of the ensemble logits under `draws` noise samples.
/// Noise for draw j is noise_seed(seed, sample_id, j), so two classifiers
/// evaluated with the same seeds see identical noise.
MarginStats margin_stats(const smoothing::EnsembleClassifier& classifier, std::span<const double> x,
                         double sigma, std::size_t draws, std::uint64_t seed,
                         std::uint64_t sample_id = 0);

struct SizeAblationRow {
  std::size_t ensemble_size = 0;
  double acr = 0.0;
  double accuracy = 0.0;
};

/// Certifies one trained model as a self-ensemble of each size. Mask sets
/// come from one base seed, so a size-m set is a prefix of every larger set.
std::vector<SizeAblationRow> ablate_ensemble_size(std::shared_ptr<const nnkit::LogitModel> model,
                                                  const tsdata::Dataset& test,
                                                  std::span<const std::size_t> sizes,
                                                  const smoothing::SmoothingConfig& cfg,
                                                  std::size_t threads = 1);

struct KeepRatioRow {
  masks::MaskKind kind = masks::MaskKind::binomial;
  double keep_ratio = 1.0;
  double acr = 0.0;
  double accuracy = 0.0;
};

/// For each (kind, p): trains a model with masks of that kind and keep ratio
/// (no masks at p = 1) and certifies it as a cfg.ensemble_size self-ensemble.
/// Model and training seeds are shared across rows.
std::vector<KeepRatioRow> ablate_keep_ratio(const tsdata::Dataset& train,
                                            const tsdata::Dataset& test,
                                            const nnkit::ModelConfig& model_cfg,
                                            const nnkit::TrainConfig& train_cfg,
                                            std::span<const masks::MaskKind> kinds,
                                            std::span<const double> keep_ratios,
                                            const smoothing::SmoothingConfig& cfg,
                                            std::size_t threads = 1);

}  // namespace tscert::evalkit
