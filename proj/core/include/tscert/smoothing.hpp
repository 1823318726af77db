#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tscert/masks.hpp"
#include "tscert/nnkit.hpp"
#include "tscert/tsdata.hpp"

namespace tscert::smoothing {

enum class EnsembleMode { single, self_ensemble, deep_ensemble };

EnsembleMode parse_mode(const std::string& text);
std::string to_string(EnsembleMode mode);

struct SmoothingConfig {
  double sigma = 0.4;
  EnsembleMode mode = EnsembleMode::single;
  std::size_t ensemble_size = 1;
  masks::MaskKind mask_kind = masks::MaskKind::binomial;
  double keep_ratio = 0.9;
  std::size_t draws = 1000;
  double beta = 0.001;
  std::uint64_t base_seed = 0;
};

void validate(const SmoothingConfig& cfg);

// Per-series M * (x + eps), eps ~ N(0, sigma^2 I), with a fresh mask per
// row. `mask` unset (or keep_ratio 1) means no masking.
nnkit::Matrix augment_batch(const nnkit::Matrix& batch, double sigma,
                            const std::optional<masks::MaskSpec>& mask, std::uint64_t seed);

/// Batch source for noise/mask augmented training: a seeded permutation of
/// the dataset per epoch, each batch augmented with a seed derived from
/// (seed, epoch, batch index).
nnkit::BatchSource augmented_batches(const tsdata::Dataset& dataset, std::size_t batch_size,
                                     double sigma, std::optional<masks::MaskSpec> mask,
                                     std::uint64_t seed);

/// Trains one base model on noised, masked copies of the training set.
/// Passing no mask gives plain Gaussian-noise training; sigma 0 without a
/// mask is ordinary clean training.
nnkit::TrainResult train_smoothed(const tsdata::Dataset& dataset,
                                  const nnkit::ModelConfig& model_cfg,
                                  const nnkit::TrainConfig& train_cfg, double sigma,
                                  std::optional<masks::MaskSpec> mask);

// m independently seeded members, each trained with noise only. Member i
// uses model/train seeds derived from the configured seeds and i + 1.
std::vector<nnkit::ModelParams> train_deep_ensemble(const tsdata::Dataset& dataset,
                                                    const nnkit::ModelConfig& model_cfg,
                                                    const nnkit::TrainConfig& train_cfg,
                                                    double sigma, std::size_t members);

/// The base classifier the smoothed decision is built on: a single model,
/// one model under m fixed masks, or m models. Logits are averaged.
class EnsembleClassifier {
 public:
  static EnsembleClassifier single(std::shared_ptr<const nnkit::LogitModel> model);
  static EnsembleClassifier self_ensemble(std::shared_ptr<const nnkit::LogitModel> model,
                                          masks::MaskSet mask_set);
  static EnsembleClassifier deep_ensemble(
      std::vector<std::shared_ptr<const nnkit::LogitModel>> members);

  EnsembleMode mode() const noexcept { return mode_; }
  std::size_t input_length() const noexcept { return members_.front()->input_length(); }
  std::size_t num_labels() const noexcept { return members_.front()->num_labels(); }
  std::size_t size() const noexcept;
  const std::optional<masks::MaskSet>& mask_set() const noexcept { return mask_set_; }

  // Mean logits over masks (one shared noisy input) or over members.
  std::vector<double> logits(std::span<const double> noisy) const;
  // Gradient of the mean logits w.r.t. the input, contracted with logit_grad.
  std::vector<double> input_gradient(std::span<const double> noisy,
                                     std::span<const double> logit_grad) const;
  std::size_t predict(std::span<const double> noisy) const;

 private:
  EnsembleClassifier(EnsembleMode mode, std::vector<std::shared_ptr<const nnkit::LogitModel>> members,
                     std::optional<masks::MaskSet> mask_set);

  EnsembleMode mode_;
  std::vector<std::shared_ptr<const nnkit::LogitModel>> members_;
  std::optional<masks::MaskSet> mask_set_;
};

// Index of the largest value, lowest index on ties.
std::size_t argmax(std::span<const double> values);

struct SampleCounts {
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  std::size_t top = 0;        // A
  std::size_t runner_up = 0;  // B
};

// Fills total/top/runner_up from counts (ties to the lower index).
SampleCounts make_counts(std::vector<std::size_t> counts);

// Seed of the noise draw used in iteration `iteration` for sample `sample_id`.
std::uint64_t noise_seed(std::uint64_t base_seed, std::uint64_t sample_id, std::uint64_t iteration);

// x + N(0, sigma^2 I) drawn from noise_seed(...).
void add_noise(std::span<const double> x, double sigma, std::uint64_t seed, std::span<double> out);

/// Monte Carlo votes of the smoothed classifier: `draws` noise samples, one
/// ensemble argmax per sample.
SampleCounts sample_counts(const EnsembleClassifier& classifier, std::span<const double> x,
                           double sigma, std::size_t draws, std::uint64_t base_seed,
                           std::uint64_t sample_id);

}  // namespace tscert::smoothing
