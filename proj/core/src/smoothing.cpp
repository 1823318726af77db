#include "tscert/smoothing.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "tscert/errors.hpp"
#include "tscert/random.hpp"

namespace tscert::smoothing {

EnsembleMode parse_mode(const std::string& text) {
  if (text == "single") return EnsembleMode::single;
  if (text == "self_ensemble") return EnsembleMode::self_ensemble;
  if (text == "deep_ensemble") return EnsembleMode::deep_ensemble;
  throw ConfigError("mode must be single, self_ensemble or deep_ensemble, got '" + text + "'");
}

std::string to_string(EnsembleMode mode) {
  switch (mode) {
    case EnsembleMode::single: return "single";
    case EnsembleMode::self_ensemble: return "self_ensemble";
    case EnsembleMode::deep_ensemble: return "deep_ensemble";
  }
  return "single";
}

void validate(const SmoothingConfig& cfg) {
  if (!(cfg.sigma >= 0.0) || !std::isfinite(cfg.sigma)) {
    throw ConfigError("smoothing: sigma must be finite and non-negative");
  }
  if (cfg.ensemble_size < 1) throw ConfigError("smoothing: ensemble size must be at least 1");
  if (cfg.mode == EnsembleMode::single && cfg.ensemble_size != 1) {
    throw ConfigError("smoothing: mode single requires ensemble size 1");
  }
  if (cfg.draws < 1) throw ConfigError("smoothing: draws must be at least 1");
  if (!(cfg.beta > 0.0 && cfg.beta < 1.0)) throw ConfigError("smoothing: beta must lie in (0, 1)");
  if (!(cfg.keep_ratio >= 0.0 && cfg.keep_ratio <= 1.0)) {
    throw ConfigError("smoothing: keep_ratio must lie in [0, 1]");
  }
}

nnkit::Matrix augment_batch(const nnkit::Matrix& batch, double sigma,
                            const std::optional<masks::MaskSpec>& mask, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("augment: sigma must be non-negative");
  nnkit::Matrix out = batch;
  Engine rng = make_engine(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    if (sigma > 0.0) {
      for (double& v : row) v += sigma * noise(rng);
    }
    if (mask && mask->keep_ratio < 1.0) {
      masks::MaskSpec spec = *mask;
      spec.length = row.size();
      const auto m = masks::make_mask(spec, rng());
      masks::apply(m, row, row);
    }
  }
  return out;
}

nnkit::BatchSource augmented_batches(const tsdata::Dataset& dataset, std::size_t batch_size,
                                     double sigma, std::optional<masks::MaskSpec> mask,
                                     std::uint64_t seed) {
  if (dataset.empty()) throw DataError("training set is empty");
  if (batch_size == 0) throw ConfigError("train: batch_size must be at least 1");
  return [&dataset, batch_size, sigma, mask, seed](std::size_t epoch) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Engine rng = make_engine(derive_seed(seed, 2 * epoch));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<nnkit::Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t rows = std::min(batch_size, order.size() - start);
      nnkit::Batch batch{nnkit::Matrix(rows, dataset.length), std::vector<std::size_t>(rows)};
      for (std::size_t r = 0; r < rows; ++r) {
        const auto& s = dataset.series[order[start + r]];
        std::copy(s.values.begin(), s.values.end(), batch.inputs.row(r).begin());
        batch.labels[r] = s.label;
      }
      const auto batch_seed = derive_seed(derive_seed(seed, 2 * epoch + 1), batches.size());
      batch.inputs = augment_batch(batch.inputs, sigma, mask, batch_seed);
      batches.push_back(std::move(batch));
    }
    return batches;
  };
}

nnkit::TrainResult train_smoothed(const tsdata::Dataset& dataset,
                                  const nnkit::ModelConfig& model_cfg,
                                  const nnkit::TrainConfig& train_cfg, double sigma,
                                  std::optional<masks::MaskSpec> mask) {
  tsdata::validate(dataset);
  if (dataset.empty()) throw DataError("training set is empty");
  if (dataset.length != model_cfg.input_length || dataset.num_labels != model_cfg.num_labels) {
    throw ShapeError("dataset shape does not match the model config");
  }
  auto params = nnkit::init_model(model_cfg);
  const auto source =
      augmented_batches(dataset, train_cfg.batch_size, sigma, std::move(mask), train_cfg.seed);
  return nnkit::train(std::move(params), train_cfg, source);
}

std::vector<nnkit::ModelParams> train_deep_ensemble(const tsdata::Dataset& dataset,
                                                    const nnkit::ModelConfig& model_cfg,
                                                    const nnkit::TrainConfig& train_cfg,
                                                    double sigma, std::size_t members) {
  if (members < 2) throw ConfigError("deep ensemble needs at least 2 members");
  std::vector<nnkit::ModelParams> out;
  for (std::size_t i = 1; i <= members; ++i) {
    auto mc = model_cfg;
    mc.seed = derive_seed(model_cfg.seed, i);
    auto tc = train_cfg;
    tc.seed = derive_seed(train_cfg.seed, i);
    out.push_back(train_smoothed(dataset, mc, tc, sigma, std::nullopt).params);
  }
  return out;
}

EnsembleClassifier::EnsembleClassifier(
    EnsembleMode mode, std::vector<std::shared_ptr<const nnkit::LogitModel>> members,
    std::optional<masks::MaskSet> mask_set)
    : mode_(mode), members_(std::move(members)), mask_set_(std::move(mask_set)) {
  if (members_.empty()) throw ConfigError("ensemble needs at least one model");
  for (const auto& m : members_) {
    if (!m) throw ConfigError("ensemble member is null");
    if (m->input_length() != members_.front()->input_length() ||
        m->num_labels() != members_.front()->num_labels()) {
      throw ShapeError("ensemble members disagree on shape");
    }
  }
  if (mask_set_ && mask_set_->spec().length != members_.front()->input_length()) {
    throw ShapeError("mask length does not match the model input length");
  }
}

EnsembleClassifier EnsembleClassifier::single(std::shared_ptr<const nnkit::LogitModel> model) {
  return EnsembleClassifier(EnsembleMode::single, {std::move(model)}, std::nullopt);
}

EnsembleClassifier EnsembleClassifier::self_ensemble(
    std::shared_ptr<const nnkit::LogitModel> model, masks::MaskSet mask_set) {
  return EnsembleClassifier(EnsembleMode::self_ensemble, {std::move(model)}, std::move(mask_set));
}

EnsembleClassifier EnsembleClassifier::deep_ensemble(
    std::vector<std::shared_ptr<const nnkit::LogitModel>> members) {
  return EnsembleClassifier(EnsembleMode::deep_ensemble, std::move(members), std::nullopt);
}

std::size_t EnsembleClassifier::size() const noexcept {
  return mode_ == EnsembleMode::self_ensemble ? mask_set_->size() : members_.size();
}

std::vector<double> EnsembleClassifier::logits(std::span<const double> noisy) const {
  if (noisy.size() != input_length()) throw ShapeError("input length does not match the model");
  switch (mode_) {
    case EnsembleMode::single:
      return members_.front()->logits(noisy);
    case EnsembleMode::self_ensemble: {
      std::vector<double> mean(num_labels(), 0.0);
      std::vector<double> masked(noisy.size());
      for (const auto& mask : mask_set_->masks()) {
        masks::apply(mask, noisy, masked);
        const auto z = members_.front()->logits(masked);
        for (std::size_t l = 0; l < mean.size(); ++l) mean[l] += z[l];
      }
      for (double& v : mean) v /= static_cast<double>(mask_set_->size());
      return mean;
    }
    case EnsembleMode::deep_ensemble: {
      std::vector<double> mean(num_labels(), 0.0);
      for (const auto& member : members_) {
        const auto z = member->logits(noisy);
        for (std::size_t l = 0; l < mean.size(); ++l) mean[l] += z[l];
      }
      for (double& v : mean) v /= static_cast<double>(members_.size());
      return mean;
    }
  }
  return {};
}

std::vector<double> EnsembleClassifier::input_gradient(std::span<const double> noisy,
                                                       std::span<const double> logit_grad) const {
  if (noisy.size() != input_length()) throw ShapeError("input length does not match the model");
  switch (mode_) {
    case EnsembleMode::single:
      return members_.front()->input_gradient(noisy, logit_grad);
    case EnsembleMode::self_ensemble: {
      std::vector<double> total(noisy.size(), 0.0);
      std::vector<double> masked(noisy.size());
      const double scale = 1.0 / static_cast<double>(mask_set_->size());
      for (const auto& mask : mask_set_->masks()) {
        masks::apply(mask, noisy, masked);
        const auto g = members_.front()->input_gradient(masked, logit_grad);
        // Chain rule through the mask: masked coordinates get no gradient.
        for (std::size_t t = 0; t < total.size(); ++t) {
          if (mask.bits[t] != 0) total[t] += scale * g[t];
        }
      }
      return total;
    }
    case EnsembleMode::deep_ensemble: {
      std::vector<double> total(noisy.size(), 0.0);
      const double scale = 1.0 / static_cast<double>(members_.size());
      for (const auto& member : members_) {
        const auto g = member->input_gradient(noisy, logit_grad);
        for (std::size_t t = 0; t < total.size(); ++t) total[t] += scale * g[t];
      }
      return total;
    }
  }
  return {};
}

std::size_t EnsembleClassifier::predict(std::span<const double> noisy) const {
  return argmax(logits(noisy));
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

SampleCounts make_counts(std::vector<std::size_t> counts) {
  if (counts.size() < 2) throw ConfigError("counts need at least two labels");
  SampleCounts out;
  out.total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  out.top = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  out.runner_up = out.top == 0 ? 1 : 0;
  for (std::size_t l = 0; l < counts.size(); ++l) {
    if (l != out.top && counts[l] > counts[out.runner_up]) out.runner_up = l;
  }
  out.counts = std::move(counts);
  return out;
}

std::uint64_t noise_seed(std::uint64_t base_seed, std::uint64_t sample_id, std::uint64_t iteration) {
  return derive_seed(derive_seed(base_seed, sample_id), iteration);
}

void add_noise(std::span<const double> x, double sigma, std::uint64_t seed, std::span<double> out) {
  if (sigma == 0.0) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  Engine rng = make_engine(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (std::size_t t = 0; t < x.size(); ++t) out[t] = x[t] + noise(rng);
}

SampleCounts sample_counts(const EnsembleClassifier& classifier, std::span<const double> x,
                           double sigma, std::size_t draws, std::uint64_t base_seed,
                           std::uint64_t sample_id) {
  if (draws < 1) throw ConfigError("sample_counts: draws must be at least 1");
  if (x.size() != classifier.input_length()) throw ShapeError("input length does not match the model");
  std::vector<std::size_t> counts(classifier.num_labels(), 0);
  std::vector<double> noisy(x.size());
  for (std::size_t i = 0; i < draws; ++i) {
    add_noise(x, sigma, noise_seed(base_seed, sample_id, i), noisy);
    ++counts[classifier.predict(noisy)];
  }
  return make_counts(std::move(counts));
}

}  // namespace tscert::smoothing
