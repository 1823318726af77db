#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tscert::nnkit {

// Row-major dense matrix; rows are series or logit vectors.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct ConvBlock {
  std::size_t channels = 8;
  std::size_t kernel = 7;
  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

/// Architecture of the 1D CNN: a stack of same-padded convolutions, each
/// followed by ReLU, then global average pooling and an affine head.
struct ModelConfig {
  std::size_t input_length = 0;
  std::size_t num_labels = 0;
  std::vector<ConvBlock> blocks;
  std::uint64_t seed = 0;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Throws ConfigError on an invalid architecture.
void validate(const ModelConfig& cfg);
std::size_t parameter_count(const ModelConfig& cfg);

/// Flat parameter storage. Layout per conv block: weights [out][in][kernel],
/// then biases [out]; the head follows as weights [labels][channels] and
/// biases [labels].
struct ModelParams {
  ModelConfig config;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Offset of the head biases inside ModelParams::values.
std::size_t head_bias_offset(const ModelConfig& cfg);

// He-uniform weights scaled by fan-in, zero biases; deterministic in cfg.seed.
ModelParams init_model(const ModelConfig& cfg);

Matrix forward(const ModelParams& params, const Matrix& batch);
std::vector<double> forward(const ModelParams& params, std::span<const double> series);

std::vector<double> softmax(std::span<const double> logits);
double cross_entropy(std::span<const double> logits, std::size_t label);
// d(cross_entropy)/d(logits) = softmax - onehot.
std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label);

/// Mean cross-entropy over the batch and its gradient w.r.t. every parameter.
///
/// Per-sample gradients are accumulated in row order so the result is
/// bit-reproducible.
double loss_and_gradient(const ModelParams& params, const Matrix& batch,
                         std::span<const std::size_t> labels, std::vector<double>& gradient);

// Vector-Jacobian product: (d logits / d input)^T * logit_grad.
std::vector<double> input_gradient(const ModelParams& params, std::span<const double> series,
                                   std::span<const double> logit_grad);

enum class Optimizer { sgd, adam };

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct Batch {
  Matrix inputs;
  std::vector<std::size_t> labels;
};

// Produces the batches of one epoch, in the order they are applied.
using BatchSource = std::function<std::vector<Batch>(std::size_t epoch)>;

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_trace;  // mean cross-entropy per epoch
};

// Throws DivergenceError when an epoch's loss is not finite.
TrainResult train(ModelParams params, const TrainConfig& cfg, const BatchSource& batches);

/// Polymorphic view of a differentiable classifier over fixed-length series.
///
/// Implementations must be safe for concurrent calls on a const instance.
class LogitModel {
 public:
  virtual ~LogitModel() = default;
  virtual std::size_t input_length() const = 0;
  virtual std::size_t num_labels() const = 0;
  virtual std::vector<double> logits(std::span<const double> series) const = 0;
  virtual std::vector<double> input_gradient(std::span<const double> series,
                                             std::span<const double> logit_grad) const = 0;
};

class ConvNet final : public LogitModel {
 public:
  explicit ConvNet(ModelParams params);

  const ModelParams& params() const noexcept { return params_; }
  std::size_t input_length() const override { return params_.config.input_length; }
  std::size_t num_labels() const override { return params_.config.num_labels; }
  std::vector<double> logits(std::span<const double> series) const override;
  std::vector<double> input_gradient(std::span<const double> series,
                                     std::span<const double> logit_grad) const override;

 private:
  ModelParams params_;
};

/// Checkpoint container, version 1:
///   bytes 0-7   magic "TSCKPT\0\1"
///   bytes 8-11  format version, uint32 little-endian
///   bytes 12-19 header length H, uint64 little-endian
///   next H      UTF-8 JSON header: version, config echo, seed, parameter count, byte order
///   remainder   parameter values as IEEE-754 float64, little-endian, ModelParams order
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace tscert::nnkit
