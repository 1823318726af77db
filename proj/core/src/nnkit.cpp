#include "tscert/nnkit.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "tscert/errors.hpp"
#include "tscert/random.hpp"

namespace tscert::nnkit {
namespace {

struct ConvLayout {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t weights = 0;  // offset
  std::size_t biases = 0;   // offset
};

struct Layout {
  std::vector<ConvLayout> convs;
  std::size_t channels = 0;  // width of the pooled feature vector
  std::size_t head_weights = 0;
  std::size_t head_biases = 0;
  std::size_t total = 0;
};

Layout make_layout(const ModelConfig& cfg) {
  Layout layout;
  std::size_t offset = 0;
  std::size_t in = 1;
  for (const auto& block : cfg.blocks) {
    ConvLayout c{in, block.channels, block.kernel, offset, 0};
    offset += c.out * c.in * c.kernel;
    c.biases = offset;
    offset += c.out;
    layout.convs.push_back(c);
    in = block.channels;
  }
  layout.channels = in;
  layout.head_weights = offset;
  offset += cfg.num_labels * in;
  layout.head_biases = offset;
  offset += cfg.num_labels;
  layout.total = offset;
  return layout;
}

// y = relu(conv(x) + b), same zero padding.
void conv_forward(const double* x, const ConvLayout& c, std::size_t length, const double* params,
                  double* y) {
  const auto half = static_cast<std::ptrdiff_t>(c.kernel / 2);
  const auto len = static_cast<std::ptrdiff_t>(length);
  const double* w = params + c.weights;
  const double* b = params + c.biases;
  for (std::size_t o = 0; o < c.out; ++o) {
    double* yo = y + o * length;
    std::fill(yo, yo + length, b[o]);
    for (std::size_t i = 0; i < c.in; ++i) {
      const double* xi = x + i * length;
      const double* wk = w + (o * c.in + i) * c.kernel;
      for (std::size_t j = 0; j < c.kernel; ++j) {
        const double wj = wk[j];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - half;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(len, len - shift);
        for (std::ptrdiff_t t = lo; t < hi; ++t) yo[t] += wj * xi[t + shift];
      }
    }
    for (std::size_t t = 0; t < length; ++t) yo[t] = std::max(yo[t], 0.0);
  }
}

// Backpropagates through relu(conv(x) + b). `dy` holds d/d(output) and is
// overwritten with d/d(pre-activation). dx may be null.
void conv_backward(const double* x, const double* y, double* dy, const ConvLayout& c,
                   std::size_t length, const double* params, double* grad, double* dx) {
  const auto half = static_cast<std::ptrdiff_t>(c.kernel / 2);
  const auto len = static_cast<std::ptrdiff_t>(length);
  const double* w = params + c.weights;
  for (std::size_t k = 0; k < c.out * length; ++k) {
    if (y[k] <= 0.0) dy[k] = 0.0;
  }
  if (dx != nullptr) std::fill(dx, dx + c.in * length, 0.0);
  for (std::size_t o = 0; o < c.out; ++o) {
    const double* dyo = dy + o * length;
    if (grad != nullptr) {
      grad[c.biases + o] += std::accumulate(dyo, dyo + length, 0.0);
    }
    for (std::size_t i = 0; i < c.in; ++i) {
      const double* xi = x + i * length;
      const std::size_t wbase = (o * c.in + i) * c.kernel;
      for (std::size_t j = 0; j < c.kernel; ++j) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - half;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(len, len - shift);
        if (grad != nullptr) {
          double acc = 0.0;
          for (std::ptrdiff_t t = lo; t < hi; ++t) acc += dyo[t] * xi[t + shift];
          grad[c.weights + wbase + j] += acc;
        }
        if (dx != nullptr) {
          const double wj = w[wbase + j];
          double* dxi = dx + i * length;
          for (std::ptrdiff_t t = lo; t < hi; ++t) dxi[t + shift] += wj * dyo[t];
        }
      }
    }
  }
}

// Forward pass keeping every activation for backpropagation.
struct Trace {
  std::vector<std::vector<double>> activations;  // [0] = input, [l+1] = block l output
  std::vector<double> pooled;
  std::vector<double> logits;
};

void head_forward(const Layout& layout, const ModelConfig& cfg, const double* params,
                  const double* features, std::size_t length, std::vector<double>& pooled,
                  std::vector<double>& logits) {
  pooled.assign(layout.channels, 0.0);
  const double inv = 1.0 / static_cast<double>(length);
  for (std::size_t c = 0; c < layout.channels; ++c) {
    const double* f = features + c * length;
    pooled[c] = std::accumulate(f, f + length, 0.0) * inv;
  }
  logits.assign(cfg.num_labels, 0.0);
  for (std::size_t l = 0; l < cfg.num_labels; ++l) {
    const double* w = params + layout.head_weights + l * layout.channels;
    logits[l] = params[layout.head_biases + l] +
                std::inner_product(pooled.begin(), pooled.end(), w, 0.0);
  }
}

Trace traced_forward(const Layout& layout, const ModelParams& params,
                     std::span<const double> series) {
  const auto& cfg = params.config;
  const std::size_t length = cfg.input_length;
  Trace trace;
  trace.activations.reserve(layout.convs.size() + 1);
  trace.activations.emplace_back(series.begin(), series.end());
  for (const auto& c : layout.convs) {
    std::vector<double> out(c.out * length);
    conv_forward(trace.activations.back().data(), c, length, params.values.data(), out.data());
    trace.activations.push_back(std::move(out));
  }
  head_forward(layout, cfg, params.values.data(), trace.activations.back().data(), length,
               trace.pooled, trace.logits);
  return trace;
}

// Backward pass from d/d(logits). Accumulates parameter gradients into
// `grad` (may be null) and returns d/d(input) when want_input is set.
std::vector<double> traced_backward(const Layout& layout, const ModelParams& params,
                                    Trace& trace, std::span<const double> logit_grad,
                                    double* grad, bool want_input) {
  const auto& cfg = params.config;
  const std::size_t length = cfg.input_length;
  const double* p = params.values.data();

  std::vector<double> dpooled(layout.channels, 0.0);
  for (std::size_t l = 0; l < cfg.num_labels; ++l) {
    const double g = logit_grad[l];
    const double* w = p + layout.head_weights + l * layout.channels;
    for (std::size_t c = 0; c < layout.channels; ++c) {
      dpooled[c] += w[c] * g;
      if (grad != nullptr) grad[layout.head_weights + l * layout.channels + c] += g * trace.pooled[c];
    }
    if (grad != nullptr) grad[layout.head_biases + l] += g;
  }

  const double inv = 1.0 / static_cast<double>(length);
  std::vector<double> dy(layout.channels * length);
  for (std::size_t c = 0; c < layout.channels; ++c) {
    std::fill(dy.begin() + static_cast<std::ptrdiff_t>(c * length),
              dy.begin() + static_cast<std::ptrdiff_t>((c + 1) * length), dpooled[c] * inv);
  }

  std::vector<double> dx;
  for (std::size_t n = layout.convs.size(); n-- > 0;) {
    const auto& c = layout.convs[n];
    const bool need_dx = n > 0 || want_input;
    dx.assign(need_dx ? c.in * length : 0, 0.0);
    conv_backward(trace.activations[n].data(), trace.activations[n + 1].data(), dy.data(), c,
                  length, p, grad, need_dx ? dx.data() : nullptr);
    dy.swap(dx);
  }
  return want_input ? dy : std::vector<double>{};
}

void check_series(const ModelConfig& cfg, std::size_t length) {
  if (length != cfg.input_length) {
    throw ShapeError("series length " + std::to_string(length) + " does not match model input " +
                     std::to_string(cfg.input_length));
  }
}

}  // namespace

void validate(const ModelConfig& cfg) {
  if (cfg.input_length == 0) throw ConfigError("model: input_length must be positive");
  if (cfg.num_labels < 2) throw ConfigError("model: num_labels must be at least 2");
  if (cfg.blocks.empty()) throw ConfigError("model: at least one conv block is required");
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& b = cfg.blocks[i];
    const std::string where = "model: block " + std::to_string(i);
    if (b.channels == 0) throw ConfigError(where + " needs at least one channel");
    if (b.kernel % 2 == 0) throw ConfigError(where + " kernel width must be odd");
    if (b.kernel > cfg.input_length) throw ConfigError(where + " kernel wider than the input");
  }
}

std::size_t parameter_count(const ModelConfig& cfg) {
  validate(cfg);
  return make_layout(cfg).total;
}

std::size_t head_bias_offset(const ModelConfig& cfg) { return make_layout(cfg).head_biases; }

ModelParams init_model(const ModelConfig& cfg) {
  validate(cfg);
  const Layout layout = make_layout(cfg);
  ModelParams params{cfg, std::vector<double>(layout.total, 0.0)};
  Engine rng = make_engine(cfg.seed);
  auto fill = [&](std::size_t offset, std::size_t count, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t k = 0; k < count; ++k) params.values[offset + k] = dist(rng);
  };
  for (const auto& c : layout.convs) {
    fill(c.weights, c.out * c.in * c.kernel, std::sqrt(6.0 / static_cast<double>(c.in * c.kernel)));
  }
  fill(layout.head_weights, cfg.num_labels * layout.channels,
       std::sqrt(3.0 / static_cast<double>(layout.channels)));
  return params;
}

std::vector<double> forward(const ModelParams& params, std::span<const double> series) {
  const auto& cfg = params.config;
  check_series(cfg, series.size());
  const Layout layout = make_layout(cfg);
  const std::size_t length = cfg.input_length;

  // Two reusable buffers per thread; inference runs millions of times.
  thread_local std::vector<double> ping;
  thread_local std::vector<double> pong;
  ping.assign(series.begin(), series.end());
  for (const auto& c : layout.convs) {
    pong.resize(c.out * length);
    conv_forward(ping.data(), c, length, params.values.data(), pong.data());
    ping.swap(pong);
  }
  std::vector<double> pooled;
  std::vector<double> logits;
  head_forward(layout, cfg, params.values.data(), ping.data(), length, pooled, logits);
  return logits;
}

Matrix forward(const ModelParams& params, const Matrix& batch) {
  check_series(params.config, batch.cols());
  Matrix out(batch.rows(), params.config.num_labels);
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto logits = forward(params, batch.row(r));
    std::copy(logits.begin(), logits.end(), out.row(r).begin());
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  return peak + std::log(total) - logits[label];
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label) {
  auto g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

double loss_and_gradient(const ModelParams& params, const Matrix& batch,
                         std::span<const std::size_t> labels, std::vector<double>& gradient) {
  const auto& cfg = params.config;
  check_series(cfg, batch.cols());
  if (labels.size() != batch.rows()) throw ShapeError("label count does not match batch rows");
  const Layout layout = make_layout(cfg);
  gradient.assign(layout.total, 0.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    if (labels[r] >= cfg.num_labels) throw DataError("label index out of range");
    Trace trace = traced_forward(layout, params, batch.row(r));
    loss += cross_entropy(trace.logits, labels[r]);
    const auto g = cross_entropy_grad(trace.logits, labels[r]);
    traced_backward(layout, params, trace, g, gradient.data(), false);
  }
  const double scale = 1.0 / static_cast<double>(std::max<std::size_t>(batch.rows(), 1));
  for (double& g : gradient) g *= scale;
  return loss * scale;
}

std::vector<double> input_gradient(const ModelParams& params, std::span<const double> series,
                                   std::span<const double> logit_grad) {
  const auto& cfg = params.config;
  check_series(cfg, series.size());
  if (logit_grad.size() != cfg.num_labels) throw ShapeError("logit gradient has wrong size");
  const Layout layout = make_layout(cfg);
  Trace trace = traced_forward(layout, params, series);
  return traced_backward(layout, params, trace, logit_grad, nullptr, true);
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be at least 1");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ConfigError("train: learning_rate must be finite and non-negative");
  }
  if (cfg.optimizer == Optimizer::adam &&
      !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0 &&
        cfg.epsilon > 0.0)) {
    throw ConfigError("train: invalid adam hyperparameters");
  }
}

TrainResult train(ModelParams params, const TrainConfig& cfg, const BatchSource& batches) {
  validate(cfg);
  const std::size_t n = params.values.size();
  std::vector<double> grad;
  std::vector<double> m1(n, 0.0);
  std::vector<double> m2(n, 0.0);
  std::size_t step = 0;
  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_batches = batches(epoch);
    double total = 0.0;
    std::size_t rows = 0;
    for (const auto& batch : epoch_batches) {
      if (batch.inputs.rows() == 0) continue;
      const double loss = loss_and_gradient(params, batch.inputs, batch.labels, grad);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch), epoch);
      }
      total += loss * static_cast<double>(batch.inputs.rows());
      rows += batch.inputs.rows();
      ++step;
      if (cfg.optimizer == Optimizer::sgd) {
        for (std::size_t k = 0; k < n; ++k) params.values[k] -= cfg.learning_rate * grad[k];
      } else {
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        for (std::size_t k = 0; k < n; ++k) {
          m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * grad[k];
          m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
          const double mhat = m1[k] / c1;
          const double vhat = m2[k] / c2;
          params.values[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
      }
    }
    const double mean = rows == 0 ? 0.0 : total / static_cast<double>(rows);
    if (!std::isfinite(mean)) {
      throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch), epoch);
    }
    result.loss_trace.push_back(mean);
  }
  result.params = std::move(params);
  return result;
}

ConvNet::ConvNet(ModelParams params) : params_(std::move(params)) {
  validate(params_.config);
  if (params_.values.size() != parameter_count(params_.config)) {
    throw ShapeError("parameter vector does not match the model config");
  }
}

std::vector<double> ConvNet::logits(std::span<const double> series) const {
  return forward(params_, series);
}

std::vector<double> ConvNet::input_gradient(std::span<const double> series,
                                            std::span<const double> logit_grad) const {
  return nnkit::input_gradient(params_, series, logit_grad);
}

namespace {

constexpr std::array<char, 8> kMagic = {'T', 'S', 'C', 'K', 'P', 'T', '\0', '\1'};

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T read_le(std::istream& in) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int byte = in.get();
    if (byte == std::char_traits<char>::eof()) throw DataError("checkpoint truncated");
    value |= static_cast<T>(static_cast<unsigned char>(byte)) << (8 * i);
  }
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  const auto& cfg = params.config;
  nlohmann::json header;
  header["format"] = "tscert-checkpoint";
  header["version"] = kCheckpointVersion;
  header["byte_order"] = "little";
  header["scalar"] = "float64";
  header["seed"] = cfg.seed;
  header["input_length"] = cfg.input_length;
  header["num_labels"] = cfg.num_labels;
  header["blocks"] = nlohmann::json::array();
  for (const auto& b : cfg.blocks) {
    header["blocks"].push_back({{"channels", b.channels}, {"kernel", b.kernel}});
  }
  header["parameter_count"] = params.values.size();
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    write_le<std::uint32_t>(out, kCheckpointVersion);
    write_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (double v : params.values) write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError(path.string() + ": not a tscert checkpoint");
  const auto version = read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_size = read_le<std::uint64_t>(in);
  if (header_size > (1u << 20)) throw DataError(path.string() + ": implausible header size");
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw DataError(path.string() + ": checkpoint truncated");

  ModelParams params;
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("version").get<std::uint32_t>() != version) {
      throw DataError(path.string() + ": header version disagrees with container");
    }
    auto& cfg = params.config;
    cfg.seed = header.at("seed").get<std::uint64_t>();
    cfg.input_length = header.at("input_length").get<std::size_t>();
    cfg.num_labels = header.at("num_labels").get<std::size_t>();
    for (const auto& b : header.at("blocks")) {
      cfg.blocks.push_back({b.at("channels").get<std::size_t>(), b.at("kernel").get<std::size_t>()});
    }
    const auto count = header.at("parameter_count").get<std::size_t>();
    validate(cfg);
    if (count != parameter_count(cfg)) {
      throw DataError(path.string() + ": parameter count does not match config");
    }
    params.values.resize(count);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  for (double& v : params.values) v = std::bit_cast<double>(read_le<std::uint64_t>(in));
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError(path.string() + ": trailing bytes after parameters");
  }
  return params;
}

}  // namespace tscert::nnkit
