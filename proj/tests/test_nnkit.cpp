#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "tscert/errors.hpp"
#include "tscert/nnkit.hpp"

using namespace tscert;
using namespace tscert::nnkit;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 3) { return {16, 2, {{4, 3}}, seed}; }

Matrix random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b, std::size_t lo,
                      std::size_t hi) {
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    scale += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(scale), 1e-12);
}

}  // namespace

TEST(ModelConfig, ValidationRejectsBadShapes) {
  EXPECT_THROW(validate(ModelConfig{16, 2, {}, 0}), ConfigError);
  EXPECT_THROW(validate(ModelConfig{16, 2, {{4, 4}}, 0}), ConfigError);
  EXPECT_THROW(validate(ModelConfig{16, 2, {{0, 3}}, 0}), ConfigError);
  EXPECT_THROW(validate(ModelConfig{4, 2, {{4, 5}}, 0}), ConfigError);
  EXPECT_THROW(init_model(ModelConfig{16, 1, {{4, 3}}, 0}), ConfigError);
}

TEST(InitModel, ParameterCountMatchesHandCount) {
  // conv: 4 out * 1 in * 3 taps + 4 biases = 16; head: 2 * 4 + 2 = 10.
  EXPECT_EQ(parameter_count(tiny_config()), 26u);
  EXPECT_EQ(init_model(tiny_config()).size(), 26u);
  // Two blocks: (8*1*7 + 8) + (4*8*5 + 4) + (3*4 + 3) = 64 + 164 + 15.
  EXPECT_EQ(parameter_count(ModelConfig{32, 3, {{8, 7}, {4, 5}}, 0}), 243u);
}

TEST(InitModel, DeterministicWithZeroBiases) {
  const auto a = init_model(tiny_config(9));
  const auto b = init_model(tiny_config(9));
  const auto c = init_model(tiny_config(10));
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
  // Biases: conv biases at [12, 16), head biases at [24, 26).
  for (std::size_t i = 12; i < 16; ++i) EXPECT_EQ(a.values[i], 0.0);
  EXPECT_EQ(head_bias_offset(tiny_config()), 24u);
  EXPECT_EQ(a.values[24], 0.0);
  EXPECT_EQ(a.values[25], 0.0);
}

TEST(Forward, ZeroWeightsGiveUniformSoftmax) {
  auto p = init_model(ModelConfig{16, 5, {{4, 3}}, 1});
  std::fill(p.values.begin(), p.values.end(), 0.0);
  const auto logits = forward(p, random_batch(3, 16, 2));
  for (std::size_t r = 0; r < 3; ++r) {
    const auto s = softmax(logits.row(r));
    for (double v : s) EXPECT_DOUBLE_EQ(v, 0.2);
  }
}

TEST(Forward, BatchRowsAreIndependent) {
  const auto p = init_model(ModelConfig{24, 3, {{6, 5}, {4, 3}}, 4});
  const auto batch = random_batch(5, 24, 8);
  const auto all = forward(p, batch);
  for (std::size_t r = 0; r < 5; ++r) {
    const auto single = forward(p, batch.row(r));
    for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(single[l], all(r, l));
  }
}

TEST(Forward, SoftmaxRowsSumToOne) {
  const auto p = init_model(ModelConfig{24, 4, {{6, 5}}, 4});
  const auto logits = forward(p, random_batch(20, 24, 1));
  for (std::size_t r = 0; r < 20; ++r) {
    const auto s = softmax(logits.row(r));
    EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), 1.0, 1e-9);
    for (double z : logits.row(r)) EXPECT_TRUE(std::isfinite(z));
  }
}

TEST(Forward, RejectsWrongLength) {
  const auto p = init_model(tiny_config());
  EXPECT_THROW(forward(p, random_batch(1, 15, 0)), ShapeError);
}

TEST(Forward, HeadBiasShiftsAllLogits) {
  auto p = init_model(ModelConfig{20, 3, {{5, 3}}, 2});
  const auto x = random_batch(1, 20, 3);
  const auto before = forward(p, x.row(0));
  const std::size_t off = head_bias_offset(p.config);
  for (std::size_t l = 0; l < 3; ++l) p.values[off + l] += 0.75;
  const auto after = forward(p, x.row(0));
  for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(after[l], before[l] + 0.75, 1e-14);
}

TEST(Gradient, MatchesFiniteDifferencesForEveryLayer) {
  // Two conv blocks plus head covers every layer type.
  const ModelConfig cfg{12, 3, {{3, 3}, {2, 5}}, 21};
  auto params = init_model(cfg);
  // Nonzero biases so the bias paths are exercised away from zero.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  for (double& v : params.values) v += jitter(rng);
  const auto batch = random_batch(4, 12, 6);
  const std::vector<std::size_t> labels{0, 2, 1, 2};

  std::vector<double> analytic;
  loss_and_gradient(params, batch, labels, analytic);
  auto loss = [&](const std::vector<double>& values) {
    ModelParams p{cfg, values};
    std::vector<double> unused;
    return loss_and_gradient(p, batch, labels, unused);
  };
  const auto numeric = oracle::central_differences(loss, params.values, 1e-4);

  // Layer blocks: conv1 W [0,9) b [9,12); conv2 W [12,42) b [42,44); head W [44,50) b [50,53).
  const std::vector<std::pair<std::size_t, std::size_t>> blocks{
      {0, 9}, {9, 12}, {12, 42}, {42, 44}, {44, 50}, {50, 53}};
  ASSERT_EQ(params.size(), 53u);
  for (const auto& [lo, hi] : blocks) {
    EXPECT_LE(relative_error(analytic, numeric, lo, hi), 1e-3) << "block [" << lo << "," << hi << ")";
  }
}

TEST(Gradient, InputGradientMatchesFiniteDifferences) {
  const ModelConfig cfg{12, 3, {{3, 3}, {2, 5}}, 21};
  const auto params = init_model(cfg);
  const auto x = random_batch(1, 12, 2);
  const std::vector<double> point(x.row(0).begin(), x.row(0).end());
  const std::size_t label = 1;
  const auto z = forward(params, x.row(0));
  const auto analytic = input_gradient(params, x.row(0), cross_entropy_grad(z, label));
  const auto numeric = oracle::central_differences(
      [&](const std::vector<double>& v) { return cross_entropy(forward(params, v), label); }, point,
      1e-4);
  EXPECT_LE(relative_error(analytic, numeric, 0, 12), 1e-3);
}

TEST(Gradient, CrossEntropyGradientIsSoftmaxMinusOneHot) {
  const std::vector<double> z{0.3, -1.0, 2.0};
  const auto g = cross_entropy_grad(z, 2);
  const auto s = softmax(z);
  EXPECT_DOUBLE_EQ(g[0], s[0]);
  EXPECT_DOUBLE_EQ(g[2], s[2] - 1.0);
}

namespace {

// Two labels separated by the sign of the mean level.
std::vector<Batch> separable_batches(std::size_t rows) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.3);
  Batch b{Matrix(rows, 16), std::vector<std::size_t>(rows)};
  for (std::size_t r = 0; r < rows; ++r) {
    b.labels[r] = r % 2;
    const double level = r % 2 == 0 ? 1.0 : -1.0;
    for (double& v : b.inputs.row(r)) v = level + noise(rng);
  }
  return {b};
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesParamsUnchanged) {
  const auto init = init_model(tiny_config());
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 0.0;
  cfg.optimizer = Optimizer::sgd;
  const auto batches = separable_batches(8);
  const auto result = train(init, cfg, [&](std::size_t) { return batches; });
  EXPECT_EQ(result.params.values, init.values);
  ASSERT_EQ(result.loss_trace.size(), 3u);
}

TEST(Train, SeparableDataLossDecreases) {
  const auto batches = separable_batches(20);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e-2;
  for (auto opt : {Optimizer::sgd, Optimizer::adam}) {
    cfg.optimizer = opt;
    const auto result = train(init_model(tiny_config()), cfg, [&](std::size_t) { return batches; });
    EXPECT_LT(result.loss_trace.back(), result.loss_trace.front());
  }
}

TEST(Train, IdenticalSeedsGiveIdenticalTraces) {
  const auto batches = separable_batches(12);
  TrainConfig cfg;
  cfg.epochs = 10;
  const auto a = train(init_model(tiny_config(4)), cfg, [&](std::size_t) { return batches; });
  const auto b = train(init_model(tiny_config(4)), cfg, [&](std::size_t) { return batches; });
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.params.values, b.params.values);
}

TEST(Train, NonFiniteLossReportsEpoch) {
  auto batches = separable_batches(4);
  TrainConfig cfg;
  cfg.epochs = 5;
  try {
    train(init_model(tiny_config()), cfg, [&](std::size_t epoch) {
      auto out = batches;
      if (epoch == 2) out[0].inputs(0, 0) = std::numeric_limits<double>::infinity();
      return out;
    });
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), 2u);
  }
}

TEST(Train, RejectsInvalidConfig) {
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg.epochs = 1;
  cfg.learning_rate = -1.0;
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto params = init_model(ModelConfig{40, 4, {{6, 5}, {3, 3}}, 77});
  const auto path = std::filesystem::temp_directory_path() / "tscert_ckpt_roundtrip.bin";
  save_checkpoint(path, params);
  EXPECT_EQ(load_checkpoint(path), params);
}

TEST(Checkpoint, LayoutIsDocumentedLittleEndian) {
  auto params = init_model(tiny_config());
  params.values[0] = 1.0;  // 0x3FF0000000000000
  const auto path = std::filesystem::temp_directory_path() / "tscert_ckpt_layout.bin";
  save_checkpoint(path, params);
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_GE(bytes.size(), 20u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), "TSCKPT");
  EXPECT_EQ(bytes[8], kCheckpointVersion);
  std::uint64_t header = 0;
  for (int i = 0; i < 8; ++i) header |= std::uint64_t{bytes[12 + i]} << (8 * i);
  const std::size_t first = 20 + header;
  ASSERT_EQ(bytes.size(), first + 8 * params.size());
  EXPECT_EQ(bytes[first + 7], 0x3F);
  EXPECT_EQ(bytes[first + 6], 0xF0);
  EXPECT_EQ(bytes[first], 0x00);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto dir = std::filesystem::temp_directory_path();
  std::ofstream(dir / "tscert_ckpt_bad.bin") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "tscert_ckpt_bad.bin"), DataError);

  const auto good = dir / "tscert_ckpt_trunc.bin";
  save_checkpoint(good, init_model(tiny_config()));
  std::filesystem::resize_file(good, std::filesystem::file_size(good) - 3);
  EXPECT_THROW(load_checkpoint(good), DataError);

  // Version bump in the container is refused.
  save_checkpoint(good, init_model(tiny_config()));
  {
    std::fstream f(good, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(8);
    f.put(static_cast<char>(2));
  }
  EXPECT_THROW(load_checkpoint(good), DataError);
}

TEST(ConvNet, MatchesFreeFunctions) {
  const auto params = init_model(ModelConfig{20, 3, {{4, 5}}, 8});
  const ConvNet net(params);
  const auto x = random_batch(1, 20, 1);
  EXPECT_EQ(net.logits(x.row(0)), forward(params, x.row(0)));
  const std::vector<double> g{1.0, -0.5, 0.25};
  EXPECT_EQ(net.input_gradient(x.row(0), g), input_gradient(params, x.row(0), g));
  ModelParams broken = params;
  broken.values.pop_back();
  EXPECT_THROW(ConvNet{broken}, ShapeError);
}
