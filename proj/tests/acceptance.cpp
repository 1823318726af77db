// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run everything
//   acceptance --only 5,8 run a subset
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "oracles.hpp"
#include "tscert/attacks.hpp"
#include "tscert/certmath.hpp"
#include "tscert/cli/commands.hpp"
#include "tscert/evalkit.hpp"
#include "tscert/random.hpp"

using namespace tscert;

namespace {

// ---- pinned tolerances and budgets ----------------------------------------

constexpr std::size_t kTriples = 1000;
constexpr double kLinearityRelTol = 1e-9;
constexpr double kOracleAbsTol = 1e-6;
constexpr double kSolverSeconds = 10.0;

constexpr double kSpotTol = 1e-6;

constexpr double kClosedFormTol = 1e-9;
constexpr std::size_t kCoverageTrials = 10000;
constexpr double kCoverageSlack = 0.003;
constexpr double kCiSeconds = 60.0;

constexpr double kDeskSigma = 0.4;
constexpr std::size_t kDraws = 1000;
constexpr double kBeta = 0.001;
constexpr double kCbfMinAccuracy = 0.95;
constexpr double kCbfMinAcr = 0.80;
constexpr double kCbfSeconds = 15 * 60.0;

constexpr double kSingleAcrLow = 0.15;
constexpr double kSingleAcrHigh = 0.35;
constexpr double kGainSeconds = 30 * 60.0;

constexpr std::size_t kVarianceSamples = 50;
constexpr double kVarianceFraction = 0.80;

constexpr std::size_t kSoundnessSamples = 200;
constexpr double kSoundnessScale = 0.9;

constexpr double kAttackEpsilon = 0.5;
constexpr double kAttackSlack = 0.05;

constexpr double kSizeSlack = 0.02;

// ---- desk setups ----------------------------------------------------------

constexpr std::size_t kCbfLength = 128;
constexpr std::size_t kCbfTrainPerLabel = 10;   // 30 series
constexpr std::size_t kCbfTestPerLabel = 300;   // 900 series

constexpr std::size_t kOverlapLength = 60;
constexpr std::size_t kOverlapLabels = 3;
constexpr double kOverlapSeparation = 5.0;
constexpr std::size_t kOverlapTrainPerLabel = 20;
constexpr std::size_t kOverlapTestPerLabel = 100;
constexpr std::size_t kEnsembleSize = 5;
constexpr double kKeepRatio = 0.9;

std::size_t worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

using ModelPtr = std::shared_ptr<const nnkit::LogitModel>;

ModelPtr as_model(nnkit::ModelParams p) { return std::make_shared<const nnkit::ConvNet>(std::move(p)); }

smoothing::SmoothingConfig desk_smoothing(std::uint64_t seed) {
  smoothing::SmoothingConfig sc;
  sc.sigma = kDeskSigma;
  sc.draws = kDraws;
  sc.beta = kBeta;
  sc.base_seed = seed;
  return sc;
}

// ---- CBF desk run, shared by criteria 5 and 8 ----------------------------

struct CbfRun {
  tsdata::Dataset train;
  tsdata::Dataset test;
  ModelPtr model;
  std::vector<evalkit::CertificationRecord> records;
  double train_seconds = 0.0;
  double certify_seconds = 0.0;
};

const CbfRun& cbf_run() {
  static std::optional<CbfRun> run;
  if (run) return *run;
  CbfRun r;
  r.train = tsdata::znormalize(tsdata::generate_cbf(kCbfTrainPerLabel, kCbfLength, 101, tsdata::Split::train));
  r.test = tsdata::znormalize(tsdata::generate_cbf(kCbfTestPerLabel, kCbfLength, 202, tsdata::Split::test));
  nnkit::ModelConfig mc{kCbfLength, 3, {{16, 7}, {16, 5}}, 11};
  nnkit::TrainConfig tc;
  tc.epochs = 1500;
  tc.batch_size = 8;
  tc.learning_rate = 3e-3;
  tc.seed = 5;
  auto t0 = std::chrono::steady_clock::now();
  r.model = as_model(smoothing::train_smoothed(r.train, mc, tc, kDeskSigma, std::nullopt).params);
  r.train_seconds = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  r.records = evalkit::certify_dataset(smoothing::EnsembleClassifier::single(r.model), r.test,
                                       desk_smoothing(77), worker_threads());
  r.certify_seconds = seconds_since(t0);
  run = std::move(r);
  return *run;
}

// ---- overlap desk runs, one per seed --------------------------------------

struct OverlapRun {
  tsdata::Dataset train;
  tsdata::Dataset test;
  nnkit::ModelConfig model_cfg;
  nnkit::TrainConfig train_cfg;
  ModelPtr single;
  ModelPtr masked;
  std::vector<ModelPtr> members;
  masks::MaskSpec mask_spec;
  std::uint64_t eval_seed = 0;
  double train_seconds = 0.0;
};

const OverlapRun& overlap_run(std::uint64_t seed) {
  static std::map<std::uint64_t, OverlapRun> runs;
  if (auto it = runs.find(seed); it != runs.end()) return it->second;
  OverlapRun r;
  r.train = tsdata::generate_overlap(kOverlapTrainPerLabel, kOverlapLength, kOverlapLabels,
                                     kOverlapSeparation, derive_seed(seed, 1), tsdata::Split::train);
  r.test = tsdata::generate_overlap(kOverlapTestPerLabel, kOverlapLength, kOverlapLabels,
                                    kOverlapSeparation, derive_seed(seed, 2), tsdata::Split::test);
  r.model_cfg = {kOverlapLength, kOverlapLabels, {{16, 7}, {16, 5}}, derive_seed(seed, 3)};
  r.train_cfg.epochs = 300;
  r.train_cfg.batch_size = 16;
  r.train_cfg.learning_rate = 3e-3;
  r.train_cfg.seed = derive_seed(seed, 4);
  r.mask_spec = {masks::MaskKind::binomial, kKeepRatio, kOverlapLength};
  r.eval_seed = derive_seed(seed, 5);
  const auto t0 = std::chrono::steady_clock::now();
  r.single = as_model(smoothing::train_smoothed(r.train, r.model_cfg, r.train_cfg, kDeskSigma, std::nullopt).params);
  r.masked = as_model(smoothing::train_smoothed(r.train, r.model_cfg, r.train_cfg, kDeskSigma, r.mask_spec).params);
  for (auto& p : smoothing::train_deep_ensemble(r.train, r.model_cfg, r.train_cfg, kDeskSigma, kEnsembleSize)) {
    r.members.push_back(as_model(std::move(p)));
  }
  r.train_seconds = seconds_since(t0);
  return runs.emplace(seed, std::move(r)).first->second;
}

smoothing::EnsembleClassifier self_ensemble(const OverlapRun& r, std::size_t m) {
  return smoothing::EnsembleClassifier::self_ensemble(
      r.masked, masks::fixed_mask_set(r.eval_seed, m, r.mask_spec));
}

// ---- criteria ---------------------------------------------------------------

Outcome radius_solver_exactness() {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Triple {
    double pa, pb, sigma;
  };
  std::vector<Triple> triples;
  for (std::size_t i = 0; i < kTriples; ++i) {
    const double pa = u(rng);
    const double pb = std::min(pa, 1.0 - pa) * u(rng);
    triples.push_back({pa, pb, 0.05 + 1.95 * u(rng)});
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> radius(kTriples), doubled(kTriples);
  for (std::size_t i = 0; i < kTriples; ++i) {
    radius[i] = certmath::certified_radius(triples[i].pa, triples[i].pb, triples[i].sigma).radius;
    doubled[i] = certmath::certified_radius(triples[i].pa, triples[i].pb, 2 * triples[i].sigma).radius;
  }
  bool equal_zero = true;
  for (double p : {0.05, 0.2, 0.333, 0.5}) {
    const auto r = certmath::certified_radius(p, p, 0.7);
    equal_zero = equal_zero && r.radius == 0.0;
  }
  const double solver_seconds = seconds_since(t0);

  double worst_linear = 0.0;
  double worst_oracle = 0.0;
  for (std::size_t i = 0; i < kTriples; ++i) {
    if (radius[i] > 0.0) {
      worst_linear = std::max(worst_linear, std::abs(doubled[i] - 2 * radius[i]) / (2 * radius[i]));
    } else {
      worst_linear = std::max(worst_linear, doubled[i]);
    }
    const double oracle = oracle::dense_grid_radius(triples[i].pa, triples[i].pb, triples[i].sigma);
    worst_oracle = std::max(worst_oracle, std::abs(radius[i] - oracle));
  }
  const bool pass = worst_linear <= kLinearityRelTol && equal_zero && worst_oracle <= kOracleAbsTol &&
                    solver_seconds < kSolverSeconds;
  return {pass, "linearity rel err " + sci(worst_linear) + ", pA=pB zero " + (equal_zero ? "yes" : "no") +
                    ", dense-grid max abs err " + sci(worst_oracle) + " over " + std::to_string(kTriples) +
                    " triples, solver " + fmt(solver_seconds, 2) + " s"};
}

Outcome spot_value() {
  const double got = certmath::radius_at_alpha(0.6, 0.2, 1.0, 2.0);
  const double want = std::sqrt(-std::log(0.8));
  return {std::abs(got - want) <= kSpotTol,
          "radius_at_alpha(0.6,0.2,1,2) = " + fmt(got, 8) + ", expected " + fmt(want, 8)};
}

Outcome ci_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_closed = 0.0;
  for (std::size_t n : {1u, 10u, 100u, 1000u, 10000u}) {
    const double a = kBeta / 2;
    const auto all = certmath::multinomial_ci(smoothing::make_counts({n, 0}), kBeta);
    worst_closed = std::max(worst_closed, std::abs(all.pa_lower - std::pow(a, 1.0 / n)));
    worst_closed = std::max(worst_closed, std::abs(all.pb_upper - (1.0 - std::pow(a, 1.0 / n))));
    worst_closed = std::max(worst_closed, std::abs(certmath::clopper_pearson_lower(n, n, a) - std::pow(a, 1.0 / n)));
    worst_closed = std::max(worst_closed, std::abs(certmath::clopper_pearson_upper(0, n, a) - (1.0 - std::pow(a, 1.0 / n))));
  }

  // Joint coverage: the bound on the empirical top class holds and the
  // runner-up bound covers every other class.
  const std::vector<std::vector<double>> truths{{0.7, 0.2, 0.1}, {0.45, 0.4, 0.15}, {0.9, 0.05, 0.03, 0.02}};
  std::mt19937_64 rng(99);
  std::size_t covered = 0;
  std::size_t trials = 0;
  for (const auto& p : truths) {
    std::discrete_distribution<std::size_t> draw(p.begin(), p.end());
    for (std::size_t t = 0; t < kCoverageTrials; ++t) {
      std::vector<std::size_t> counts(p.size(), 0);
      for (std::size_t j = 0; j < kDraws; ++j) ++counts[draw(rng)];
      const auto c = smoothing::make_counts(counts);
      const auto b = certmath::multinomial_ci(c, kBeta);
      double other = 0.0;
      for (std::size_t l = 0; l < p.size(); ++l) {
        if (l != c.top) other = std::max(other, p[l]);
      }
      covered += (b.pa_lower <= p[c.top] && b.pb_upper >= other);
      ++trials;
    }
  }
  const double coverage = static_cast<double>(covered) / static_cast<double>(trials);
  const double elapsed = seconds_since(t0);
  const bool pass = worst_closed <= kClosedFormTol && coverage >= 1.0 - kBeta - kCoverageSlack && elapsed < kCiSeconds;
  return {pass, "closed-form max err " + sci(worst_closed) + ", joint coverage " + fmt(coverage, 5) +
                    " over " + std::to_string(trials) + " multinomials (need >= " +
                    fmt(1.0 - kBeta - kCoverageSlack, 3) + "), " + fmt(elapsed, 1) + " s"};
}

Outcome radius_surface() {
  const std::vector<double> alphas{1.0001, 1.01, 1.5, 2.0, 3.0, 5.0, 10.0, 100.0, 1e3, 1e4, 1e6};
  std::vector<double> grid;
  for (int i = 0; i < 1000; ++i) grid.push_back(0.5 + 0.0005 * i);
  const auto rows = certmath::emit_radius_surface(1.0, alphas, grid);
  std::size_t decreases = 0;
  bool zero_at_half = true;
  std::size_t positive_end = 0;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    const auto* row = &rows[a * grid.size()];
    zero_at_half = zero_at_half && row[0].l_squared == 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) decreases += row[i].l_squared < row[i - 1].l_squared;
    positive_end += row[grid.size() - 1].l_squared > 0.0;
  }
  return {decreases == 0 && zero_at_half && positive_end == alphas.size(),
          std::to_string(alphas.size()) + " alphas x " + std::to_string(grid.size()) + " p_A values: " +
              std::to_string(decreases) + " decreasing steps, zero at p_A=0.5 " + (zero_at_half ? "yes" : "no")};
}

Outcome desk_pipeline_cbf() {
  const auto& r = cbf_run();
  const double a = evalkit::acr(r.records);
  const double acc = evalkit::certified_accuracy(r.records, 0.0);
  const double total = r.train_seconds + r.certify_seconds;
  const bool pass = acc >= kCbfMinAccuracy && a >= kCbfMinAcr && total <= kCbfSeconds;
  return {pass, "CBF " + std::to_string(r.train.size()) + " train / " + std::to_string(r.test.size()) +
                    " test, sigma 0.4: accuracy " + fmt(acc) + " (need >= " + fmt(kCbfMinAccuracy, 2) +
                    "), ACR " + fmt(a) + " (need >= " + fmt(kCbfMinAcr, 2) + "), " + fmt(total, 0) + " s"};
}

Outcome self_ensemble_gain() {
  const auto t0 = std::chrono::steady_clock::now();
  double single = 0.0, self = 0.0, deep = 0.0;
  std::ostringstream per_seed;
  constexpr std::uint64_t kSeeds = 3;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto& r = overlap_run(seed);
    const auto sc = desk_smoothing(r.eval_seed);
    const double s = evalkit::acr(evalkit::certify_dataset(smoothing::EnsembleClassifier::single(r.single), r.test, sc, worker_threads()));
    const double m = evalkit::acr(evalkit::certify_dataset(self_ensemble(r, kEnsembleSize), r.test, sc, worker_threads()));
    const double d = evalkit::acr(evalkit::certify_dataset(smoothing::EnsembleClassifier::deep_ensemble(r.members), r.test, sc, worker_threads()));
    per_seed << " [" << fmt(s, 3) << "/" << fmt(m, 3) << "/" << fmt(d, 3) << "]";
    single += s / kSeeds;
    self += m / kSeeds;
    deep += d / kSeeds;
  }
  const double elapsed = seconds_since(t0);
  const bool in_band = single >= kSingleAcrLow && single <= kSingleAcrHigh;
  const bool pass = in_band && self >= single && deep >= single && elapsed <= kGainSeconds;
  return {pass, "mean ACR single " + fmt(single) + " (band " + fmt(kSingleAcrLow, 2) + "-" + fmt(kSingleAcrHigh, 2) +
                    "), M_B m=5 " + fmt(self) + ", DE m=5 " + fmt(deep) + "; per seed single/M_B/DE" +
                    per_seed.str() + ", " + fmt(elapsed, 0) + " s"};
}

Outcome variance_reduction() {
  const auto& r = overlap_run(0);
  const auto single = smoothing::EnsembleClassifier::single(r.single);
  const auto ensemble = self_ensemble(r, kEnsembleSize);
  std::size_t reduced = 0;
  double ratio_sum = 0.0;
  for (std::size_t i = 0; i < kVarianceSamples; ++i) {
    const auto& x = r.test.series[i].values;
    const auto a = evalkit::margin_stats(single, x, kDeskSigma, kDraws, r.eval_seed, i);
    const auto b = evalkit::margin_stats(ensemble, x, kDeskSigma, kDraws, r.eval_seed, i);
    reduced += b.variance < a.variance;
    ratio_sum += b.variance / a.variance;
  }
  const double fraction = static_cast<double>(reduced) / kVarianceSamples;
  return {fraction >= kVarianceFraction,
          "Var(min margin) lower under m=5 on " + std::to_string(reduced) + "/" +
              std::to_string(kVarianceSamples) + " samples (need >= " + fmt(kVarianceFraction, 2) +
              "), mean variance ratio " + fmt(ratio_sum / kVarianceSamples, 3)};
}

Outcome certification_soundness() {
  const auto& r = cbf_run();
  const auto clf = smoothing::EnsembleClassifier::single(r.model);
  std::vector<std::size_t> picked;
  for (const auto& rec : r.records) {
    if (rec.correct() && rec.radius > 0.0) picked.push_back(rec.index);
    if (picked.size() == kSoundnessSamples) break;
  }
  std::size_t flips = 0;
  double mean_eps = 0.0;
  for (std::size_t i : picked) {
    const auto& s = r.test.series[i];
    attacks::AttackConfig cfg;
    cfg.epsilon = kSoundnessScale * r.records[i].radius;
    cfg.steps = 40;
    cfg.eot_draws = 16;
    cfg.seed = derive_seed(404, i);
    flips += attacks::pgd_l2({&clf, kDeskSigma}, s.values, s.label, cfg).success;
    mean_eps += cfg.epsilon / static_cast<double>(picked.size());
  }
  return {picked.size() == kSoundnessSamples && flips == 0,
          std::to_string(flips) + " flipped majority decisions over " + std::to_string(picked.size()) +
              " certified-correct CBF samples, mean epsilon " + fmt(mean_eps)};
}

Outcome attack_trend() {
  const auto& r = overlap_run(0);
  const auto benign_model =
      as_model(smoothing::train_smoothed(r.train, r.model_cfg, r.train_cfg, 0.0, std::nullopt).params);
  const auto benign = smoothing::EnsembleClassifier::single(benign_model);
  const auto single = smoothing::EnsembleClassifier::single(r.single);
  const auto self = self_ensemble(r, kEnsembleSize);
  const auto deep = smoothing::EnsembleClassifier::deep_ensemble(r.members);
  const std::vector<attacks::NamedTarget> targets{{"benign", {&benign, 0.0}},
                                                  {"single", {&single, kDeskSigma}},
                                                  {"self_ensemble", {&self, kDeskSigma}},
                                                  {"deep_ensemble", {&deep, kDeskSigma}}};
  attacks::AttackConfig cfg;
  cfg.seed = r.eval_seed;
  const std::vector<double> eps{kAttackEpsilon};
  const auto rows = attacks::attack_sweep(targets, r.test, eps, cfg, worker_threads());
  const double b = rows[0].asr, s = rows[1].asr, m = rows[2].asr, d = rows[3].asr;
  const bool pass = b > s && s > std::min(m, d) - kAttackSlack;
  return {pass, "ASR at eps 0.5 over " + std::to_string(r.test.size()) + " series: benign " + fmt(b, 3) +
                    ", single " + fmt(s, 3) + ", M_B " + fmt(m, 3) + ", DE " + fmt(d, 3)};
}

Outcome ablation_trend() {
  const auto& r = overlap_run(0);
  auto sc = desk_smoothing(r.eval_seed);
  sc.mode = smoothing::EnsembleMode::self_ensemble;
  sc.mask_kind = masks::MaskKind::binomial;
  sc.keep_ratio = kKeepRatio;
  const std::vector<std::size_t> sizes{1, 10};
  const auto by_size = evalkit::ablate_ensemble_size(r.masked, r.test, sizes, sc, worker_threads());

  sc.ensemble_size = kEnsembleSize;
  const std::vector<masks::MaskKind> kinds{masks::MaskKind::binomial};
  const std::vector<double> ratios{0.5, 0.9};
  const auto by_ratio = evalkit::ablate_keep_ratio(r.train, r.test, r.model_cfg, r.train_cfg, kinds,
                                                   ratios, sc, worker_threads());
  const bool size_ok = by_size[1].acr >= by_size[0].acr - kSizeSlack;
  const bool ratio_ok = by_ratio[1].acr >= by_ratio[0].acr;
  return {size_ok && ratio_ok, "ACR m=1 " + fmt(by_size[0].acr) + ", m=10 " + fmt(by_size[1].acr) +
                                   "; M_B p=0.5 " + fmt(by_ratio[0].acr) + ", p=0.9 " + fmt(by_ratio[1].acr)};
}

int run_cli(const std::vector<std::string>& args, std::string& log) {
  std::vector<const char*> argv{"tscert"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  log += err.str();
  return code;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / ("tscert_acceptance_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto config = dir / "run.ini";
  std::ofstream(config) << "version = 1\n"
                           "[dataset]\nsource = overlap\nlength = 60\nseparation = 5\n"
                           "train_per_label = 20\ntest_per_label = 20\nznormalize = false\n"
                           "[training]\nepochs = 30\nlearning_rate = 0.003\n"
                           "[smoothing]\nmode = self_ensemble\nensemble_size = 5\ndraws = 500\n";
  std::string log;
  const auto first = dir / "first";
  const auto second = dir / "second";
  const int train = run_cli({"train", "--config", config.string(), "--out", first.string()}, log);
  const int certify = run_cli({"certify", "--config", config.string(), "--out", first.string()}, log);
  const int rerun = run_cli({"certify", "--config", (first / "certify_manifest.json").string(), "--out",
                             second.string(), "--threads", "3"},
                            log);
  const auto a = slurp(first / "records.tsv");
  const auto b = slurp(second / "records.tsv");
  const bool identical = train == 0 && certify == 0 && rerun == 0 && !a.empty() && a == b;
  std::filesystem::remove_all(dir);
  return {identical, "exit codes " + std::to_string(train) + "/" + std::to_string(certify) + "/" +
                         std::to_string(rerun) + ", records " + std::to_string(a.size()) + " bytes, rerun " +
                         (a == b ? "byte-identical" : "differs")};
}

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "radius solver exactness", radius_solver_exactness},
      {2, "radius spot value", spot_value},
      {3, "confidence interval correctness", ci_correctness},
      {4, "radius surface monotone in p_A", radius_surface},
      {5, "CBF desk pipeline", desk_pipeline_cbf},
      {6, "self-ensemble gain", self_ensemble_gain},
      {7, "margin variance reduction", variance_reduction},
      {8, "certification soundness under PGD", certification_soundness},
      {9, "attack success ordering", attack_trend},
      {10, "ablation trends", ablation_trend},
      {11, "certify rerun determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      std::string item;
      while (std::getline(list, item, ',')) only.insert(std::stoi(item));
    }
  }
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << o.detail << " ("
              << fmt(seconds_since(t0), 1) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
