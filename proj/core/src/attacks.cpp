#include "tscert/attacks.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>

#include "tscert/errors.hpp"
#include "tscert/nnkit.hpp"
#include "tscert/parallel.hpp"
#include "tscert/random.hpp"

namespace tscert::attacks {
namespace {

double norm2(std::span<const double> v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

// Projects `point` onto the l2 ball of radius eps around `centre`.
void project(std::span<const double> centre, double eps, std::span<double> point) {
  double dist = 0.0;
  for (std::size_t t = 0; t < point.size(); ++t) {
    const double d = point[t] - centre[t];
    dist += d * d;
  }
  dist = std::sqrt(dist);
  if (dist <= eps) return;
  const double scale = eps / dist;
  for (std::size_t t = 0; t < point.size(); ++t) {
    point[t] = centre[t] + (point[t] - centre[t]) * scale;
  }
}

// Cross-entropy gradient w.r.t. the input, averaged over noise draws.
std::vector<double> loss_gradient(const AttackTarget& target, std::span<const double> x,
                                  std::size_t label, std::size_t draws, std::uint64_t seed) {
  const auto& clf = *target.classifier;
  if (target.sigma == 0.0) {
    const auto z = clf.logits(x);
    return clf.input_gradient(x, nnkit::cross_entropy_grad(z, label));
  }
  std::vector<double> total(x.size(), 0.0);
  std::vector<double> noisy(x.size());
  for (std::size_t j = 0; j < draws; ++j) {
    smoothing::add_noise(x, target.sigma, derive_seed(seed, j), noisy);
    const auto z = clf.logits(noisy);
    const auto g = clf.input_gradient(noisy, nnkit::cross_entropy_grad(z, label));
    for (std::size_t t = 0; t < total.size(); ++t) total[t] += g[t];
  }
  for (double& v : total) v /= static_cast<double>(draws);
  return total;
}

}  // namespace

void validate(const AttackConfig& cfg) {
  if (!(cfg.epsilon >= 0.0) || !std::isfinite(cfg.epsilon)) {
    throw ConfigError("attack: epsilon must be finite and non-negative");
  }
  if (cfg.eot_draws < 1) throw ConfigError("attack: eot_draws must be at least 1");
  if (cfg.vote_draws < 1) throw ConfigError("attack: vote_draws must be at least 1");
  if (!std::isfinite(cfg.step_size)) throw ConfigError("attack: step_size must be finite");
}

std::size_t decide(const AttackTarget& target, std::span<const double> x, std::size_t vote_draws,
                   std::uint64_t seed) {
  if (target.classifier == nullptr) throw ConfigError("attack target has no classifier");
  if (target.sigma == 0.0) return target.classifier->predict(x);
  return smoothing::sample_counts(*target.classifier, x, target.sigma, vote_draws, seed, 0).top;
}

AttackResult pgd_l2(const AttackTarget& target, std::span<const double> x, std::size_t label,
                    const AttackConfig& cfg) {
  validate(cfg);
  if (target.classifier == nullptr) throw ConfigError("attack target has no classifier");
  if (x.size() != target.classifier->input_length()) throw ShapeError("attack input has wrong length");
  if (label >= target.classifier->num_labels()) throw DataError("attack label out of range");

  AttackResult result;
  result.adversarial.assign(x.begin(), x.end());
  if (cfg.epsilon > 0.0 && cfg.steps > 0) {
    const double eta =
        cfg.step_size > 0.0 ? cfg.step_size : 2.0 * cfg.epsilon / static_cast<double>(cfg.steps);
    Engine fallback = make_engine(derive_seed(cfg.seed, 0xFA11BAC4ULL));
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      auto g = loss_gradient(target, result.adversarial, label, cfg.eot_draws,
                             derive_seed(cfg.seed, step + 1));
      ++result.queries;
      double n = norm2(g);
      if (!std::isfinite(n)) throw NumericalError("attack gradient is not finite");
      if (n == 0.0) {
        std::normal_distribution<double> dir(0.0, 1.0);
        for (double& v : g) v = dir(fallback);
        n = norm2(g);
        result.random_step_taken = true;
      }
      for (std::size_t t = 0; t < g.size(); ++t) result.adversarial[t] += eta * g[t] / n;
      project(x, cfg.epsilon, result.adversarial);
    }
  }
  std::vector<double> delta(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) delta[t] = result.adversarial[t] - x[t];
  result.distance = norm2(delta);
  result.success =
      decide(target, result.adversarial, cfg.vote_draws, derive_seed(cfg.seed, 0x5EEDULL)) != label;
  return result;
}

std::vector<AsrRow> attack_sweep(std::span<const NamedTarget> targets, const tsdata::Dataset& data,
                                 std::span<const double> epsilons, const AttackConfig& cfg,
                                 std::size_t threads) {
  if (epsilons.empty()) throw ConfigError("attack: epsilon list is empty");
  validate(cfg);
  std::vector<AsrRow> rows;
  for (const auto& named : targets) {
    for (double eps : epsilons) {
      std::vector<std::uint8_t> flipped(data.size(), 0);
      parallel_for(data.size(), threads, [&](std::size_t i) {
        AttackConfig c = cfg;
        c.epsilon = eps;
        c.seed = derive_seed(cfg.seed, i);
        const auto& s = data.series[i];
        flipped[i] = pgd_l2(named.target, s.values, s.label, c).success ? 1 : 0;
      });
      const auto hits = std::accumulate(flipped.begin(), flipped.end(), std::size_t{0});
      rows.push_back({named.name, eps,
                      data.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(data.size()),
                      data.size()});
    }
  }
  return rows;
}

void write_asr_table(std::ostream& out, std::span<const AsrRow> rows) {
  out << "setup\tepsilon\tasr\tn_samples\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.setup << '\t' << r.epsilon << '\t' << r.asr << '\t' << r.samples << '\n';
  }
}

}  // namespace tscert::attacks
