#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tscert/smoothing.hpp"
#include "tscert/tsdata.hpp"

namespace tscert::attacks {

struct AttackConfig {
  double epsilon = 0.5;
  std::size_t steps = 40;
  double step_size = 0.0;  // <= 0 selects 2 * epsilon / steps
  std::size_t eot_draws = 16;
  std::size_t vote_draws = 200;
  std::uint64_t seed = 0;
};

void validate(const AttackConfig& cfg);

/// What the attacker faces. sigma == 0 is a benign (deterministic)
/// classifier; sigma > 0 is the smoothed classifier, attacked through
/// expectation over transformation and judged by majority vote.
struct AttackTarget {
  const smoothing::EnsembleClassifier* classifier = nullptr;
  double sigma = 0.0;
};

// Hard decision of the target at x: plain argmax when benign, otherwise the
// majority of vote_draws noisy predictions seeded by `seed`.
std::size_t decide(const AttackTarget& target, std::span<const double> x, std::size_t vote_draws,
                   std::uint64_t seed);

struct AttackResult {
  std::vector<double> adversarial;
  bool success = false;
  double distance = 0.0;
  std::size_t queries = 0;          // gradient evaluations
  bool random_step_taken = false;   // a zero gradient forced a random direction
};

/// Untargeted PGD in l2: x <- Proj_eps(x + eta * g / ||g||), g the gradient
/// of cross-entropy at the true label (averaged over eot_draws shared-noise
/// draws for smoothed targets). Throws NumericalError on non-finite gradients.
AttackResult pgd_l2(const AttackTarget& target, std::span<const double> x, std::size_t label,
                    const AttackConfig& cfg);

struct NamedTarget {
  std::string name;
  AttackTarget target;
};

struct AsrRow {
  std::string setup;
  double epsilon = 0.0;
  double asr = 0.0;
  std::size_t samples = 0;
};

/// Attack success rate per (setup, epsilon): the fraction of `samples`
/// misclassified after an independent attack at each budget. Per-sample
/// seeds depend only on (cfg.seed, sample index), so results do not depend
/// on `threads`.
std::vector<AsrRow> attack_sweep(std::span<const NamedTarget> targets, const tsdata::Dataset& data,
                                 std::span<const double> epsilons, const AttackConfig& cfg,
                                 std::size_t threads = 1);

// Tab-separated with header "setup\tepsilon\tasr\tn_samples".
void write_asr_table(std::ostream& out, std::span<const AsrRow> rows);

}  // namespace tscert::attacks
