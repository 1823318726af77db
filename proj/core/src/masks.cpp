#include "tscert/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tscert/errors.hpp"
#include "tscert/random.hpp"

namespace tscert::masks {

std::size_t Mask::zeros() const noexcept {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{0}));
}

std::size_t Mask::longest_zero_run() const noexcept {
  std::size_t best = 0;
  std::size_t run = 0;
  for (auto b : bits) {
    run = b == 0 ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

void validate(const MaskSpec& spec) {
  if (!(spec.keep_ratio >= 0.0 && spec.keep_ratio <= 1.0)) {
    throw ConfigError("mask: keep_ratio must lie in [0, 1]");
  }
  if (spec.length == 0) throw ConfigError("mask: length must be positive");
}

Mask binomial_mask(std::size_t length, double keep_ratio, std::uint64_t seed) {
  validate(MaskSpec{MaskKind::binomial, keep_ratio, length});
  Engine rng = make_engine(seed);
  std::bernoulli_distribution keep(keep_ratio);
  Mask mask{std::vector<std::uint8_t>(length)};
  for (auto& b : mask.bits) b = keep(rng) ? 1 : 0;
  return mask;
}

Mask continuous_mask(std::size_t length, double keep_ratio, std::uint64_t seed) {
  validate(MaskSpec{MaskKind::continuous, keep_ratio, length});
  const auto zeros =
      static_cast<std::size_t>(std::llround((1.0 - keep_ratio) * static_cast<double>(length)));
  Mask mask{std::vector<std::uint8_t>(length, 1)};
  if (zeros == 0) return mask;
  if (zeros >= length) {
    std::fill(mask.bits.begin(), mask.bits.end(), std::uint8_t{0});
    return mask;
  }
  const std::size_t max_run = (zeros + 1) / 2;
  const std::size_t ones = length - zeros;
  Engine rng = make_engine(seed);

  // Stick-breaking: peel run lengths off the remaining zero budget. A
  // split needs runs - 1 <= ones separators; retry a few times, then fall
  // back to the fewest possible runs.
  std::vector<std::size_t> runs;
  for (int attempt = 0; attempt < 16; ++attempt) {
    runs.clear();
    std::size_t remaining = zeros;
    while (remaining > 0) {
      std::uniform_int_distribution<std::size_t> pick(1, std::min(max_run, remaining));
      const std::size_t r = pick(rng);
      runs.push_back(r);
      remaining -= r;
    }
    if (runs.size() <= ones + 1) break;
  }
  if (runs.size() > ones + 1) {
    runs.assign(zeros / max_run, max_run);
    if (zeros % max_run != 0) runs.push_back(zeros % max_run);
  }

  // Gaps: leading, trailing >= 0, interior >= 1, summing to `ones`.
  // A uniform composition via r cut points chosen without replacement.
  const std::size_t r = runs.size();
  const std::size_t free_ones = ones - (r - 1);
  std::vector<std::size_t> slots(free_ones + r);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  std::vector<std::size_t> cuts;
  std::sample(slots.begin(), slots.end(), std::back_inserter(cuts), r, rng);
  std::vector<std::size_t> gaps(r + 1);
  std::size_t previous = 0;
  for (std::size_t i = 0; i < r; ++i) {
    // Stars and bars: stars between consecutive bars.
    gaps[i] = cuts[i] - previous;
    previous = cuts[i] + 1;
  }
  gaps[r] = free_ones + r - previous;
  for (std::size_t i = 1; i < r; ++i) gaps[i] += 1;

  std::size_t pos = 0;
  for (std::size_t i = 0; i < r; ++i) {
    pos += gaps[i];
    std::fill_n(mask.bits.begin() + static_cast<std::ptrdiff_t>(pos), runs[i], std::uint8_t{0});
    pos += runs[i];
  }
  return mask;
}

Mask make_mask(const MaskSpec& spec, std::uint64_t seed) {
  return spec.kind == MaskKind::binomial ? binomial_mask(spec.length, spec.keep_ratio, seed)
                                         : continuous_mask(spec.length, spec.keep_ratio, seed);
}

void apply(const Mask& mask, std::span<const double> values, std::span<double> out) {
  for (std::size_t t = 0; t < values.size(); ++t) out[t] = mask.bits[t] != 0 ? values[t] : 0.0;
}

MaskSet::MaskSet(std::uint64_t base_seed, std::size_t count, const MaskSpec& spec)
    : base_seed_(base_seed), spec_(spec) {
  validate(spec);
  if (count == 0) throw ConfigError("mask set: count must be at least 1");
  masks_.reserve(count);
  for (std::size_t i = 0; i < count; ++i) masks_.push_back(make_mask(spec, derive_seed(base_seed, i)));
}

MaskSet fixed_mask_set(std::uint64_t base_seed, std::size_t count, const MaskSpec& spec) {
  return MaskSet(base_seed, count, spec);
}

MaskKind parse_mask_kind(const std::string& text) {
  if (text == "binomial") return MaskKind::binomial;
  if (text == "continuous") return MaskKind::continuous;
  throw ConfigError("mask kind must be 'binomial' or 'continuous', got '" + text + "'");
}

std::string to_string(MaskKind kind) {
  return kind == MaskKind::binomial ? "binomial" : "continuous";
}

}  // namespace tscert::masks
