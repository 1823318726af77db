#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tscert::masks {

enum class MaskKind { binomial, continuous };

struct MaskSpec {
  MaskKind kind = MaskKind::binomial;
  double keep_ratio = 0.9;
  std::size_t length = 0;
  friend bool operator==(const MaskSpec&, const MaskSpec&) = default;
};

void validate(const MaskSpec& spec);

// 1 = keep, 0 = zero out.
struct Mask {
  std::vector<std::uint8_t> bits;

  std::size_t size() const noexcept { return bits.size(); }
  std::size_t zeros() const noexcept;
  // Length of the longest run of zeros.
  std::size_t longest_zero_run() const noexcept;
  friend bool operator==(const Mask&, const Mask&) = default;
};

// Every bit is independently 1 with probability keep_ratio.
Mask binomial_mask(std::size_t length, double keep_ratio, std::uint64_t seed);

/// Zeros out exactly Z = round((1 - keep_ratio) * length) positions, grouped
/// into runs of at most ceil(Z / 2) separated by at least one kept position.
///
/// Run lengths come from stick-breaking over [1, ceil(Z/2)]; the kept
/// positions are then split into gaps by a uniform composition. The single
/// exception is Z == length, which can only be one run of zeros.
Mask continuous_mask(std::size_t length, double keep_ratio, std::uint64_t seed);

Mask make_mask(const MaskSpec& spec, std::uint64_t seed);

// Elementwise mask * values.
void apply(const Mask& mask, std::span<const double> values, std::span<double> out);

/// m fixed masks shared by every input; mask i uses derive_seed(base_seed, i).
///
/// Only (base_seed, m, spec) needs to be stored; the masks are regenerated
/// bit-identically on load.
class MaskSet {
 public:
  MaskSet(std::uint64_t base_seed, std::size_t count, const MaskSpec& spec);

  std::uint64_t base_seed() const noexcept { return base_seed_; }
  const MaskSpec& spec() const noexcept { return spec_; }
  std::size_t size() const noexcept { return masks_.size(); }
  const Mask& operator[](std::size_t i) const { return masks_[i]; }
  std::span<const Mask> masks() const noexcept { return masks_; }

 private:
  std::uint64_t base_seed_;
  MaskSpec spec_;
  std::vector<Mask> masks_;
};

MaskSet fixed_mask_set(std::uint64_t base_seed, std::size_t count, const MaskSpec& spec);

MaskKind parse_mask_kind(const std::string& text);
std::string to_string(MaskKind kind);

}  // namespace tscert::masks
