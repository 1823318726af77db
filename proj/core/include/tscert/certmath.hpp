#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tscert/smoothing.hpp"

namespace tscert::certmath {

/// Power mean of two numbers, ((a^p + b^p) / 2)^(1/p).
///
/// Evaluated in log space so large negative exponents do not overflow.
/// For p < 0 a zero argument drives the mean to 0. p == 0 is rejected.
double power_mean(double exponent, double a, double b);

struct ConfidenceBounds {
  double pa_lower = 0.0;
  double pb_upper = 1.0;
  double beta = 0.0;
  std::string method;
};

// One-sided exact Clopper-Pearson bounds at confidence 1 - alpha.
double clopper_pearson_lower(std::size_t successes, std::size_t trials, double alpha);
double clopper_pearson_upper(std::size_t successes, std::size_t trials, double alpha);

/// Lower bound for the top count and upper bound for the runner-up, each
/// Clopper-Pearson at level 1 - beta/2, for joint coverage >= 1 - beta.
ConfidenceBounds multinomial_ci(const smoothing::SampleCounts& counts, double beta);

/// log(1 - 2 M_1(pA, pB) + 2 M_{1-alpha}(pA, pB)), computed without
/// cancellation near pA == pB.
double log_bound_argument(double pa, double pb, double alpha);

// sqrt(max(0, -(2 sigma^2 / alpha) * log_bound_argument)). Throws ConfigError
// when pA < pB or the probabilities are out of range.
double radius_at_alpha(double pa, double pb, double sigma, double alpha);

struct CertifiedRadius {
  double radius = 0.0;
  bool abstained = true;
  double alpha_star = 0.0;
  bool degenerate = false;  // log argument underflowed to <= 0; radius clamped to 0
};

inline constexpr double kMaxAlpha = 1e6;
inline constexpr std::size_t kAlphaGridPoints = 400;

/// Supremum over alpha in (1, 1e6] of radius_at_alpha.
///
/// A 400-point grid, log-spaced in (alpha - 1), locates the best bracket;
/// golden-section search then refines to relative tolerance 1e-10.
/// Abstains when pA <= pB.
CertifiedRadius certified_radius(double pa, double pb, double sigma);

/// Maximizes a unimodal f on [lo, hi] by golden-section search; stops when
/// the bracket is narrower than rel_tol * max(1, |x|). Returns the arg max.
double golden_section_maximize(const std::function<double(double)>& f, double lo, double hi,
                               double rel_tol);

struct Certification {
  std::size_t prediction = 0;
  ConfidenceBounds bounds;
  CertifiedRadius radius;
};

Certification certify_counts(const smoothing::SampleCounts& counts, double sigma, double beta);

struct SurfaceRow {
  double alpha = 0.0;
  double pa = 0.0;
  double l_squared = 0.0;
};

// L^2 at each (alpha, pA) with pB = 1 - pA. pA values must lie in [0.5, 1).
std::vector<SurfaceRow> emit_radius_surface(double sigma, std::span<const double> alphas,
                                            std::span<const double> pa_grid);

// Tab-separated with header "alpha\tp_a\tl_squared".
void write_radius_surface(std::ostream& out, std::span<const SurfaceRow> rows);

}  // namespace tscert::certmath
