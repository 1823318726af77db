#include "tscert/certmath.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include <boost/math/special_functions/beta.hpp>

#include "tscert/errors.hpp"

namespace tscert::certmath {
namespace {

// log(((a^p + b^p) / 2)^(1/p)) for p != 0, a, b > 0.
double log_power_mean(double exponent, double a, double b) {
  const double la = std::log(a);
  const double lb = std::log(b);
  const double x = exponent * la;
  const double y = exponent * lb;
  // log((e^x + e^y) / 2), accurate both for tiny and huge |x|, |y|.
  double log_mean;
  if (std::abs(x) < 1.0 && std::abs(y) < 1.0) {
    log_mean = std::log1p(0.5 * (std::expm1(x) + std::expm1(y)));
  } else {
    const double hi = std::max(x, y);
    const double lo = std::min(x, y);
    log_mean = hi + std::log1p(std::exp(lo - hi)) - std::log(2.0);
  }
  return log_mean / exponent;
}

void check_probabilities(double pa, double pb) {
  if (!(pa >= 0.0 && pa <= 1.0 && pb >= 0.0 && pb <= 1.0)) {
    throw ConfigError("probabilities must lie in [0, 1]");
  }
  if (pa < pb) throw ConfigError("argument order: pA must be at least pB");
  if (pa + pb > 1.0 + 1e-12) throw ConfigError("pA + pB must not exceed 1");
}

}  // namespace

double power_mean(double exponent, double a, double b) {
  if (exponent == 0.0) throw ConfigError("power mean with exponent 0 is not supported");
  if (!(a >= 0.0 && b >= 0.0)) throw ConfigError("power mean arguments must be non-negative");
  if (exponent == 1.0) return 0.5 * (a + b);
  if (exponent < 0.0 && (a == 0.0 || b == 0.0)) return 0.0;
  if (exponent > 0.0 && (a == 0.0 || b == 0.0)) {
    return std::pow(0.5, 1.0 / exponent) * std::max(a, b);
  }
  return std::exp(log_power_mean(exponent, a, b));
}

double clopper_pearson_lower(std::size_t successes, std::size_t trials, double alpha) {
  if (trials == 0) throw ConfigError("Clopper-Pearson needs at least one trial");
  if (successes > trials) throw ConfigError("successes exceed trials");
  if (successes == 0) return 0.0;
  const double k = static_cast<double>(successes);
  const double n = static_cast<double>(trials);
  return boost::math::ibeta_inv(k, n - k + 1.0, alpha);
}

double clopper_pearson_upper(std::size_t successes, std::size_t trials, double alpha) {
  if (trials == 0) throw ConfigError("Clopper-Pearson needs at least one trial");
  if (successes > trials) throw ConfigError("successes exceed trials");
  if (successes == trials) return 1.0;
  const double k = static_cast<double>(successes);
  const double n = static_cast<double>(trials);
  return boost::math::ibetac_inv(k + 1.0, n - k, alpha);
}

ConfidenceBounds multinomial_ci(const smoothing::SampleCounts& counts, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
  if (counts.total == 0) throw ConfigError("confidence bounds need at least one draw");
  const double half = 0.5 * beta;
  return {clopper_pearson_lower(counts.counts[counts.top], counts.total, half),
          clopper_pearson_upper(counts.counts[counts.runner_up], counts.total, half), beta,
          "clopper-pearson-bonferroni"};
}

double log_bound_argument(double pa, double pb, double alpha) {
  if (!(alpha > 1.0)) throw ConfigError("alpha must exceed 1");
  check_probabilities(pa, pb);
  const double m1 = 0.5 * (pa + pb);
  const double m = power_mean(1.0 - alpha, pa, pb);
  // 1 - 2 M1 + 2 M = 1 + 2 (M - M1) and M <= M1 by the power mean inequality.
  const double diff = 2.0 * (m - m1);
  if (diff <= -1.0) return -std::numeric_limits<double>::infinity();
  return std::log1p(diff);
}

double radius_at_alpha(double pa, double pb, double sigma, double alpha) {
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
  const double log_arg = log_bound_argument(pa, pb, alpha);
  if (!std::isfinite(log_arg)) return 0.0;
  const double squared = -(2.0 * sigma * sigma / alpha) * log_arg;
  return std::sqrt(std::max(0.0, squared));
}

double golden_section_maximize(const std::function<double(double)>& f, double lo, double hi,
                               double rel_tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f(c);
  double fd = f(d);
  for (int iter = 0; iter < 500; ++iter) {
    if (hi - lo <= rel_tol * std::max(1.0, std::abs(0.5 * (lo + hi)))) break;
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  return fc >= fd ? c : d;
}

CertifiedRadius certified_radius(double pa, double pb, double sigma) {
  check_probabilities(pa, pb);
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
  CertifiedRadius out;
  if (pa <= pb) return out;
  out.abstained = false;

  // Search over u = log10(alpha - 1) in [-6, 6].
  constexpr double u_lo = -6.0;
  const double u_hi = std::log10(kMaxAlpha - 1.0);
  auto alpha_of = [](double u) { return 1.0 + std::pow(10.0, u); };
  // Radius at unit sigma; sigma scales the result linearly.
  auto objective = [&](double u) {
    const double log_arg = log_bound_argument(pa, pb, alpha_of(u));
    if (!std::isfinite(log_arg)) return 0.0;
    return -2.0 * log_arg / alpha_of(u);
  };

  std::vector<double> grid(kAlphaGridPoints);
  std::size_t best = 0;
  double best_value = -1.0;
  for (std::size_t i = 0; i < kAlphaGridPoints; ++i) {
    grid[i] = u_lo + (u_hi - u_lo) * static_cast<double>(i) /
                         static_cast<double>(kAlphaGridPoints - 1);
    const double v = objective(grid[i]);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  const double lo = grid[best == 0 ? 0 : best - 1];
  const double hi = grid[std::min(best + 1, kAlphaGridPoints - 1)];
  double u_star = golden_section_maximize(objective, lo, hi, 1e-10);
  double value = objective(u_star);
  if (value < best_value) {
    u_star = grid[best];
    value = best_value;
  }
  out.alpha_star = alpha_of(u_star);
  if (!(value > 0.0)) {
    out.degenerate = log_bound_argument(pa, pb, out.alpha_star) == -std::numeric_limits<double>::infinity();
    out.radius = 0.0;
    return out;
  }
  out.radius = sigma * std::sqrt(value);
  return out;
}

Certification certify_counts(const smoothing::SampleCounts& counts, double sigma, double beta) {
  Certification c;
  c.prediction = counts.top;
  c.bounds = multinomial_ci(counts, beta);
  if (c.bounds.pa_lower <= c.bounds.pb_upper) {
    c.radius = CertifiedRadius{};
    return c;
  }
  // Rounding in the two quantiles can push the sum just past 1.
  const double pb = std::min(c.bounds.pb_upper, 1.0 - c.bounds.pa_lower);
  c.radius = certified_radius(c.bounds.pa_lower, pb, sigma);
  return c;
}

std::vector<SurfaceRow> emit_radius_surface(double sigma, std::span<const double> alphas,
                                            std::span<const double> pa_grid) {
  std::vector<SurfaceRow> rows;
  rows.reserve(alphas.size() * pa_grid.size());
  for (double alpha : alphas) {
    for (double pa : pa_grid) {
      if (!(pa >= 0.5 && pa < 1.0)) throw ConfigError("surface: pA must lie in [0.5, 1)");
      const double r = radius_at_alpha(pa, 1.0 - pa, sigma, alpha);
      rows.push_back({alpha, pa, r * r});
    }
  }
  return rows;
}

void write_radius_surface(std::ostream& out, std::span<const SurfaceRow> rows) {
  out << "alpha\tp_a\tl_squared\n";
  out << std::setprecision(17);
  for (const auto& r : rows) out << r.alpha << '\t' << r.pa << '\t' << r.l_squared << '\n';
}

}  // namespace tscert::certmath
