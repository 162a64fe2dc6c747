#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace miup {

// Type-7 quantile (sorted-order linear interpolation), the single quantile
// convention used everywhere in this library.
inline double quantile_type7(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty list");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile q outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * q;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

inline double median(std::vector<double> values) {
  return quantile_type7(std::move(values), 0.5);
}

inline double mean(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean of empty list");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

// Sample standard deviation (n-1 denominator); 0 for a single value.
inline double sample_std(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("std of empty list");
  if (values.size() == 1) return 0.0;
  const double m = mean(values);
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(values.size() - 1));
}

// Standard normal CDF via erf; |error| < 1e-7 over the whole real line
// (libm's erf is faithfully rounded, so the tolerance is comfortable).
inline double normal_cdf(double z) {
  return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0)));
}

// Binomial standard error of an empirical rate p over n trials.
inline double binomial_stderr(double p, std::size_t n) {
  if (n == 0) return 0.0;
  return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n));
}

// log C(n, k) via lgamma, stable for large n.
inline double log_binomial_coeff(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// Upper binomial tail P[X >= s] for X ~ Bin(n, p), summed in log space.
inline double binomial_upper_tail(std::int64_t s, std::int64_t n, double p) {
  if (s <= 0) return 1.0;
  if (s > n) return 0.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  double total = 0.0;
  for (std::int64_t k = s; k <= n; ++k) {
    const double log_term = log_binomial_coeff(n, k) +
                            static_cast<double>(k) * std::log(p) +
                            static_cast<double>(n - k) * std::log1p(-p);
    total += std::exp(log_term);
  }
  return std::min(total, 1.0);
}

}  // namespace miup
