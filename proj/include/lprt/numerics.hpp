#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>

namespace lprt {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Pairwise summation in a fixed order; the result depends only on the input sequence.
inline double pairwise_sum(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n <= 32) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

/// Exponent parsing helper: accepts "inf" (any case) or a number >= 1.
double parse_exponent(const std::string& text);

std::string format_exponent(double p);

/// -expm1(-x)/x with the x -> 0 limit, i.e. (1 - e^{-x}) / x.
inline double one_minus_exp_over(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - 0.5 * x;
  return -std::expm1(-x) / x;
}

}  // namespace lprt
