#include "changeplane/normal.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace changeplane {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kSqrt2 = 1.41421356237309504880;
}  // namespace

double norm_pdf(double x) { return std::exp(log_norm_pdf(x)); }

double log_norm_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double log_norm_cdf(double x) {
  if (x > -37.0) {
    if (x > 5.0) {
      // log(1 - Phi(-x)) keeps precision where Phi(x) rounds to 1.
      return std::log1p(-0.5 * std::erfc(x * kInvSqrt2));
    }
    return std::log(0.5 * std::erfc(-x * kInvSqrt2));
  }
  // Mills-ratio expansion: Phi(x) ~ phi(x)/|x| * (1 - 1/x^2 + 3/x^4 - 15/x^6 + ...).
  const double r = 1.0 / (x * x);
  const double series =
      1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r * (1.0 - 9.0 * r * (1.0 - 11.0 * r)))));
  return log_norm_pdf(x) - std::log(-x) + std::log(series);
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("norm_quantile: probability must lie in (0, 1)");
  }
  return -kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

double log_normal_density(double x, double mean, double sigma2) {
  const double r = x - mean;
  return -0.5 * r * r / sigma2 - 0.5 * std::log(sigma2) - kLogSqrt2Pi;
}

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

}  // namespace changeplane
