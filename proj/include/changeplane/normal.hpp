#pragma once

// Standard normal density, distribution and quantile functions used by the
// probit gate and the latent-score samplers.

namespace changeplane {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

double norm_pdf(double x);
double log_norm_pdf(double x);

/// Phi(x), evaluated through erfc so the lower tail keeps full relative precision.
double norm_cdf(double x);

/// log Phi(x); finite for every finite x (asymptotic series below -37).
double log_norm_cdf(double x);

/// Phi^{-1}(p) for p in (0, 1).
double norm_quantile(double p);

/// log of the N(mean, sigma2) density at x.
double log_normal_density(double x, double mean, double sigma2);

/// log(exp(a) + exp(b)) without overflow or underflow.
double log_sum_exp(double a, double b);

}  // namespace changeplane
