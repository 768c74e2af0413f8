#include "changeplane/random.hpp"

#include "changeplane/normal.hpp"

#include <cmath>
#include <stdexcept>

namespace changeplane {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Standardized draw from N(0,1) restricted to [a, inf).
double std_truncated_above(double a, Rng& rng) {
  if (a <= 5.0) {
    // P(X >= x) = U * P(X >= a)  =>  x = -Phi^{-1}(U * Phi(-a)).
    const double x = -norm_quantile(rng.uniform() * norm_cdf(-a));
    return x < a ? a : x;
  }
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a + rng.exponential(rate);
    const double d = z - rate;
    if (std::log(rng.uniform()) <= -0.5 * d * d) return z;
  }
}

}  // namespace

double Rng::uniform() {
  // 53 random bits, shifted by half an ulp so neither 0 nor 1 can occur.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::gamma(double shape) {
  std::gamma_distribution<double> dist(shape, 1.0);
  return dist(engine_);
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index size) {
  Eigen::VectorXd v(size);
  for (Eigen::Index j = 0; j < size; ++j) v(j) = normal();
  return v;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed + splitmix64(stream + 1));
}

double truncated_normal_above(double mean, double sd, double lower, Rng& rng) {
  return mean + sd * std_truncated_above((lower - mean) / sd, rng);
}

double truncated_normal_below(double mean, double sd, double upper, Rng& rng) {
  const double x = mean - sd * std_truncated_above((mean - upper) / sd, rng);
  // Open upper bound: a draw that lands exactly on it is nudged inside.
  return x < upper ? x : std::nextafter(upper, -HUGE_VAL);
}

double inverse_gamma(double shape, double scale, Rng& rng) {
  if (!(shape > 0.0 && scale > 0.0)) {
    throw std::invalid_argument("inverse_gamma: shape and scale must be positive");
  }
  return scale / rng.gamma(shape);
}

Eigen::VectorXd uniform_hemisphere(Eigen::Index q, Rng& rng) {
  Eigen::VectorXd v;
  double norm = 0.0;
  do {
    v = rng.normal_vector(q);
    norm = v.norm();
  } while (norm == 0.0);
  v /= norm;
  if (v(0) < 0.0) v = -v;
  return v;
}

Eigen::VectorXd gaussian_from_precision(const Eigen::LLT<Eigen::MatrixXd>& precision_llt,
                                        const Eigen::VectorXd& mean, Rng& rng) {
  // If P = L L' then L'^{-1} z has covariance P^{-1}.
  const Eigen::VectorXd z = rng.normal_vector(mean.size());
  return mean + precision_llt.matrixU().solve(z);
}

}  // namespace changeplane
