#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

namespace changeplane {

/// Seeded random stream. One instance per chain; never shared across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Gamma(shape, scale = 1).
  double gamma(double shape);
  /// Exponential with the given rate.
  double exponential(double rate) { return -std::log(uniform()) / rate; }
  bool bernoulli(double p) { return uniform() < p; }
  Eigen::VectorXd normal_vector(Eigen::Index size);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

/// Stream-splitting rule: child stream `stream` of `seed` is seeded with
/// splitmix64(seed + splitmix64(stream + 1)). Used for replicates, chains and
/// Monte Carlo side computations so every result is a function of one seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Draw from N(mean, sd^2) truncated to [lower, +inf).
///
/// Inverse-CDF on the upper tail while the standardized bound is at most 5;
/// beyond that, exponential-proposal rejection with the optimal rate.
double truncated_normal_above(double mean, double sd, double lower, Rng& rng);

/// Draw from N(mean, sd^2) truncated to (-inf, upper).
double truncated_normal_below(double mean, double sd, double upper, Rng& rng);

/// Inverse-gamma with density proportional to x^{-shape-1} exp(-scale/x).
double inverse_gamma(double shape, double scale, Rng& rng);

/// Uniform draw on {theta in S^{q-1} : theta_1 >= 0}.
Eigen::VectorXd uniform_hemisphere(Eigen::Index q, Rng& rng);

/// Draw from N(mean, P^{-1}) given the Cholesky factor L of the precision P = L L'.
Eigen::VectorXd gaussian_from_precision(const Eigen::LLT<Eigen::MatrixXd>& precision_llt,
                                        const Eigen::VectorXd& mean, Rng& rng);

}  // namespace changeplane
