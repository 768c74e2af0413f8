#pragma once

// Data model, parameter state and the probit-gated working likelihood.
//
// Working model at smoothing scale tau:
//   T_i = z_i'theta + e_i,  e_i ~ N(0, tau^2),  D_i = 1{T_i >= 0}
//   Y_i | D_i ~ N(w_i'beta + x_i'gamma D_i, sigma2)
// so that marginally D_i ~ Bernoulli(Phi(z_i'theta / tau)) and Y_i follows a
// two-component Gaussian mixture.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace changeplane {

/// Observed rows (Y, W, X, Z). W: baseline covariates, X: effect columns,
/// Z: boundary covariates.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd w;
  Eigen::MatrixXd x;
  Eigen::MatrixXd z;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return w.cols(); }
  Eigen::Index r() const { return x.cols(); }
  Eigen::Index q() const { return z.cols(); }

  /// Throws DataError on shape mismatch, empty blocks or non-finite entries.
  void validate() const;
};

/// Structural parameters eta = (beta, gamma, theta, sigma2).
struct ModelParams {
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;
  Eigen::VectorXd theta;
  double sigma2 = 1.0;
};

/// Full sampler state: structural parameters plus the latent gate (d) and
/// latent Gaussian score (t).
struct ParamState {
  ModelParams eta;
  std::vector<unsigned char> d;
  Eigen::VectorXd t;

  /// Checks unit-norm hemisphere theta, positive sigma2 and d[i] == 1{t[i] >= 0}.
  void validate() const;
};

/// Smoothing scale of the probit gate; strictly positive.
class SmoothingScale {
 public:
  explicit SmoothingScale(double tau);
  double value() const { return tau_; }
  /// Score window over which the gate moves from 0.05 to 0.95.
  double gray_zone_width() const { return 3.29 * tau_; }

 private:
  double tau_;
};

using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Phi(z'theta / tau), clamped into the open interval (0, 1).
double probit_gate(const VectorRef& z_row, const VectorRef& theta, double tau);

/// 1 iff z'theta >= 0 (inclusive boundary).
int hard_indicator(const VectorRef& z_row, const VectorRef& theta);

/// log[(1 - pi) phi_sigma(y - w'beta) + pi phi_sigma(y - w'beta - x'gamma)],
/// assembled in log space.
double working_log_density(double y, const VectorRef& w_row, const VectorRef& x_row,
                           const VectorRef& z_row, const ModelParams& eta, double tau);

/// w'beta + (x'gamma) Phi(z'theta / tau).
double working_conditional_mean(const VectorRef& w_row, const VectorRef& x_row,
                                const VectorRef& z_row, const ModelParams& eta, double tau);

/// Mixture log density from precomputed pieces. `log_gate` and `log_gate_c` are
/// log pi and log(1 - pi); `resid0` = y - baseline, `shift` = x'gamma.
double mixture_log_density(double resid0, double shift, double sigma2, double log_gate,
                           double log_gate_c);

/// Complete-data log likelihood of a direction given latent scores:
/// -(2 tau^2)^{-1} sum_i (t_i - z_i'v)^2. `z` may have zero rows.
double latent_score_log_lik(const Eigen::VectorXd& t, const Eigen::MatrixXd& z,
                            const VectorRef& v, double tau);

/// Renormalize to unit length and flip into the theta_1 >= 0 hemisphere.
void normalize_hemisphere(Eigen::VectorXd& theta);

/// Retained post-burn-in draws, one row per kept sweep.
struct PosteriorDraws {
  Eigen::MatrixXd beta;   // n_kept x p (zero columns under a tree baseline)
  Eigen::MatrixXd gamma;  // n_kept x r
  Eigen::MatrixXd theta;  // n_kept x q
  Eigen::VectorXd sigma2;
  std::size_t n_iter = 0;
  std::size_t n_burn = 0;
  std::size_t thin = 1;
  double tau = 0.0;

  Eigen::Index n_kept() const { return sigma2.size(); }
  ModelParams draw(Eigen::Index k) const;

  static std::size_t expected_kept(std::size_t n_iter, std::size_t n_burn, std::size_t thin) {
    return (n_iter - n_burn) / thin;
  }
};

}  // namespace changeplane
