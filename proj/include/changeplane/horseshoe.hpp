#pragma once

// Horseshoe prior on the boundary direction through an unconstrained vector nu:
//   nu_j | lambda_j, lambda_g ~ N(0, lambda_g^2 lambda_j^2),
//   lambda_j, lambda_g ~ C+(0, 1) via inverse-gamma auxiliaries,
//   theta(nu) = sign(nu_1) nu / ||nu||,  sign(0) := +1.

#include "changeplane/random.hpp"
#include "changeplane/slice.hpp"

#include <Eigen/Dense>

#include <functional>

namespace changeplane {

struct HorseshoeState {
  Eigen::VectorXd nu;
  Eigen::VectorXd lambda_loc2;  // squared local scales
  Eigen::VectorXd xi_loc;
  double lambda_glob2 = 1.0;    // squared global scale
  double xi_glob = 1.0;

  /// nu ~ N(0, I) with every scale and auxiliary at 1.
  static HorseshoeState initial(Eigen::Index q, Rng& rng);
  Eigen::Index q() const { return nu.size(); }
  /// Diagonal of the conditional prior covariance of nu.
  Eigen::VectorXd prior_variances() const { return lambda_glob2 * lambda_loc2; }
  void validate() const;
};

/// sign(nu_1) nu / ||nu||_2 with sign(0) = +1. Throws on the zero vector.
Eigen::VectorXd theta_of_nu(const Eigen::VectorXd& nu);

/// Elliptical slice update of nu against -(2 tau^2)^{-1} sum (t_i - z_i'theta(nu))^2
/// under the prior N(0, diag(lambda_glob2 * lambda_loc2)).
void update_nu_ess(HorseshoeState& hs, const Eigen::VectorXd& t, const Eigen::MatrixXd& z,
                   double tau, Rng& rng, SliceStats* stats = nullptr);

/// Elliptical slice update of nu against an arbitrary log-likelihood of the
/// score vector z theta(nu).
void update_nu_ess_scores(HorseshoeState& hs, const Eigen::MatrixXd& z,
                          const std::function<double(const Eigen::VectorXd&)>& score_loglik,
                          Rng& rng, SliceStats* stats = nullptr);

/// Closed-form inverse-gamma sweep over (lambda_loc2, xi_loc, lambda_glob2, xi_glob).
void update_scales(HorseshoeState& hs, Rng& rng);

}  // namespace changeplane
