#pragma once

// Numerical checks of the smoothing theory: expected gate error, its margin
// exponent, the pseudo-true parameter path eta*(tau) and the feasibility
// arithmetic for polynomial tau schedules.

#include "changeplane/simlab.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace changeplane {

struct McEstimate {
  double value = 0.0;
  double se = 0.0;
};

/// Monte Carlo E[Phi(-|z'theta| / tau)] over the rows of `z_draws`.
McEstimate theory_gate_error(const Eigen::VectorXd& theta, double tau,
                             const Eigen::MatrixXd& z_draws);

/// Same for a scalar standard-normal score, from `mc_draws` draws.
McEstimate gaussian_score_gate_error(double tau, std::size_t mc_draws, std::uint64_t seed);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares fit of log y = intercept + slope log x.
RateFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

struct MarginSlope {
  std::vector<double> taus;
  std::vector<McEstimate> errors;
  RateFit fit;
};

/// Gate error of a standard-normal score over `taus` with common random numbers.
MarginSlope gaussian_margin_slope(const std::vector<double>& taus, std::size_t mc_draws,
                                  std::uint64_t seed);

/// Nodes and weights of n-point Gauss-Hermite quadrature (weight exp(-x^2)).
struct Quadrature {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
Quadrature gauss_hermite(int n);

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimization with restarts until `budget`
/// evaluations are used or a restart brings no improvement.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, double step, int budget,
                             double x_tol = 1e-7, double f_tol = 1e-12);

/// Covariate sample with the outcome integrated out analytically or by
/// quadrature; evaluates the sample average of E_eps[log p_{eta,tau}(Y | W, X, Z)].
class ExpectedLogLik {
 public:
  ExpectedLogLik(const DgpSpec& spec, Eigen::Index rows, std::uint64_t seed, int gh_nodes = 16);
  double operator()(const ModelParams& eta, double tau) const;
  Eigen::Index rows() const { return w_.rows(); }

 private:
  DgpSpec spec_;
  Eigen::MatrixXd w_;
  Eigen::VectorXd x_;
  Eigen::VectorXd mean_;  // true conditional mean of Y
  Quadrature gh_;
};

struct PseudoTruePoint {
  double tau = 0.0;
  ModelParams eta;
  double distance = 0.0;  // ||eta*(tau) - eta_0||_2 over (beta, gamma, theta, sigma2)
  double objective = 0.0;
  int evaluations = 0;
  bool converged = false;
};

struct PseudoTruePath {
  std::vector<PseudoTruePoint> points;
  RateFit rate;  // log distance against log tau
};

/// eta*(tau) for each tau by Nelder-Mead over the chart (beta, gamma,
/// theta0 + B v renormalized with B spanning theta0's complement, log sigma2),
/// started at eta_0. Common covariate sample across tau.
PseudoTruePath pseudo_true_path(const DgpSpec& spec, const std::vector<double>& taus,
                                int budget = 2000, Eigen::Index rows = 100000,
                                std::uint64_t seed = 1);

struct Feasibility {
  bool tv_bvm_ok = false;
  bool shift_removed = false;
  bool both = false;
};

/// Polynomial schedule tau_n = n^{-rho}: TV-BvM needs rho < 1/8, shift removal
/// needs rho > 1/(2 alpha). Strict inequalities.
Feasibility schedule_feasibility(double alpha, double rho);

}  // namespace changeplane
