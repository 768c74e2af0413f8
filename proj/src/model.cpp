#include "changeplane/model.hpp"

#include "changeplane/error.hpp"
#include "changeplane/normal.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace changeplane {

namespace {

void require_finite(const VectorRef& v, const char* what) {
  if (!v.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

void require_tau(double tau, const char* what) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument(std::string(what) + ": tau must be positive and finite");
  }
}

}  // namespace

void Dataset::validate() const {
  const Eigen::Index rows = y.size();
  if (rows < 1) throw DataError("dataset has no rows");
  auto check_block = [&](const Eigen::MatrixXd& m, const char* name) {
    if (m.rows() != rows) {
      std::ostringstream os;
      os << name << " has " << m.rows() << " rows, outcome has " << rows;
      throw DataError(os.str());
    }
    if (m.cols() < 1) throw DataError(std::string(name) + " has no columns");
    if (!m.allFinite()) throw DataError(std::string(name) + " contains non-finite entries");
  };
  if (!y.allFinite()) throw DataError("outcome contains non-finite entries");
  check_block(w, "W");
  check_block(x, "X");
  check_block(z, "Z");
}

void ParamState::validate() const {
  const auto& th = eta.theta;
  if (th.size() == 0 || std::abs(th.norm() - 1.0) > 1e-12) {
    throw std::invalid_argument("theta must be a unit vector");
  }
  if (th(0) < 0.0) throw std::invalid_argument("theta violates the theta_1 >= 0 convention");
  if (!(eta.sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
  if (static_cast<Eigen::Index>(d.size()) != t.size()) {
    throw std::invalid_argument("latent d and t differ in length");
  }
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if ((d[i] != 0) != (t(i) >= 0.0)) {
      throw std::invalid_argument("latent gate d is inconsistent with score t");
    }
  }
}

SmoothingScale::SmoothingScale(double tau) : tau_(tau) { require_tau(tau, "SmoothingScale"); }

double probit_gate(const VectorRef& z_row, const VectorRef& theta, double tau) {
  require_finite(z_row, "probit_gate");
  require_finite(theta, "probit_gate");
  require_tau(tau, "probit_gate");
  const double p = norm_cdf(z_row.dot(theta) / tau);
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  return p < lo ? lo : (p > hi ? hi : p);
}

int hard_indicator(const VectorRef& z_row, const VectorRef& theta) {
  require_finite(z_row, "hard_indicator");
  require_finite(theta, "hard_indicator");
  return z_row.dot(theta) >= 0.0 ? 1 : 0;
}

double mixture_log_density(double resid0, double shift, double sigma2, double log_gate,
                           double log_gate_c) {
  const double lp0 = log_gate_c + log_normal_density(resid0, 0.0, sigma2);
  const double lp1 = log_gate + log_normal_density(resid0, shift, sigma2);
  return log_sum_exp(lp0, lp1);
}

double working_log_density(double y, const VectorRef& w_row, const VectorRef& x_row,
                           const VectorRef& z_row, const ModelParams& eta, double tau) {
  if (!(eta.sigma2 > 0.0)) throw std::invalid_argument("working_log_density: sigma2 must be positive");
  require_finite(y, "working_log_density");
  require_finite(w_row, "working_log_density");
  require_finite(x_row, "working_log_density");
  require_finite(z_row, "working_log_density");
  require_tau(tau, "working_log_density");
  const double s = z_row.dot(eta.theta) / tau;
  return mixture_log_density(y - w_row.dot(eta.beta), x_row.dot(eta.gamma), eta.sigma2,
                             log_norm_cdf(s), log_norm_cdf(-s));
}

double working_conditional_mean(const VectorRef& w_row, const VectorRef& x_row,
                                const VectorRef& z_row, const ModelParams& eta, double tau) {
  if (!(eta.sigma2 > 0.0)) {
    throw std::invalid_argument("working_conditional_mean: sigma2 must be positive");
  }
  require_finite(w_row, "working_conditional_mean");
  require_finite(x_row, "working_conditional_mean");
  return w_row.dot(eta.beta) + x_row.dot(eta.gamma) * probit_gate(z_row, eta.theta, tau);
}

double latent_score_log_lik(const Eigen::VectorXd& t, const Eigen::MatrixXd& z,
                            const VectorRef& v, double tau) {
  if (z.rows() == 0) return 0.0;
  return -(t - z * v).squaredNorm() / (2.0 * tau * tau);
}

void normalize_hemisphere(Eigen::VectorXd& theta) {
  const double norm = theta.norm();
  if (!(norm > 0.0)) throw std::invalid_argument("cannot normalize a zero direction");
  theta /= norm;
  if (theta(0) < 0.0) theta = -theta;
}

ModelParams PosteriorDraws::draw(Eigen::Index k) const {
  ModelParams eta;
  eta.beta = beta.row(k).transpose();
  eta.gamma = gamma.row(k).transpose();
  eta.theta = theta.row(k).transpose();
  eta.sigma2 = sigma2(k);
  return eta;
}

}  // namespace changeplane
