#include "changeplane/horseshoe.hpp"

#include <cmath>
#include <stdexcept>

namespace changeplane {

HorseshoeState HorseshoeState::initial(Eigen::Index q, Rng& rng) {
  HorseshoeState hs;
  do {
    hs.nu = rng.normal_vector(q);
  } while (hs.nu.norm() == 0.0);
  hs.lambda_loc2 = Eigen::VectorXd::Ones(q);
  hs.xi_loc = Eigen::VectorXd::Ones(q);
  hs.lambda_glob2 = 1.0;
  hs.xi_glob = 1.0;
  return hs;
}

void HorseshoeState::validate() const {
  const Eigen::Index dim = nu.size();
  if (dim == 0 || lambda_loc2.size() != dim || xi_loc.size() != dim) {
    throw std::invalid_argument("horseshoe state has inconsistent dimensions");
  }
  if (!(lambda_loc2.array() > 0.0).all() || !(xi_loc.array() > 0.0).all() ||
      !(lambda_glob2 > 0.0) || !(xi_glob > 0.0)) {
    throw std::invalid_argument("horseshoe scales must be strictly positive");
  }
  if (!nu.allFinite() || nu.norm() == 0.0) {
    throw std::invalid_argument("horseshoe coefficient vector must be finite and nonzero");
  }
}

Eigen::VectorXd theta_of_nu(const Eigen::VectorXd& nu) {
  const double norm = nu.norm();
  if (nu.size() == 0 || !(norm > 0.0)) {
    throw std::invalid_argument("theta_of_nu: nu must be a nonzero vector");
  }
  return (nu(0) < 0.0 ? -1.0 : 1.0) / norm * nu;
}

void update_nu_ess(HorseshoeState& hs, const Eigen::VectorXd& t, const Eigen::MatrixXd& z,
                   double tau, Rng& rng, SliceStats* stats) {
  const Eigen::VectorXd sd = hs.prior_variances().cwiseSqrt();
  const Eigen::VectorXd aux = sd.cwiseProduct(rng.normal_vector(hs.q()));

  // Along nu(phi) = nu c + aux s every quantity the target needs is a
  // combination of the two projections below, so each angle costs O(n).
  const Eigen::VectorXd z_nu = z * hs.nu;
  const Eigen::VectorXd z_aux = z * aux;
  const double nn = hs.nu.squaredNorm();
  const double na = hs.nu.dot(aux);
  const double aa = aux.squaredNorm();
  const double inv_two_tau2 = 1.0 / (2.0 * tau * tau);

  auto loglik = [&](double c, double s) {
    const double norm2 = c * c * nn + 2.0 * c * s * na + s * s * aa;
    if (!(norm2 > 0.0)) return -HUGE_VAL;
    const double first = c * hs.nu(0) + s * aux(0);
    const double scale = (first < 0.0 ? -1.0 : 1.0) / std::sqrt(norm2);
    return -(t - scale * (c * z_nu + s * z_aux)).squaredNorm() * inv_two_tau2;
  };

  SliceStats local;
  const double phi = ellipse_slice_angle(loglik(1.0, 0.0), loglik, rng, stats ? *stats : local);
  hs.nu = std::cos(phi) * hs.nu + std::sin(phi) * aux;
}

void update_nu_ess_scores(HorseshoeState& hs, const Eigen::MatrixXd& z,
                          const std::function<double(const Eigen::VectorXd&)>& score_loglik,
                          Rng& rng, SliceStats* stats) {
  const Eigen::VectorXd sd = hs.prior_variances().cwiseSqrt();
  const Eigen::VectorXd aux = sd.cwiseProduct(rng.normal_vector(hs.q()));
  const Eigen::VectorXd z_nu = z * hs.nu;
  const Eigen::VectorXd z_aux = z * aux;
  const double nn = hs.nu.squaredNorm();
  const double na = hs.nu.dot(aux);
  const double aa = aux.squaredNorm();
  Eigen::VectorXd score(z.rows());

  auto loglik = [&](double c, double s) {
    const double norm2 = c * c * nn + 2.0 * c * s * na + s * s * aa;
    if (!(norm2 > 0.0)) return -HUGE_VAL;
    const double first = c * hs.nu(0) + s * aux(0);
    const double scale = (first < 0.0 ? -1.0 : 1.0) / std::sqrt(norm2);
    score = scale * (c * z_nu + s * z_aux);
    return score_loglik(score);
  };

  SliceStats local;
  const double phi = ellipse_slice_angle(loglik(1.0, 0.0), loglik, rng, stats ? *stats : local);
  hs.nu = std::cos(phi) * hs.nu + std::sin(phi) * aux;
}

void update_scales(HorseshoeState& hs, Rng& rng) {
  const Eigen::Index q = hs.q();
  for (Eigen::Index j = 0; j < q; ++j) {
    const double nu2 = hs.nu(j) * hs.nu(j);
    hs.lambda_loc2(j) = inverse_gamma(1.0, 1.0 / hs.xi_loc(j) + nu2 / (2.0 * hs.lambda_glob2), rng);
    hs.xi_loc(j) = inverse_gamma(1.0, 1.0 + 1.0 / hs.lambda_loc2(j), rng);
  }
  double quad = 0.0;
  for (Eigen::Index j = 0; j < q; ++j) quad += hs.nu(j) * hs.nu(j) / (2.0 * hs.lambda_loc2(j));
  hs.lambda_glob2 = inverse_gamma(0.5 * static_cast<double>(q + 1), 1.0 / hs.xi_glob + quad, rng);
  hs.xi_glob = inverse_gamma(1.0, 1.0 + 1.0 / hs.lambda_glob2, rng);
}

}  // namespace changeplane
