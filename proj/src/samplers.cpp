#include "changeplane/samplers.hpp"

#include "changeplane/error.hpp"
#include "changeplane/normal.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace changeplane {

std::string to_string(BaselineKind kind) {
  return kind == BaselineKind::parametric ? "parametric" : "trees";
}

std::string to_string(ThetaPrior prior) {
  return prior == ThetaPrior::uniform_hemisphere ? "uniform_hemisphere" : "horseshoe";
}

BaselineKind parse_baseline(const std::string& text) {
  if (text == "parametric" || text == "linear") return BaselineKind::parametric;
  if (text == "trees" || text == "bart") return BaselineKind::trees;
  throw ConfigError("unknown baseline '" + text + "' (expected parametric or trees)");
}

ThetaPrior parse_theta_prior(const std::string& text) {
  if (text == "uniform_hemisphere" || text == "uniform-hemisphere" || text == "uniform") {
    return ThetaPrior::uniform_hemisphere;
  }
  if (text == "horseshoe") return ThetaPrior::horseshoe;
  throw ConfigError("unknown theta_prior '" + text + "' (expected uniform_hemisphere or horseshoe)");
}

void SamplerConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string(name) + " must be positive and finite");
    }
  };
  if (n_iter == 0) throw ConfigError("n_iter must be at least 1");
  if (n_burn >= n_iter) throw ConfigError("n_burn must be smaller than n_iter");
  if (thin < 1) throw ConfigError("thin must be at least 1");
  positive(tau, "tau");
  positive(prior_beta_var, "prior_beta_var");
  positive(prior_gamma_var, "prior_gamma_var");
  positive(sigma_a, "sigma_a");
  positive(sigma_b, "sigma_b");
  if (!prior_gamma_mean.allFinite()) throw ConfigError("prior_gamma_mean must be finite");
  if (baseline == BaselineKind::trees) {
    if (trees.num_trees < 1) throw ConfigError("trees.num_trees must be at least 1");
    if (!(trees.alpha > 0.0 && trees.alpha < 1.0)) throw ConfigError("trees.alpha must lie in (0, 1)");
    if (!(trees.beta >= 0.0)) throw ConfigError("trees.beta must be non-negative");
    positive(trees.k, "trees.k");
    positive(trees.c, "trees.c");
  }
}

Eigen::VectorXd SamplerConfig::gamma_mean(Eigen::Index r) const {
  if (prior_gamma_mean.size() == 0) return Eigen::VectorXd::Zero(r);
  if (prior_gamma_mean.size() != r) {
    throw ConfigError("prior_gamma_mean has length " + std::to_string(prior_gamma_mean.size()) +
                      " but the data have " + std::to_string(r) + " effect columns");
  }
  return prior_gamma_mean;
}

void RunningMoments::add(const Eigen::VectorXd& x) {
  if (count_ == 0) {
    mean_ = Eigen::VectorXd::Zero(x.size());
    m2_ = Eigen::VectorXd::Zero(x.size());
  }
  ++count_;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta.cwiseProduct(x - mean_);
}

Eigen::VectorXd RunningMoments::variance() const {
  if (count_ < 2) return Eigen::VectorXd::Zero(mean_.size());
  return m2_ / static_cast<double>(count_ - 1);
}

namespace {

// Gaussian draw from N(P^{-1} b, P^{-1}); a failed factorization reports the
// condition number of P.
Eigen::VectorXd draw_conjugate(const Eigen::MatrixXd& precision, const Eigen::VectorXd& b,
                               const char* what, Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(precision, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    std::ostringstream os;
    os << what << ": posterior precision is not positive definite (eigenvalue range ["
       << ev.minCoeff() << ", " << ev.maxCoeff() << "], condition number "
       << (ev.minCoeff() > 0.0 ? ev.maxCoeff() / ev.minCoeff() : HUGE_VAL) << ")";
    throw NumericalError(os.str());
  }
  const Eigen::VectorXd mean = llt.solve(b);
  if (!mean.allFinite()) throw NumericalError(std::string(what) + ": non-finite posterior mean");
  return gaussian_from_precision(llt, mean, rng);
}

// x_i'gamma for every row.
Eigen::VectorXd effect_shift(const ChainState& state, const Dataset& data) {
  return data.x * state.params.eta.gamma;
}

Eigen::VectorXd gate_vector(const ChainState& state) {
  const auto& d = state.params.d;
  Eigen::VectorXd g(static_cast<Eigen::Index>(d.size()));
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = d[i] ? 1.0 : 0.0;
  return g;
}

double tree_scale(const Eigen::VectorXd& y) {
  if (y.size() < 2) return 1.0;
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().sum() / static_cast<double>(y.size() - 1));
  return sd > 0.0 ? sd : 1.0;
}

}  // namespace

double gate_posterior_probability(double resid0, double shift, double sigma2, double score) {
  const double l1 = log_norm_cdf(score) + log_normal_density(resid0, shift, sigma2);
  const double l0 = log_norm_cdf(-score) + log_normal_density(resid0, 0.0, sigma2);
  // Logistic of the log-odds; both branches avoid overflow.
  const double lo = l1 - l0;
  if (lo >= 0.0) return 1.0 / (1.0 + std::exp(-lo));
  const double e = std::exp(lo);
  return e / (1.0 + e);
}

InverseGammaParams sigma2_posterior(const SamplerConfig& cfg, Eigen::Index n, double rss) {
  return {cfg.sigma_a + 0.5 * static_cast<double>(n), cfg.sigma_b + 0.5 * rss};
}

ChainState initial_state(const Dataset& data, const SamplerConfig& cfg, Rng& rng) {
  const Eigen::Index n = data.n();
  ChainState state;
  ModelParams& eta = state.params.eta;
  eta.gamma = cfg.gamma_mean(data.r()) + std::sqrt(cfg.prior_gamma_var) * rng.normal_vector(data.r());
  eta.sigma2 = inverse_gamma(cfg.sigma_a, cfg.sigma_b, rng);

  if (cfg.theta_prior == ThetaPrior::horseshoe) {
    state.horseshoe = HorseshoeState::initial(data.q(), rng);
    eta.theta = theta_of_nu(state.horseshoe->nu);
  } else {
    eta.theta = uniform_hemisphere(data.q(), rng);
  }

  if (cfg.baseline == BaselineKind::trees) {
    eta.beta = Eigen::VectorXd(0);
    state.trees.emplace(data.w, cfg.trees, data.y.mean(), tree_scale(data.y));
    state.baseline = state.trees->fitted();
  } else {
    eta.beta = std::sqrt(cfg.prior_beta_var) * rng.normal_vector(data.p());
    state.baseline = data.w * eta.beta;
  }

  const Eigen::VectorXd score = data.z * eta.theta;
  state.params.t.resize(n);
  state.params.d.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = rng.normal(score(i), cfg.tau);
    state.params.t(i) = t;
    state.params.d[i] = t >= 0.0 ? 1 : 0;
  }
  return state;
}

void update_d(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng) {
  const ModelParams& eta = state.params.eta;
  const Eigen::VectorXd shift = effect_shift(state, data);
  const Eigen::VectorXd score = data.z * eta.theta / cfg.tau;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double p = gate_posterior_probability(data.y(i) - state.baseline(i), shift(i),
                                                eta.sigma2, score(i));
    state.params.d[i] = rng.uniform() < p ? 1 : 0;
  }
}

void update_t(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng) {
  const Eigen::VectorXd score = data.z * state.params.eta.theta;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    state.params.t(i) = state.params.d[i]
                            ? truncated_normal_above(score(i), cfg.tau, 0.0, rng)
                            : truncated_normal_below(score(i), cfg.tau, 0.0, rng);
  }
}

void update_beta(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng) {
  if (cfg.baseline != BaselineKind::parametric) {
    throw std::logic_error("update_beta called under a tree baseline");
  }
  ModelParams& eta = state.params.eta;
  const Eigen::VectorXd y_res =
      data.y - effect_shift(state, data).cwiseProduct(gate_vector(state));
  const double inv_s2 = 1.0 / eta.sigma2;
  Eigen::MatrixXd precision = inv_s2 * data.w.transpose() * data.w;
  precision.diagonal().array() += 1.0 / cfg.prior_beta_var;
  const Eigen::VectorXd b = inv_s2 * data.w.transpose() * y_res;
  eta.beta = draw_conjugate(precision, b, "update_beta", rng);
  state.baseline = data.w * eta.beta;
}

void update_trees(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng) {
  (void)cfg;
  if (!state.trees) throw std::logic_error("update_trees called without a tree ensemble");
  const Eigen::VectorXd y_dagger =
      data.y - effect_shift(state, data).cwiseProduct(gate_vector(state));
  state.trees->backfit_sweep(y_dagger, data.w, state.params.eta.sigma2, rng);
  state.baseline = state.trees->fitted();
}

void update_gamma(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng) {
  ModelParams& eta = state.params.eta;
  const Eigen::Index r = data.r();
  const Eigen::VectorXd resid = data.y - state.baseline;
  const double inv_s2 = 1.0 / eta.sigma2;
  Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(r, r);
  Eigen::VectorXd b = cfg.gamma_mean(r) / cfg.prior_gamma_var;
  Eigen::VectorXd xtr = Eigen::VectorXd::Zero(r);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (!state.params.d[i]) continue;
    precision.noalias() += data.x.row(i).transpose() * data.x.row(i);
    xtr += data.x.row(i).transpose() * resid(i);
  }
  precision *= inv_s2;
  precision.diagonal().array() += 1.0 / cfg.prior_gamma_var;
  b += inv_s2 * xtr;
  eta.gamma = draw_conjugate(precision, b, "update_gamma", rng);
}

void update_sigma2(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng) {
  const Eigen::VectorXd resid =
      data.y - state.baseline - effect_shift(state, data).cwiseProduct(gate_vector(state));
  const InverseGammaParams ig = sigma2_posterior(cfg, data.n(), resid.squaredNorm());
  state.params.eta.sigma2 = inverse_gamma(ig.shape, ig.scale, rng);
  if (!std::isfinite(state.params.eta.sigma2) || !(state.params.eta.sigma2 > 0.0)) {
    throw NumericalError("update_sigma2: draw is not a positive finite number");
  }
}

Eigen::VectorXd update_theta_ess(const Eigen::VectorXd& theta, const Eigen::VectorXd& t,
                                 const Eigen::MatrixXd& z, double tau, Rng& rng,
                                 SliceStats* stats) {
  const Eigen::Index q = theta.size();
  Eigen::VectorXd u;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 100) throw NumericalError("update_theta_ess: degenerate tangent direction");
    u = rng.normal_vector(q);
    u -= u.dot(theta) * theta;
    const double norm = u.norm();
    if (norm > 0.0) {
      u /= norm;
      break;
    }
  }

  // Each angle costs O(n): the score along the circle is a combination of
  // the two fixed projections.
  const Eigen::VectorXd a = z * theta;
  const Eigen::VectorXd b = z * u;
  const double inv_two_tau2 = 1.0 / (2.0 * tau * tau);
  auto loglik = [&](double c, double s) {
    return -(t - c * a - s * b).squaredNorm() * inv_two_tau2;
  };

  SliceStats local;
  const double phi =
      hemisphere_slice_angle(theta(0), u(0), loglik(1.0, 0.0), loglik, rng, stats ? *stats : local);
  Eigen::VectorXd next = std::cos(phi) * theta + std::sin(phi) * u;
  // The accepted angle satisfies the hemisphere constraint; only rounding can
  // push the first coordinate below zero.
  if (next(0) < 0.0) next(0) = 0.0;
  next /= next.norm();
  return next;
}

Eigen::VectorXd update_theta_marginal(const Eigen::VectorXd& theta, const Eigen::MatrixXd& z,
                                      const Eigen::VectorXd& l0, const Eigen::VectorXd& l1,
                                      double tau, Rng& rng, SliceStats* stats) {
  const Eigen::Index q = theta.size();
  Eigen::VectorXd u;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 100) throw NumericalError("update_theta_marginal: degenerate tangent direction");
    u = rng.normal_vector(q);
    u -= u.dot(theta) * theta;
    const double norm = u.norm();
    if (norm > 0.0) {
      u /= norm;
      break;
    }
  }
  const Eigen::VectorXd a = z * theta / tau;
  const Eigen::VectorXd b = z * u / tau;
  auto loglik = [&](double c, double s) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double sc = c * a(i) + s * b(i);
      total += log_sum_exp(log_norm_cdf(-sc) + l0(i), log_norm_cdf(sc) + l1(i));
    }
    return total;
  };
  SliceStats local;
  const double phi =
      hemisphere_slice_angle(theta(0), u(0), loglik(1.0, 0.0), loglik, rng, stats ? *stats : local);
  Eigen::VectorXd next = std::cos(phi) * theta + std::sin(phi) * u;
  if (next(0) < 0.0) next(0) = 0.0;
  next /= next.norm();
  return next;
}

void update_theta_collapsed(ChainState& state, const Dataset& data, const SamplerConfig& cfg,
                            Rng& rng, SliceStats* stats) {
  ModelParams& eta = state.params.eta;
  const Eigen::VectorXd shift = effect_shift(state, data);
  // Rows with zero shift have identical components and carry no information
  // about theta; only the remaining rows enter the target.
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (shift(i) != 0.0) rows.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  if (m == 0) return;
  Eigen::MatrixXd z(m, data.q());
  Eigen::VectorXd l0(m), l1(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = rows[static_cast<std::size_t>(k)];
    const double r = data.y(i) - state.baseline(i);
    z.row(k) = data.z.row(i);
    l0(k) = log_normal_density(r, 0.0, eta.sigma2);
    l1(k) = log_normal_density(r, shift(i), eta.sigma2);
  }
  if (cfg.theta_prior == ThetaPrior::horseshoe) {
    if (!state.horseshoe) state.horseshoe = HorseshoeState::initial(data.q(), rng);
    const double inv_tau = 1.0 / cfg.tau;
    auto score_loglik = [&](const Eigen::VectorXd& score) {
      double total = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) {
        const double sc = score(k) * inv_tau;
        total += log_sum_exp(log_norm_cdf(-sc) + l0(k), log_norm_cdf(sc) + l1(k));
      }
      return total;
    };
    update_nu_ess_scores(*state.horseshoe, z, score_loglik, rng, stats);
    eta.theta = theta_of_nu(state.horseshoe->nu);
  } else {
    eta.theta = update_theta_marginal(eta.theta, z, l0, l1, cfg.tau, rng, stats);
  }
}

void update_theta(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng,
                  SliceStats* stats) {
  ModelParams& eta = state.params.eta;
  if (cfg.theta_prior == ThetaPrior::horseshoe) {
    if (!state.horseshoe) state.horseshoe = HorseshoeState::initial(data.q(), rng);
    update_nu_ess(*state.horseshoe, state.params.t, data.z, cfg.tau, rng, stats);
    update_scales(*state.horseshoe, rng);
    eta.theta = theta_of_nu(state.horseshoe->nu);
  } else {
    eta.theta = update_theta_ess(eta.theta, state.params.t, data.z, cfg.tau, rng, stats);
  }
}

void gibbs_sweep(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng,
                 SliceStats* stats) {
  update_d(state, data, cfg, rng);
  update_t(state, data, cfg, rng);
  if (cfg.baseline == BaselineKind::trees) {
    update_trees(state, data, cfg, rng);
  } else {
    update_beta(state, data, cfg, rng);
  }
  update_gamma(state, data, cfg, rng);
  update_sigma2(state, data, cfg, rng);
  update_theta(state, data, cfg, rng, stats);
  if (cfg.collapsed_theta_step) update_theta_collapsed(state, data, cfg, rng, stats);
}

PosteriorDraws run_gibbs(const Dataset& data, const SamplerConfig& cfg,
                         GibbsDiagnostics* diagnostics) {
  cfg.validate();
  data.validate();
  (void)cfg.gamma_mean(data.r());

  Rng rng(cfg.seed);
  ChainState state = initial_state(data, cfg, rng);

  const std::size_t kept = PosteriorDraws::expected_kept(cfg.n_iter, cfg.n_burn, cfg.thin);
  PosteriorDraws draws;
  draws.beta.resize(static_cast<Eigen::Index>(kept), state.params.eta.beta.size());
  draws.gamma.resize(static_cast<Eigen::Index>(kept), data.r());
  draws.theta.resize(static_cast<Eigen::Index>(kept), data.q());
  draws.sigma2.resize(static_cast<Eigen::Index>(kept));
  draws.n_iter = cfg.n_iter;
  draws.n_burn = cfg.n_burn;
  draws.thin = cfg.thin;
  draws.tau = cfg.tau;
  if (diagnostics) diagnostics->slice_rejections.reserve(cfg.n_iter);

  Eigen::Index slot = 0;
  for (std::size_t iter = 0; iter < cfg.n_iter; ++iter) {
    SliceStats stats;
    try {
      gibbs_sweep(state, data, cfg, rng, &stats);
    } catch (const std::exception& e) {
      throw NumericalError("iteration " + std::to_string(iter) + ": " + e.what());
    }
    const ModelParams& eta = state.params.eta;
    if (diagnostics) {
      diagnostics->slice_rejections.push_back(stats.rejections);
      if (stats.cap_hit) ++diagnostics->slice_cap_hits;
      diagnostics->non_shrinking_brackets += stats.non_shrinking;
    }
    if (iter < cfg.n_burn || (iter - cfg.n_burn + 1) % cfg.thin != 0) continue;
    if (slot >= static_cast<Eigen::Index>(kept)) continue;
    draws.beta.row(slot) = eta.beta.transpose();
    draws.gamma.row(slot) = eta.gamma.transpose();
    draws.theta.row(slot) = eta.theta.transpose();
    draws.sigma2(slot) = eta.sigma2;
    ++slot;
    if (diagnostics) {
      diagnostics->beta.add(eta.beta);
      diagnostics->gamma.add(eta.gamma);
      diagnostics->theta.add(eta.theta);
      diagnostics->sigma2.add(Eigen::VectorXd::Constant(1, eta.sigma2));
    }
  }
  return draws;
}

}  // namespace changeplane
