#pragma once

// Data-augmentation Gibbs sampler for the probit-gated working model.
// One sweep updates, in order: D, T, the baseline (beta or the tree
// ensemble), gamma, sigma2 and finally the boundary direction theta.

#include "changeplane/horseshoe.hpp"
#include "changeplane/model.hpp"
#include "changeplane/random.hpp"
#include "changeplane/slice.hpp"
#include "changeplane/trees.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace changeplane {

enum class BaselineKind { parametric, trees };
enum class ThetaPrior { uniform_hemisphere, horseshoe };

std::string to_string(BaselineKind kind);
std::string to_string(ThetaPrior prior);
BaselineKind parse_baseline(const std::string& text);
ThetaPrior parse_theta_prior(const std::string& text);

struct SamplerConfig {
  std::size_t n_iter = 30000;
  std::size_t n_burn = 10000;
  std::size_t thin = 1;
  double tau = 0.035;
  std::uint64_t seed = 1;
  double prior_beta_var = 100.0;
  Eigen::VectorXd prior_gamma_mean;  // empty means the zero vector
  double prior_gamma_var = 100.0;
  double sigma_a = 2.0;
  double sigma_b = 1.0;
  ThetaPrior theta_prior = ThetaPrior::uniform_hemisphere;
  BaselineKind baseline = BaselineKind::parametric;
  TreeConfig trees;
  /// Follow the latent-score direction update with a slice update on the
  /// likelihood with (D, T) integrated out. Same stationary law, much faster
  /// mixing of theta at small tau.
  bool collapsed_theta_step = true;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
  Eigen::VectorXd gamma_mean(Eigen::Index r) const;
};

/// Welford accumulator, one slot per coordinate.
class RunningMoments {
 public:
  void add(const Eigen::VectorXd& x);
  std::size_t count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  /// Sample variance (divisor count - 1); zeros until two values are seen.
  Eigen::VectorXd variance() const;

 private:
  std::size_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

struct GibbsDiagnostics {
  RunningMoments beta;
  RunningMoments gamma;
  RunningMoments theta;
  RunningMoments sigma2;
  std::vector<int> slice_rejections;  // per sweep
  int slice_cap_hits = 0;
  int non_shrinking_brackets = 0;
  /// Every slice update returned a fresh state without hitting the retry cap.
  bool always_accepted() const { return slice_cap_hits == 0; }
};

struct ChainState {
  ParamState params;
  Eigen::VectorXd baseline;  // current mu(W_i): W beta or the tree fit
  std::optional<HorseshoeState> horseshoe;
  std::optional<TreeEnsemble> trees;
};

/// Posterior probability that D_i = 1 given the rest, in log space.
/// `resid0` = y - mu, `shift` = x'gamma, `score` = z'theta / tau.
double gate_posterior_probability(double resid0, double shift, double sigma2, double score);

/// Conjugate inverse-gamma parameters of sigma2 given the residual sum of squares.
struct InverseGammaParams {
  double shape;
  double scale;
};
InverseGammaParams sigma2_posterior(const SamplerConfig& cfg, Eigen::Index n, double rss);

/// Draw of the initial chain state from the priors.
ChainState initial_state(const Dataset& data, const SamplerConfig& cfg, Rng& rng);

void update_d(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng);
void update_t(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng);
void update_beta(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng);
void update_trees(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng);
void update_gamma(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng);
void update_sigma2(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng);
void update_theta(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng,
                  SliceStats* stats = nullptr);

/// Great-circle slice update of a hemisphere direction against
/// -(2 tau^2)^{-1} sum_i (t_i - z_i'theta)^2 under the uniform prior.
Eigen::VectorXd update_theta_ess(const Eigen::VectorXd& theta, const Eigen::VectorXd& t,
                                 const Eigen::MatrixXd& z, double tau, Rng& rng,
                                 SliceStats* stats = nullptr);

/// Great-circle slice update of a hemisphere direction against the working
/// mixture likelihood with the gate integrated out:
///   sum_i log[(1 - Phi(z_i'theta / tau)) exp(l0_i) + Phi(z_i'theta / tau) exp(l1_i)],
/// where l0_i, l1_i are the component log densities of row i.
Eigen::VectorXd update_theta_marginal(const Eigen::VectorXd& theta, const Eigen::MatrixXd& z,
                                      const Eigen::VectorXd& l0, const Eigen::VectorXd& l1,
                                      double tau, Rng& rng, SliceStats* stats = nullptr);

/// Collapsed direction step for the chain (uniform or horseshoe prior). Leaves
/// (D, T) stale; the next sweep redraws them from their conditional first.
void update_theta_collapsed(ChainState& state, const Dataset& data, const SamplerConfig& cfg,
                            Rng& rng, SliceStats* stats = nullptr);

/// One full sweep in the fixed order D, T, baseline, gamma, sigma2, theta,
/// plus the collapsed direction step when enabled.
void gibbs_sweep(ChainState& state, const Dataset& data, const SamplerConfig& cfg, Rng& rng,
                 SliceStats* stats = nullptr);

/// Runs a full chain seeded from cfg.seed. Errors raised inside a sweep are
/// rethrown as NumericalError carrying the iteration index.
PosteriorDraws run_gibbs(const Dataset& data, const SamplerConfig& cfg,
                         GibbsDiagnostics* diagnostics = nullptr);

}  // namespace changeplane
