#pragma once

// Simulation designs 1-5, replicate studies and their evaluation metrics.

#include "changeplane/model.hpp"
#include "changeplane/reporting.hpp"
#include "changeplane/samplers.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace changeplane {

enum class BaselineShape { linear, nonlinear };

struct DgpSpec {
  int id = 1;
  Eigen::Index n = 500;
  bool noise_covariates = false;  // append 50 N(0,1) boundary columns
  Eigen::Index n_noise = 50;
  double gamma0 = 2.0;
  BaselineShape baseline = BaselineShape::linear;

  /// Canonical design for id in 1..5 with sample size n.
  static DgpSpec make(int id, Eigen::Index n = 500);

  static Eigen::VectorXd theta_star();  // unnormalized generating direction
  static Eigen::VectorXd theta0();      // theta_star / ||theta_star||
  static Eigen::VectorXd beta0();
  Eigen::Index q() const { return 5 + (noise_covariates ? n_noise : 0); }
  /// theta0 padded with zeros on the noise coordinates.
  Eigen::VectorXd theta_true() const;
};

/// Baseline mean mu_0(w) for a 5-column row with leading intercept.
double dgp_baseline(const DgpSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& w_row);

struct DgpTruth {
  Eigen::VectorXd gamma;
  Eigen::VectorXd theta;  // length q, zeros on noise coordinates
  Eigen::VectorXd beta;   // empty under the nonlinear baseline
  std::string baseline_label;
  double subgroup_fraction = 0.0;  // sample fraction with w'theta0 > 0
};

struct DgpSample {
  Dataset data;
  DgpTruth truth;
};

/// Draws one dataset. Generation uses the strict rule w'theta0 > 0.
DgpSample generate_dgp(const DgpSpec& spec, std::uint64_t seed);

/// Boundary covariate law of the designs: intercept then N(0,1) coordinates.
Eigen::MatrixXd draw_boundary_covariates(Eigen::Index rows, Eigen::Index q, Rng& rng);

/// arccos of the clipped inner product, in radians.
double angular_error(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta0);

/// Monte Carlo P{1(z'theta_hat >= 0) != 1(z'theta0 >= 0)} under the design's z law.
double misclassification(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta0,
                         std::size_t mc_draws, std::uint64_t seed);

struct ReplicateResult {
  int replicate = 0;
  bool ok = false;
  std::string error;
  Eigen::VectorXd gamma_mean, gamma_lower, gamma_upper;
  Eigen::VectorXd theta_mean, theta_lower, theta_upper;
  Eigen::VectorXd theta_hat;
  double angle = 0.0;
  double misclass = 0.0;
  double lambda_max = 0.0;
  double prob_h = 0.0;
  Action action = Action::a0;
};

struct MetricRow {
  std::string parameter;
  std::string metric;
  double value = 0.0;
};

struct StudyConfig {
  DgpSpec dgp;
  SamplerConfig sampler;
  DecisionConfig decision;
  std::string method = "parametric";
  int n_replicates = 100;
  std::uint64_t seed = 1;
  std::size_t misclass_draws = 20000;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct SimResult {
  std::vector<ReplicateResult> replicates;
  std::vector<MetricRow> metrics;
  int failures = 0;
  double metric(const std::string& parameter, const std::string& metric) const;
};

/// Seeds of replicate r: data seed derive_seed(seed, 2r), chain seed derive_seed(seed, 2r + 1).
std::uint64_t replicate_data_seed(std::uint64_t seed, int replicate);
std::uint64_t replicate_chain_seed(std::uint64_t seed, int replicate);

ReplicateResult run_replicate(const StudyConfig& cfg, int replicate);

/// Runs every replicate (in parallel) and aggregates. Failed replicates are
/// counted and excluded from the aggregates.
SimResult run_study(const StudyConfig& cfg,
                    const std::function<void(int done, int total)>& progress = {});

/// Aggregates bias, RMSE, AIL, CP (with Wald SE) per parameter plus the
/// directional and decision metrics.
std::vector<MetricRow> aggregate(const std::vector<ReplicateResult>& reps, const DgpTruth& truth,
                                 Eigen::Index active_q);

/// Long-format CSV: dgp,method,parameter,metric,value.
void write_study_csv(std::ostream& os, const StudyConfig& cfg, const SimResult& result,
                     bool header = true);
/// Fixed-width summary table, one row per parameter.
void write_study_summary(std::ostream& os, const StudyConfig& cfg, const SimResult& result);

struct TauRow {
  double tau = 0.0;
  double gray_zone_width = 0.0;
  DecisionReport report;
};

/// Fits the chain at each tau and reports the decision at each.
std::vector<TauRow> tau_sensitivity(const Dataset& data, const SamplerConfig& base,
                                    const std::vector<double>& grid,
                                    const DecisionConfig& decision);

}  // namespace changeplane
