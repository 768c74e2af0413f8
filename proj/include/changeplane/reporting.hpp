#pragma once

// Decision-theoretic summary of a fitted chain: heterogeneity evidence, Bayes
// action, principal boundary direction with its stability diagnostic, and
// hard-membership probabilities.

#include "changeplane/model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace changeplane {

enum class ContrastKind { coordinate, vector, l2_norm };
enum class Action { a0, a1 };

std::string to_string(Action action);

struct DecisionConfig {
  double delta = 1.0;
  double cost_fp = 9.0;
  double cost_fn = 1.0;
  ContrastKind contrast = ContrastKind::coordinate;
  Eigen::Index coordinate = 0;        // used by ContrastKind::coordinate
  Eigen::VectorXd contrast_vector;    // used by ContrastKind::vector

  double p_report() const { return cost_fp / (cost_fp + cost_fn); }
  /// Throws ConfigError on non-positive delta or costs.
  void validate() const;
  /// Config whose threshold c_FP / (c_FP + c_FN) equals `p`.
  static DecisionConfig with_threshold(double delta, double p);
};

/// Delta(gamma) for one draw.
double effect_contrast(const Eigen::VectorXd& gamma, const DecisionConfig& cfg);

/// Fraction of draws with |Delta(gamma)| >= delta.
double prob_heterogeneity(const PosteriorDraws& draws, const DecisionConfig& cfg);

/// a1 iff prob > p_report; ties go to a0.
Action bayes_action(double prob, const DecisionConfig& cfg);

struct PrincipalDirection {
  Eigen::VectorXd theta_hat;
  double lambda_max = 0.0;
  Eigen::MatrixXd moment;  // M = mean of theta theta'
};

/// Mean of theta theta' over draws (rows of `theta`).
Eigen::MatrixXd direction_moment(const Eigen::MatrixXd& theta);

/// Leading eigenpair of M with theta_hat_1 >= 0. Symmetric eigensolver for
/// q <= 200, power iteration beyond. Requires at least two draws.
PrincipalDirection posterior_principal_direction(const PosteriorDraws& draws);
PrincipalDirection principal_direction_of(const Eigen::MatrixXd& theta);

/// Fraction of draws with z'theta >= 0.
double membership_probability(const PosteriorDraws& draws, const Eigen::VectorXd& z_row);
/// Mean of membership_probability over the rows of z.
double mean_membership(const PosteriorDraws& draws, const Eigen::MatrixXd& z);

/// Type-7 empirical quantile of a sample.
double empirical_quantile(std::vector<double> values, double prob);

struct IntervalSummary {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Mean and equal-tailed interval of each column of `samples`.
std::vector<IntervalSummary> column_summaries(const Eigen::MatrixXd& samples, double level = 0.95);

struct MembershipRow {
  Eigen::VectorXd z;
  double q = 0.0;
};

struct DecisionReport {
  double prob_h_delta = 0.0;
  double p_report = 0.0;
  double delta = 0.0;
  Action action = Action::a0;
  std::vector<IntervalSummary> gamma_summary;
  IntervalSummary contrast_summary;
  // Boundary summaries, present only under a1.
  std::optional<Eigen::VectorXd> theta_hat;
  std::optional<double> lambda_max;
  std::optional<double> q_bar;
  std::vector<MembershipRow> membership_table;
  std::string statement;
  std::vector<std::string> notes;  // caller-supplied caveats, e.g. W/X overlap
};

/// Assembles the report. `profiles` lists the z rows for the membership table;
/// when empty, the dataset's boundary rows are used.
DecisionReport build_report(const PosteriorDraws& draws, const Dataset& data,
                            const DecisionConfig& cfg,
                            const std::vector<Eigen::VectorXd>& profiles = {});

/// Reporting-only variant for stored draws without the original data.
DecisionReport build_report(const PosteriorDraws& draws, const Eigen::MatrixXd& z,
                            const DecisionConfig& cfg,
                            const std::vector<Eigen::VectorXd>& profiles = {});

}  // namespace changeplane
