#include "changeplane/reporting.hpp"

#include "changeplane/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace changeplane {

std::string to_string(Action action) { return action == Action::a1 ? "a1" : "a0"; }

void DecisionConfig::validate() const {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be positive");
  if (!(cost_fp > 0.0) || !(cost_fn > 0.0) || !std::isfinite(cost_fp) || !std::isfinite(cost_fn)) {
    throw ConfigError("cost_fp and cost_fn must be positive");
  }
  if (contrast == ContrastKind::coordinate && coordinate < 0) {
    throw ConfigError("contrast coordinate must be non-negative");
  }
  if (contrast == ContrastKind::vector && contrast_vector.size() == 0) {
    throw ConfigError("contrast vector is empty");
  }
}

DecisionConfig DecisionConfig::with_threshold(double delta, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("p_report must lie in (0, 1)");
  DecisionConfig cfg;
  cfg.delta = delta;
  cfg.cost_fp = p;
  cfg.cost_fn = 1.0 - p;
  return cfg;
}

double effect_contrast(const Eigen::VectorXd& gamma, const DecisionConfig& cfg) {
  switch (cfg.contrast) {
    case ContrastKind::coordinate:
      if (cfg.coordinate >= gamma.size()) {
        throw ConfigError("contrast coordinate " + std::to_string(cfg.coordinate) +
                          " is out of range for " + std::to_string(gamma.size()) + " effects");
      }
      return gamma(cfg.coordinate);
    case ContrastKind::vector:
      if (cfg.contrast_vector.size() != gamma.size()) {
        throw ConfigError("contrast vector length does not match the number of effects");
      }
      return cfg.contrast_vector.dot(gamma);
    case ContrastKind::l2_norm:
      return gamma.norm();
  }
  return 0.0;
}

double prob_heterogeneity(const PosteriorDraws& draws, const DecisionConfig& cfg) {
  const Eigen::Index n = draws.gamma.rows();
  if (n == 0) throw std::logic_error("prob_heterogeneity: no posterior draws");
  Eigen::Index hits = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (std::abs(effect_contrast(draws.gamma.row(k).transpose(), cfg)) >= cfg.delta) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

Action bayes_action(double prob, const DecisionConfig& cfg) {
  return prob > cfg.p_report() ? Action::a1 : Action::a0;
}

Eigen::MatrixXd direction_moment(const Eigen::MatrixXd& theta) {
  if (theta.rows() == 0) throw std::logic_error("direction_moment: no draws");
  return theta.transpose() * theta / static_cast<double>(theta.rows());
}

namespace {

PrincipalDirection power_iteration(const Eigen::MatrixXd& m) {
  const Eigen::Index q = m.rows();
  Eigen::VectorXd v = m.diagonal();
  Eigen::Index start;
  v.maxCoeff(&start);
  v = m.col(start);
  if (!(v.norm() > 0.0)) v = Eigen::VectorXd::Ones(q);
  v.normalize();
  double lambda = v.dot(m * v);
  double change = HUGE_VAL;
  for (int it = 0; it < 100000; ++it) {
    Eigen::VectorXd next = m * v;
    const double norm = next.norm();
    if (!(norm > 0.0)) break;
    next /= norm;
    change = std::min((next - v).norm(), (next + v).norm());
    v = next;
    lambda = v.dot(m * v);
    if (change < 1e-13) {
      PrincipalDirection out;
      out.theta_hat = v(0) < 0.0 ? Eigen::VectorXd(-v) : v;
      out.lambda_max = lambda;
      return out;
    }
  }
  std::ostringstream os;
  os << "power iteration did not converge (last step change " << change
     << ", Rayleigh quotient " << lambda << "); leading eigenvalue gap is too small";
  throw NumericalError(os.str());
}

}  // namespace

PrincipalDirection principal_direction_of(const Eigen::MatrixXd& theta) {
  if (theta.rows() < 2) throw std::logic_error("principal direction needs at least two draws");
  const Eigen::MatrixXd m = direction_moment(theta);
  PrincipalDirection out;
  if (m.rows() > 200) {
    out = power_iteration(m);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    if (eig.info() != Eigen::Success) throw NumericalError("eigen-decomposition of M failed");
    const Eigen::Index last = m.rows() - 1;
    out.lambda_max = eig.eigenvalues()(last);
    out.theta_hat = eig.eigenvectors().col(last);
    if (out.theta_hat(0) < 0.0) out.theta_hat = -out.theta_hat;
  }
  out.theta_hat.normalize();
  out.moment = m;
  return out;
}

PrincipalDirection posterior_principal_direction(const PosteriorDraws& draws) {
  return principal_direction_of(draws.theta);
}

double membership_probability(const PosteriorDraws& draws, const Eigen::VectorXd& z_row) {
  const Eigen::Index n = draws.theta.rows();
  if (n == 0) throw std::logic_error("membership_probability: no posterior draws");
  const Eigen::VectorXd scores = draws.theta * z_row;
  return static_cast<double>((scores.array() >= 0.0).count()) / static_cast<double>(n);
}

double mean_membership(const PosteriorDraws& draws, const Eigen::MatrixXd& z) {
  if (z.rows() == 0) throw std::logic_error("mean_membership: no rows");
  if (draws.theta.rows() == 0) throw std::logic_error("mean_membership: no posterior draws");
  const Eigen::MatrixXd scores = z * draws.theta.transpose();
  return static_cast<double>((scores.array() >= 0.0).count()) /
         static_cast<double>(scores.size());
}

double empirical_quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw std::logic_error("empirical_quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<IntervalSummary> column_summaries(const Eigen::MatrixXd& samples, double level) {
  std::vector<IntervalSummary> out;
  const double tail = 0.5 * (1.0 - level);
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    std::vector<double> col(samples.col(j).data(), samples.col(j).data() + samples.rows());
    IntervalSummary s;
    s.mean = samples.col(j).mean();
    s.lower = empirical_quantile(col, tail);
    s.upper = empirical_quantile(col, 1.0 - tail);
    out.push_back(s);
  }
  return out;
}

DecisionReport build_report(const PosteriorDraws& draws, const Eigen::MatrixXd& z,
                            const DecisionConfig& cfg,
                            const std::vector<Eigen::VectorXd>& profiles) {
  cfg.validate();
  DecisionReport rep;
  rep.delta = cfg.delta;
  rep.p_report = cfg.p_report();
  rep.prob_h_delta = prob_heterogeneity(draws, cfg);
  rep.action = bayes_action(rep.prob_h_delta, cfg);
  rep.gamma_summary = column_summaries(draws.gamma);

  Eigen::MatrixXd contrast(draws.gamma.rows(), 1);
  for (Eigen::Index k = 0; k < draws.gamma.rows(); ++k) {
    contrast(k, 0) = effect_contrast(draws.gamma.row(k).transpose(), cfg);
  }
  rep.contrast_summary = column_summaries(contrast).front();

  std::ostringstream os;
  if (rep.action == Action::a0) {
    os << "Posterior probability of an effect difference of at least " << cfg.delta << " is "
       << rep.prob_h_delta << ", not above the reporting threshold " << rep.p_report
       << ". Heterogeneity is not reported. The boundary direction is weakly identified "
          "when the effect difference is small, so its posterior is largely prior-driven and "
          "must not be read as a subgroup rule supported by the data.";
    rep.statement = os.str();
    return rep;
  }

  const PrincipalDirection pd = posterior_principal_direction(draws);
  rep.theta_hat = pd.theta_hat;
  rep.lambda_max = pd.lambda_max;
  if (z.rows() > 0) rep.q_bar = mean_membership(draws, z);
  if (!profiles.empty()) {
    for (const auto& p : profiles) rep.membership_table.push_back({p, membership_probability(draws, p)});
  } else {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const Eigen::VectorXd row = z.row(i).transpose();
      rep.membership_table.push_back({row, membership_probability(draws, row)});
    }
  }
  os << "Posterior probability of an effect difference of at least " << cfg.delta << " is "
     << rep.prob_h_delta << ", above the reporting threshold " << rep.p_report
     << ". Heterogeneity is reported with the subgroup rule z'theta_hat >= 0; boundary "
        "stability lambda_max = "
     << pd.lambda_max << ".";
  rep.statement = os.str();
  return rep;
}

DecisionReport build_report(const PosteriorDraws& draws, const Dataset& data,
                            const DecisionConfig& cfg,
                            const std::vector<Eigen::VectorXd>& profiles) {
  return build_report(draws, data.z, cfg, profiles);
}

}  // namespace changeplane
