#include "changeplane/theory.hpp"

#include "changeplane/error.hpp"
#include "changeplane/normal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace changeplane {

McEstimate theory_gate_error(const Eigen::VectorXd& theta, double tau,
                             const Eigen::MatrixXd& z_draws) {
  if (!(tau > 0.0)) throw std::invalid_argument("theory_gate_error: tau must be positive");
  if (z_draws.rows() < 2) throw std::invalid_argument("theory_gate_error: need at least two draws");
  const Eigen::VectorXd u = z_draws * theta;
  const Eigen::ArrayXd g = u.array().abs().unaryExpr([tau](double a) { return norm_cdf(-a / tau); });
  const double n = static_cast<double>(g.size());
  const double mean = g.mean();
  const double var = (g - mean).square().sum() / (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

McEstimate gaussian_score_gate_error(double tau, std::size_t mc_draws, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(mc_draws), 1);
  for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, 0) = rng.normal();
  return theory_gate_error(Eigen::VectorXd::Ones(1), tau, z);
}

RateFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_fit: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw std::invalid_argument("loglog_fit: values must be positive");
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  RateFit fit;
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

MarginSlope gaussian_margin_slope(const std::vector<double>& taus, std::size_t mc_draws,
                                  std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(mc_draws), 1);
  for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, 0) = rng.normal();
  MarginSlope out;
  out.taus = taus;
  std::vector<double> values;
  for (double tau : taus) {
    out.errors.push_back(theory_gate_error(Eigen::VectorXd::Ones(1), tau, z));
    values.push_back(out.errors.back().value);
  }
  out.fit = loglog_fit(taus, values);
  return out;
}

Quadrature gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: need at least one node");
  // Golub-Welsch: eigenpairs of the symmetric Jacobi matrix of the Hermite recurrence.
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) jac(k, k - 1) = jac(k - 1, k) = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jac);
  Quadrature qd;
  qd.nodes = eig.eigenvalues();
  qd.weights = std::sqrt(std::numbers::pi) * eig.eigenvectors().row(0).transpose().array().square();
  return qd;
}

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, double step, int budget, double x_tol,
                             double f_tol) {
  const Eigen::Index dim = start.size();
  NelderMeadResult res;
  res.x = start;
  res.value = f(start);
  res.evaluations = 1;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : HUGE_VAL;
  };

  double scale = step;
  while (res.evaluations < budget) {
    std::vector<Eigen::VectorXd> pts(dim + 1, res.x);
    std::vector<double> vals(dim + 1, res.value);
    for (Eigen::Index j = 0; j < dim; ++j) {
      pts[j + 1](j) += scale;
      vals[j + 1] = eval(pts[j + 1]);
    }
    bool converged = false;
    while (res.evaluations < budget) {
      std::vector<int> order(dim + 1);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
      const int best = order.front(), worst = order.back(), second = order[dim - 1];

      double size = 0.0;
      for (const auto& p : pts) size = std::max(size, (p - pts[best]).cwiseAbs().maxCoeff());
      if (size < x_tol && vals[worst] - vals[best] < f_tol) {
        converged = true;
        break;
      }

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
      for (int k : order) {
        if (k != worst) centroid += pts[k];
      }
      centroid /= static_cast<double>(dim);

      const Eigen::VectorXd refl = centroid + (centroid - pts[worst]);
      const double f_refl = eval(refl);
      if (f_refl < vals[best]) {
        const Eigen::VectorXd expd = centroid + 2.0 * (centroid - pts[worst]);
        const double f_exp = eval(expd);
        if (f_exp < f_refl) {
          pts[worst] = expd;
          vals[worst] = f_exp;
        } else {
          pts[worst] = refl;
          vals[worst] = f_refl;
        }
        continue;
      }
      if (f_refl < vals[second]) {
        pts[worst] = refl;
        vals[worst] = f_refl;
        continue;
      }
      const bool outside = f_refl < vals[worst];
      const Eigen::VectorXd contr = outside ? Eigen::VectorXd(centroid + 0.5 * (refl - centroid))
                                            : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
      const double f_con = eval(contr);
      if (f_con < (outside ? f_refl : vals[worst])) {
        pts[worst] = contr;
        vals[worst] = f_con;
        continue;
      }
      for (int k = 0; k <= dim; ++k) {
        if (k == best) continue;
        pts[k] = pts[best] + 0.5 * (pts[k] - pts[best]);
        vals[k] = eval(pts[k]);
      }
    }
    const int best = static_cast<int>(std::min_element(vals.begin(), vals.end()) - vals.begin());
    const double improvement = res.value - vals[best];
    if (vals[best] < res.value) {
      res.x = pts[best];
      res.value = vals[best];
    }
    if (converged && improvement < f_tol) {
      res.converged = true;
      break;
    }
    scale = std::max(scale * 0.5, 10.0 * x_tol);
  }
  return res;
}

ExpectedLogLik::ExpectedLogLik(const DgpSpec& spec, Eigen::Index rows, std::uint64_t seed,
                               int gh_nodes)
    : spec_(spec), gh_(gauss_hermite(gh_nodes)) {
  DgpSpec s = spec;
  s.n = rows;
  // Covariates come from the design; the outcome's noise is integrated out,
  // so only the conditional mean is kept.
  const DgpSample sample = generate_dgp(s, seed);
  w_ = sample.data.w;
  x_ = sample.data.x.col(0);
  const Eigen::VectorXd th0 = DgpSpec::theta0();
  mean_.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const bool member = w_.row(i).dot(th0.transpose()) > 0.0;
    mean_(i) = dgp_baseline(spec_, w_.row(i)) + spec_.gamma0 * x_(i) * (member ? 1.0 : 0.0);
  }
}

double ExpectedLogLik::operator()(const ModelParams& eta, double tau) const {
  constexpr double kSaturated = 8.5;
  const double s2 = eta.sigma2;
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * s2);
  const Eigen::VectorXd base = w_ * eta.beta;
  const Eigen::VectorXd score = w_ * eta.theta.head(5) / tau;
  const double shift_val = eta.gamma(0);
  const double sqrt2 = std::sqrt(2.0);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  double total = 0.0;
  for (Eigen::Index i = 0; i < w_.rows(); ++i) {
    const double shift = shift_val * x_(i);
    const double s = score(i);
    const double d0 = mean_(i) - base(i);
    if (shift == 0.0 || std::abs(s) > kSaturated) {
      // Single Gaussian component: E[(d + eps - c)^2] = (d - c)^2 + 1.
      const double c = (shift != 0.0 && s > kSaturated) ? shift : 0.0;
      total += log_norm - ((d0 - c) * (d0 - c) + 1.0) / (2.0 * s2);
      continue;
    }
    const double lg = log_norm_cdf(s), lgc = log_norm_cdf(-s);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < gh_.nodes.size(); ++k) {
      const double r = d0 + sqrt2 * gh_.nodes(k);
      acc += gh_.weights(k) * mixture_log_density(r, shift, s2, lg, lgc);
    }
    total += acc * inv_sqrt_pi;
  }
  return total / static_cast<double>(w_.rows());
}

PseudoTruePath pseudo_true_path(const DgpSpec& spec, const std::vector<double>& taus, int budget,
                                Eigen::Index rows, std::uint64_t seed) {
  if (spec.baseline != BaselineShape::linear) {
    throw ConfigError("pseudo_true_path needs a linear-baseline design with a known beta_0");
  }
  if (spec.noise_covariates) {
    throw ConfigError("pseudo_true_path supports designs without noise boundary covariates");
  }
  const ExpectedLogLik ell(spec, rows, seed);
  const Eigen::VectorXd th0 = DgpSpec::theta0();
  const Eigen::VectorXd b0 = DgpSpec::beta0();
  const double g0 = spec.gamma0;

  // Orthonormal basis of the complement of theta0.
  const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(5, 5) - th0 * th0.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(proj);
  const Eigen::MatrixXd basis = eig.eigenvectors().rightCols(4);

  auto decode = [&](const Eigen::VectorXd& v) {
    ModelParams eta;
    eta.beta = v.head(5);
    eta.gamma = v.segment(5, 1);
    Eigen::VectorXd th = th0 + basis * v.segment(6, 4);
    normalize_hemisphere(th);
    eta.theta = th;
    eta.sigma2 = std::exp(v(10));
    return eta;
  };
  Eigen::VectorXd start(11);
  start << b0, g0, Eigen::VectorXd::Zero(4), 0.0;

  PseudoTruePath path;
  std::vector<double> xs, ys;
  for (double tau : taus) {
    auto objective = [&](const Eigen::VectorXd& v) { return -ell(decode(v), tau); };
    const NelderMeadResult nm = nelder_mead(objective, start, 0.05, budget);
    PseudoTruePoint pt;
    pt.tau = tau;
    pt.eta = decode(nm.x);
    pt.objective = nm.value;
    pt.evaluations = nm.evaluations;
    pt.converged = nm.converged;
    const double dist2 = (pt.eta.beta - b0).squaredNorm() + std::pow(pt.eta.gamma(0) - g0, 2) +
                         (pt.eta.theta - th0).squaredNorm() + std::pow(pt.eta.sigma2 - 1.0, 2);
    pt.distance = std::sqrt(dist2);
    path.points.push_back(pt);
    xs.push_back(tau);
    ys.push_back(pt.distance);
  }
  if (taus.size() >= 2) path.rate = loglog_fit(xs, ys);
  return path;
}

Feasibility schedule_feasibility(double alpha, double rho) {
  if (!(alpha >= 1.0)) throw std::invalid_argument("schedule_feasibility: alpha must be >= 1");
  if (!(rho > 0.0)) throw std::invalid_argument("schedule_feasibility: rho must be positive");
  Feasibility f;
  f.tv_bvm_ok = rho < 0.125;
  f.shift_removed = rho > 1.0 / (2.0 * alpha);
  f.both = f.tv_bvm_ok && f.shift_removed;
  return f;
}

}  // namespace changeplane
