#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "changeplane/error.hpp"
#include "changeplane/normal.hpp"
#include "changeplane/samplers.hpp"

#include <cmath>
#include <numbers>
#include <vector>

using namespace changeplane;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double npdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

Dataset toy_data(int n, int p, int r, int q, Rng& rng) {
  Dataset d;
  d.y = rng.normal_vector(n);
  d.w = MatrixXd::Ones(n, p);
  d.x = MatrixXd::Ones(n, r);
  d.z = MatrixXd::Ones(n, q);
  for (int i = 0; i < n; ++i) {
    for (int j = 1; j < p; ++j) d.w(i, j) = rng.normal();
    for (int j = 1; j < r; ++j) d.x(i, j) = rng.normal();
    for (int j = 1; j < q; ++j) d.z(i, j) = rng.normal();
  }
  return d;
}

ChainState frozen_state(const Dataset& data, const VectorXd& beta, const VectorXd& gamma,
                        const VectorXd& theta, double sigma2, std::vector<unsigned char> d) {
  ChainState s;
  s.params.eta.beta = beta;
  s.params.eta.gamma = gamma;
  s.params.eta.theta = theta;
  s.params.eta.sigma2 = sigma2;
  s.params.d = std::move(d);
  s.params.t = VectorXd::Zero(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) s.params.t(i) = s.params.d[i] ? 0.1 : -0.1;
  s.baseline = data.w * beta;
  return s;
}

VectorXd angle_to_theta(double phi) {
  VectorXd th(2);
  th << std::cos(phi), std::sin(phi);
  return th;
}

// Histogram of hemisphere angles in (-pi/2, pi/2] on `bins` cells.
std::vector<double> angle_histogram(const std::vector<double>& angles, int bins) {
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  for (double a : angles) {
    int b = static_cast<int>((a + std::numbers::pi / 2) / std::numbers::pi * bins);
    b = std::clamp(b, 0, bins - 1);
    h[static_cast<std::size_t>(b)] += 1.0;
  }
  for (double& v : h) v /= static_cast<double>(angles.size());
  return h;
}

// Grid posterior of the angle, aggregated onto the same bins.
std::vector<double> grid_histogram(auto&& log_target, int grid, int bins) {
  std::vector<double> lp(static_cast<std::size_t>(grid));
  double mx = -HUGE_VAL;
  for (int k = 0; k < grid; ++k) {
    const double phi = -std::numbers::pi / 2 + std::numbers::pi * (k + 0.5) / grid;
    lp[static_cast<std::size_t>(k)] = log_target(angle_to_theta(phi));
    mx = std::max(mx, lp[static_cast<std::size_t>(k)]);
  }
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  double total = 0.0;
  for (int k = 0; k < grid; ++k) {
    const double w = std::exp(lp[static_cast<std::size_t>(k)] - mx);
    h[static_cast<std::size_t>(k * bins / grid)] += w;
    total += w;
  }
  for (double& v : h) v /= total;
  return h;
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return 0.5 * s;
}

}  // namespace

TEST_CASE("SamplerConfig validation") {
  SamplerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_burn = cfg.n_iter;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SamplerConfig{};
  cfg.thin = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SamplerConfig{};
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(parse_baseline("forest"), ConfigError);
  CHECK(parse_theta_prior("horseshoe") == ThetaPrior::horseshoe);
  CHECK(SamplerConfig{}.gamma_mean(2) == VectorXd::Zero(2));
}

TEST_CASE("gate posterior probability") {
  SUBCASE("gamma = 0 gives the prior gate") {
    for (double s : {-3.0, -0.2, 0.0, 1.7}) {
      CHECK(gate_posterior_probability(0.4, 0.0, 1.3, s) == doctest::Approx(norm_cdf(s)).epsilon(1e-14));
    }
  }
  SUBCASE("pi = 0.5 with equal residuals") {
    CHECK(gate_posterior_probability(0.5, 1.0, 1.0, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("direct evaluation") {
    // y = 1, mu = 0, shift = 1, sigma2 = 1, pi = 0.3.
    const double s = norm_quantile(0.3);
    const double expect = 0.3 * npdf(0.0) / (0.7 * npdf(1.0) + 0.3 * npdf(0.0));
    CHECK(gate_posterior_probability(1.0, 1.0, 1.0, s) == doctest::Approx(expect).epsilon(1e-13));
  }
  SUBCASE("both components underflow") {
    const double p = gate_posterior_probability(1e4, 1.0, 1e-3, 0.0);
    CHECK(p == doctest::Approx(1.0));
    const double p2 = gate_posterior_probability(-1e4, 1.0, 1e-3, 0.0);
    CHECK(p2 >= 0.0);
    CHECK(p2 < 1e-300);
  }
}

TEST_CASE("update_d empirical frequency matches the conditional") {
  Rng rng(1);
  Dataset data = toy_data(1, 1, 1, 1, rng);
  data.y(0) = 1.0;
  SamplerConfig cfg;
  cfg.tau = 1.0;
  const double th_score = norm_quantile(0.3);
  data.z(0, 0) = th_score;
  ChainState s = frozen_state(data, VectorXd::Zero(1), VectorXd::Ones(1), VectorXd::Ones(1), 1.0, {0});
  const double expect = 0.3 * npdf(0.0) / (0.7 * npdf(1.0) + 0.3 * npdf(0.0));
  const int n = 100000;
  int hits = 0;
  for (int k = 0; k < n; ++k) {
    update_d(s, data, cfg, rng);
    hits += s.params.d[0];
  }
  const double se = std::sqrt(expect * (1 - expect) / n);
  CHECK(std::abs(hits / static_cast<double>(n) - expect) < 3.5 * se);
}

TEST_CASE("update_t respects the truncation side and the half-normal mean") {
  Rng rng(2);
  Dataset data = toy_data(2, 1, 1, 1, rng);
  data.z.setZero();
  SamplerConfig cfg;
  cfg.tau = 0.035;
  ChainState s = frozen_state(data, VectorXd::Zero(1), VectorXd::Ones(1), VectorXd::Ones(1), 1.0, {1, 0});
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < n; ++k) {
    update_t(s, data, cfg, rng);
    REQUIRE(s.params.t(0) >= 0.0);
    REQUIRE(s.params.t(1) < 0.0);
    sum += s.params.t(0);
    sq += s.params.t(0) * s.params.t(0);
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - cfg.tau * std::sqrt(2.0 / std::numbers::pi)) < 3.5 * se);
}

TEST_CASE("update_t far tail: z'theta = -5 tau with d = 1") {
  Rng rng(3);
  Dataset data = toy_data(1, 1, 1, 1, rng);
  SamplerConfig cfg;
  cfg.tau = 0.01;
  data.z(0, 0) = -5.0 * cfg.tau;
  ChainState s = frozen_state(data, VectorXd::Zero(1), VectorXd::Ones(1), VectorXd::Ones(1), 1.0, {1});
  const double a = 5.0;
  const double oracle = -5.0 * cfg.tau + cfg.tau * npdf(a) / (0.5 * std::erfc(a / std::sqrt(2.0)));
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < n; ++k) {
    update_t(s, data, cfg, rng);
    REQUIRE(s.params.t(0) >= 0.0);
    sum += s.params.t(0);
    sq += s.params.t(0) * s.params.t(0);
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - oracle) < 3.5 * se);
}

TEST_CASE("update_beta scalar conjugacy and OLS limit") {
  Rng rng(4);
  SUBCASE("single row") {
    Dataset data = toy_data(1, 1, 1, 1, rng);
    data.y(0) = 2.5;
    SamplerConfig cfg;
    const double sigma2 = 0.5;
    ChainState s = frozen_state(data, VectorXd::Zero(1), VectorXd::Ones(1), VectorXd::Ones(1), sigma2, {0});
    const double mean = data.y(0) * 100.0 / (100.0 + sigma2);
    const double var = 1.0 / (1.0 / 100.0 + 1.0 / sigma2);
    const int n = 100000;
    double sum = 0.0;
    for (int k = 0; k < n; ++k) {
      update_beta(s, data, cfg, rng);
      sum += s.params.eta.beta(0);
    }
    CHECK(std::abs(sum / n - mean) < 3.5 * std::sqrt(var / n));
  }
  SUBCASE("flat-prior limit is OLS on the residualized outcome") {
    Dataset data = toy_data(50, 3, 1, 1, rng);
    SamplerConfig cfg;
    cfg.prior_beta_var = 1e12;
    std::vector<unsigned char> d(50);
    for (int i = 0; i < 50; ++i) d[static_cast<std::size_t>(i)] = i % 3 == 0;
    VectorXd gamma = VectorXd::Constant(1, 1.5);
    // Tiny sigma2 shrinks the draw onto the posterior mean.
    ChainState s = frozen_state(data, VectorXd::Zero(3), gamma, VectorXd::Ones(1), 1e-16, d);
    update_beta(s, data, cfg, rng);
    VectorXd y_res = data.y;
    for (int i = 0; i < 50; ++i) if (d[static_cast<std::size_t>(i)]) y_res(i) -= 1.5;
    const VectorXd ols = (data.w.transpose() * data.w).ldlt().solve(data.w.transpose() * y_res);
    CHECK((s.params.eta.beta - ols).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("singular precision surfaces a numerical error") {
    Dataset data = toy_data(5, 2, 1, 1, rng);
    data.w.col(1) = data.w.col(0);
    SamplerConfig cfg;
    cfg.prior_beta_var = 1e300;
    ChainState s = frozen_state(data, VectorXd::Zero(2), VectorXd::Ones(1), VectorXd::Ones(1), 1.0, {0, 0, 0, 0, 0});
    CHECK_THROWS_AS(update_beta(s, data, cfg, rng), NumericalError);
  }
}

TEST_CASE("update_gamma matches closed form and a grid posterior") {
  Rng rng(5);
  SUBCASE("all inactive gives the prior") {
    Dataset data = toy_data(10, 1, 1, 1, rng);
    SamplerConfig cfg;
    ChainState s = frozen_state(data, VectorXd::Zero(1), VectorXd::Zero(1), VectorXd::Ones(1), 1.0,
                                std::vector<unsigned char>(10, 0));
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < n; ++k) {
      update_gamma(s, data, cfg, rng);
      sum += s.params.eta.gamma(0);
      sq += s.params.eta.gamma(0) * s.params.eta.gamma(0);
    }
    CHECK(std::abs(sum / n) < 3.5 * std::sqrt(100.0 / n));
    CHECK(sq / n == doctest::Approx(100.0).epsilon(0.02));
  }
  SUBCASE("one active row") {
    Dataset data = toy_data(1, 1, 1, 1, rng);
    data.y(0) = 1.7;
    SamplerConfig cfg;
    ChainState s = frozen_state(data, VectorXd::Constant(1, 0.2), VectorXd::Zero(1), VectorXd::Ones(1), 1.0, {1});
    const double v = 1.0 / (0.01 + 1.0);
    const double m = v * (1.7 - 0.2);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < n; ++k) {
      update_gamma(s, data, cfg, rng);
      sum += s.params.eta.gamma(0);
      sq += s.params.eta.gamma(0) * s.params.eta.gamma(0);
    }
    const double mean = sum / n;
    CHECK(std::abs(mean - m) < 3.0 * std::sqrt(v / n));
    CHECK(sq / n - mean * mean == doctest::Approx(v).epsilon(0.02));
  }
  SUBCASE("20-row grid oracle") {
    Dataset data = toy_data(20, 2, 1, 1, rng);
    data.x.col(0) = rng.normal_vector(20);
    SamplerConfig cfg;
    const double sigma2 = 0.8;
    std::vector<unsigned char> d(20);
    for (int i = 0; i < 20; ++i) d[static_cast<std::size_t>(i)] = rng.bernoulli(0.5);
    const VectorXd beta = rng.normal_vector(2);
    ChainState s = frozen_state(data, beta, VectorXd::Zero(1), VectorXd::Ones(1), sigma2, d);
    const VectorXd mu = data.w * beta;
    // Unnormalized log posterior on 2001 points in [-5, 5].
    double mx = -HUGE_VAL;
    std::vector<double> lp(2001);
    for (int k = 0; k < 2001; ++k) {
      const double g = -5.0 + 10.0 * k / 2000.0;
      double v = -0.5 * g * g / 100.0;
      for (int i = 0; i < 20; ++i) {
        const double r = data.y(i) - mu(i) - (d[static_cast<std::size_t>(i)] ? data.x(i, 0) * g : 0.0);
        v -= 0.5 * r * r / sigma2;
      }
      lp[static_cast<std::size_t>(k)] = v;
      mx = std::max(mx, v);
    }
    double z = 0.0, m1 = 0.0, m2 = 0.0;
    for (int k = 0; k < 2001; ++k) {
      const double g = -5.0 + 10.0 * k / 2000.0;
      const double w = std::exp(lp[static_cast<std::size_t>(k)] - mx);
      z += w;
      m1 += w * g;
      m2 += w * g * g;
    }
    const double grid_mean = m1 / z;
    const double grid_var = m2 / z - grid_mean * grid_mean;
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < n; ++k) {
      update_gamma(s, data, cfg, rng);
      sum += s.params.eta.gamma(0);
      sq += s.params.eta.gamma(0) * s.params.eta.gamma(0);
    }
    const double mean = sum / n;
    CHECK(std::abs(mean - grid_mean) < 0.01);
    CHECK(std::abs(mean - grid_mean) < 3.0 * std::sqrt(grid_var / n));
    CHECK(sq / n - mean * mean == doctest::Approx(grid_var).epsilon(0.02));
  }
}

TEST_CASE("update_sigma2 inverse-gamma parameters") {
  SamplerConfig cfg;
  const auto prior = sigma2_posterior(cfg, 0, 0.0);
  CHECK(prior.shape == 2.0);
  CHECK(prior.scale == 1.0);
  const auto zero = sigma2_posterior(cfg, 10, 0.0);
  CHECK(zero.shape == 7.0);
  CHECK(zero.scale == 1.0);
  const auto four = sigma2_posterior(cfg, 4, 4.0);
  CHECK(four.shape == 4.0);
  CHECK(four.scale == 3.0);

  // RSS 4 on four rows: IG(4, 3), mean 1.
  Rng rng(6);
  Dataset data = toy_data(4, 1, 1, 1, rng);
  data.y << 1.0, -1.0, 1.0, -1.0;
  ChainState s = frozen_state(data, VectorXd::Zero(1), VectorXd::Zero(1), VectorXd::Ones(1), 1.0, {0, 0, 0, 0});
  const int n = 100000;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) {
    update_sigma2(s, data, cfg, rng);
    sum += s.params.eta.sigma2;
  }
  const double sd = std::sqrt(9.0 / (9.0 * 2.0));  // b^2 / ((a-1)^2 (a-2))
  CHECK(std::abs(sum / n - 1.0) < 3.0 * sd / std::sqrt(n));
}

TEST_CASE("ESS with no data is uniform on the hemisphere") {
  Rng rng(7);
  const MatrixXd z(0, 3);
  const VectorXd t(0);
  VectorXd theta = uniform_hemisphere(3, rng);
  const int n = 10000;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d second = Eigen::Matrix3d::Zero();
  for (int k = 0; k < n * 5; ++k) {
    theta = update_theta_ess(theta, t, z, 0.1, rng);
    REQUIRE(std::abs(theta.norm() - 1.0) < 1e-12);
    REQUIRE(theta(0) >= 0.0);
    if (k % 5 == 0) {
      mean += theta;
      second += theta * theta.transpose();
    }
  }
  mean /= n;
  second /= n;
  // Uniform hemisphere: E theta_1 = 1/2, E theta_2 = E theta_3 = 0 and
  // E theta theta' = I / 3. Rayleigh-style statistic on the free coordinates.
  CHECK(std::abs(mean(0) - 0.5) < 4.0 * std::sqrt((1.0 / 3 - 0.25) / n));
  const double rayleigh = 3.0 * n * (mean(1) * mean(1) + mean(2) * mean(2));
  CHECK(rayleigh < 13.8);  // chi-square(2) at 0.001
  CHECK((second - Eigen::Matrix3d::Identity() / 3.0).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("ESS q = 2 stationarity against a grid posterior") {
  Rng rng(8);
  const int n_rows = 12;
  MatrixXd z(n_rows, 2);
  for (int i = 0; i < n_rows; ++i) z.row(i) = rng.normal_vector(2).transpose();
  const double tau = 0.6;
  VectorXd t = z * angle_to_theta(0.7);
  for (int i = 0; i < n_rows; ++i) t(i) += tau * rng.normal();

  std::vector<double> angles;
  VectorXd theta = angle_to_theta(0.0);
  SliceStats stats;
  for (int k = 0; k < 200000; ++k) {
    theta = update_theta_ess(theta, t, z, tau, rng, &stats);
    angles.push_back(std::atan2(theta(1), theta(0)));
  }
  CHECK(stats.non_shrinking == 0);
  CHECK_FALSE(stats.cap_hit);
  const int bins = 50;
  auto target = [&](const VectorXd& v) { return latent_score_log_lik(t, z, v, tau); };
  const double tv = total_variation(angle_histogram(angles, bins), grid_histogram(target, 4001, bins));
  CHECK(tv < 0.03);
}

TEST_CASE("collapsed direction update targets the marginal mixture likelihood") {
  Rng rng(9);
  const int n_rows = 15;
  MatrixXd z(n_rows, 2);
  for (int i = 0; i < n_rows; ++i) z.row(i) = rng.normal_vector(2).transpose();
  VectorXd l0(n_rows), l1(n_rows);
  for (int i = 0; i < n_rows; ++i) {
    const double r = rng.normal();
    l0(i) = log_normal_density(r, 0.0, 1.0);
    l1(i) = log_normal_density(r, 1.5, 1.0);
  }
  const double tau = 0.3;
  std::vector<double> angles;
  VectorXd theta = angle_to_theta(0.0);
  for (int k = 0; k < 200000; ++k) {
    theta = update_theta_marginal(theta, z, l0, l1, tau, rng);
    angles.push_back(std::atan2(theta(1), theta(0)));
  }
  auto target = [&](const VectorXd& v) {
    double s = 0.0;
    for (int i = 0; i < n_rows; ++i) {
      const double p = 0.5 * std::erfc(-z.row(i).dot(v) / tau / std::sqrt(2.0));
      s += std::log((1 - p) * std::exp(l0(i)) + p * std::exp(l1(i)));
    }
    return s;
  };
  const int bins = 50;
  CHECK(total_variation(angle_histogram(angles, bins), grid_histogram(target, 4001, bins)) < 0.03);
}

TEST_CASE("run_gibbs is deterministic and keeps the invariants") {
  Rng rng(10);
  Dataset data = toy_data(60, 2, 1, 3, rng);
  SamplerConfig cfg;
  cfg.n_iter = 300;
  cfg.n_burn = 100;
  cfg.thin = 3;
  cfg.seed = 99;
  GibbsDiagnostics diag;
  const PosteriorDraws a = run_gibbs(data, cfg, &diag);
  const PosteriorDraws b = run_gibbs(data, cfg);
  CHECK(a.n_kept() == static_cast<Eigen::Index>(PosteriorDraws::expected_kept(300, 100, 3)));
  CHECK(a.theta == b.theta);
  CHECK(a.gamma == b.gamma);
  CHECK(a.beta == b.beta);
  CHECK(a.sigma2 == b.sigma2);
  for (Eigen::Index k = 0; k < a.n_kept(); ++k) {
    CHECK(std::abs(a.theta.row(k).norm() - 1.0) < 1e-12);
    CHECK(a.theta(k, 0) >= 0.0);
  }
  CHECK(diag.always_accepted());
  CHECK(diag.non_shrinking_brackets == 0);
  CHECK(diag.slice_rejections.size() == 300);
  CHECK(diag.gamma.count() == static_cast<std::size_t>(a.n_kept()));

  cfg.seed = 100;
  const PosteriorDraws c = run_gibbs(data, cfg);
  CHECK(c.theta != a.theta);
}

TEST_CASE("d and t stay consistent after every sweep") {
  Rng rng(11);
  Dataset data = toy_data(40, 2, 2, 2, rng);
  SamplerConfig cfg;
  cfg.collapsed_theta_step = false;
  ChainState s = initial_state(data, cfg, rng);
  for (int k = 0; k < 200; ++k) {
    gibbs_sweep(s, data, cfg, rng);
    REQUIRE_NOTHROW(s.params.validate());
  }
}

TEST_CASE("horseshoe mode runs and yields hemisphere draws") {
  Rng rng(12);
  Dataset data = toy_data(50, 1, 1, 6, rng);
  SamplerConfig cfg;
  cfg.n_iter = 200;
  cfg.n_burn = 50;
  cfg.theta_prior = ThetaPrior::horseshoe;
  const PosteriorDraws draws = run_gibbs(data, cfg);
  for (Eigen::Index k = 0; k < draws.n_kept(); ++k) {
    CHECK(std::abs(draws.theta.row(k).norm() - 1.0) < 1e-12);
    CHECK(draws.theta(k, 0) >= 0.0);
  }
}

TEST_CASE("errors inside a sweep carry the iteration index") {
  Rng rng(13);
  Dataset data = toy_data(6, 2, 1, 1, rng);
  data.w.col(1) = data.w.col(0);
  SamplerConfig cfg;
  cfg.n_iter = 10;
  cfg.n_burn = 1;
  cfg.prior_beta_var = 1e300;
  try {
    run_gibbs(data, cfg);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
  }
}
