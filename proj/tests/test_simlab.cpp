#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "changeplane/error.hpp"
#include "changeplane/simlab.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace changeplane;
using Eigen::VectorXd;

namespace {

double Phi(double x) { return boost::math::cdf(boost::math::normal_distribution<double>(), x); }

// Exact disagreement probability of two half-spaces under z = (1, G), G ~ N(0, I):
// integrate over the standardized score of theta_hat.
double misclass_oracle(const VectorXd& a, const VectorXd& b) {
  const Eigen::Index q = a.size();
  const VectorXd as = a.tail(q - 1), bs = b.tail(q - 1);
  const double na = as.norm(), nb = bs.norm();
  const double rho = as.dot(bs) / (na * nb);
  const double sd = nb * std::sqrt(std::max(0.0, 1.0 - rho * rho));
  auto integrand = [&](double u) {
    const double x = a(0) + na * u;
    const double my = b(0) + nb * rho * u;
    const double p_y_pos = sd > 0.0 ? Phi(my / sd) : (my >= 0.0 ? 1.0 : 0.0);
    const double dens = std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
    return dens * (x >= 0.0 ? 1.0 - p_y_pos : p_y_pos);
  };
  const double cut = -a(0) / na;
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  return GK::integrate(integrand, -12.0, cut, 10, 1e-12) + GK::integrate(integrand, cut, 12.0, 10, 1e-12);
}

VectorXd rotate_towards(const VectorXd& v, const VectorXd& dir, double angle) {
  VectorXd u = dir - dir.dot(v) * v;
  u.normalize();
  return std::cos(angle) * v + std::sin(angle) * u;
}

}  // namespace

TEST_CASE("design catalogue") {
  CHECK(DgpSpec::theta0().norm() == doctest::Approx(1.0));
  CHECK(DgpSpec::theta_star()(4) == -1.5);
  CHECK(DgpSpec::beta0()(3) == -0.65);
  const DgpSpec d1 = DgpSpec::make(1);
  CHECK(d1.q() == 5);
  CHECK(d1.gamma0 == 2.0);
  CHECK(d1.baseline == BaselineShape::linear);
  const DgpSpec d2 = DgpSpec::make(2);
  CHECK(d2.baseline == BaselineShape::nonlinear);
  const DgpSpec d3 = DgpSpec::make(3);
  CHECK(d3.q() == 55);
  CHECK(d3.theta_true().tail(50).isZero());
  const DgpSpec d4 = DgpSpec::make(4);
  CHECK(d4.q() == 55);
  CHECK(d4.baseline == BaselineShape::nonlinear);
  CHECK(DgpSpec::make(5).gamma0 == 0.0);
  CHECK_THROWS_AS(DgpSpec::make(6), ConfigError);
}

TEST_CASE("nonlinear baseline formula") {
  Eigen::RowVectorXd w(5);
  w << 1.0, 0.5, -1.0, 2.0, 0.3;
  const double expect = 1.0 - 0.3 * 0.5 * -1.0 - 0.4 * std::exp(-2.0) - 0.65 * std::log(0.09) +
                        0.4 * std::sin(std::numbers::pi * 0.5);
  CHECK(dgp_baseline(DgpSpec::make(2), w) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(dgp_baseline(DgpSpec::make(1), w) == doctest::Approx(w.dot(DgpSpec::beta0().transpose())));
}

TEST_CASE("generated data have the design's shape and boundary") {
  const DgpSample s = generate_dgp(DgpSpec::make(3, 200), 5);
  CHECK(s.data.n() == 200);
  CHECK(s.data.w.cols() == 5);
  CHECK(s.data.z.cols() == 55);
  CHECK(s.data.x.cols() == 1);
  CHECK((s.data.z.leftCols(5) - s.data.w).isZero());
  CHECK(s.data.w.col(0).isOnes());
  CHECK(s.truth.theta.size() == 55);
  for (Eigen::Index i = 0; i < 200; ++i) CHECK((s.data.x(i, 0) == 0.0 || s.data.x(i, 0) == 1.0));
  CHECK_NOTHROW(s.data.validate());
  // Same seed, same data.
  const DgpSample again = generate_dgp(DgpSpec::make(3, 200), 5);
  CHECK(again.data.y == s.data.y);
}

TEST_CASE("subgroup fraction matches the Gaussian oracle") {
  const VectorXd th = DgpSpec::theta0();
  const double exact = Phi(th(0) / th.tail(4).norm());
  // Independent Monte Carlo check of the closed form, 10^6 draws.
  std::mt19937_64 eng(77);
  std::normal_distribution<double> nd;
  long hits = 0;
  const long mc = 1000000;
  for (long k = 0; k < mc; ++k) {
    double s = th(0);
    for (int j = 1; j < 5; ++j) s += th(j) * nd(eng);
    hits += s > 0.0;
  }
  CHECK(hits / static_cast<double>(mc) == doctest::Approx(exact).epsilon(0.005));

  const Eigen::Index n = 50000;
  const DgpSample s = generate_dgp(DgpSpec::make(1, n), 3);
  const double se = std::sqrt(exact * (1 - exact) / n);
  CHECK(std::abs(s.truth.subgroup_fraction - exact) < 3.0 * se);
}

TEST_CASE("treatment effect inside the subgroup is gamma0") {
  const Eigen::Index n = 200000;
  const DgpSample s = generate_dgp(DgpSpec::make(1, n), 8);
  const VectorXd th = DgpSpec::theta0();
  const VectorXd b = DgpSpec::beta0();
  // Remove the known baseline so the comparison has unit noise.
  double s1 = 0, s0 = 0;
  long n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(s.data.w.row(i).dot(th.transpose()) > 0.0)) continue;
    const double r = s.data.y(i) - s.data.w.row(i).dot(b.transpose());
    if (s.data.x(i, 0) == 1.0) {
      s1 += r;
      ++n1;
    } else {
      s0 += r;
      ++n0;
    }
  }
  const double diff = s1 / n1 - s0 / n0;
  CHECK(std::abs(diff - 2.0) < 3.0 * std::sqrt(1.0 / n1 + 1.0 / n0));

  const DgpSample s5 = generate_dgp(DgpSpec::make(5, 1000), 8);
  CHECK(s5.truth.gamma(0) == 0.0);
}

TEST_CASE("angular error") {
  const VectorXd th = DgpSpec::theta0();
  CHECK(angular_error(th, th) == doctest::Approx(0.0).epsilon(1e-7));
  VectorXd e1 = VectorXd::Zero(3), e2 = VectorXd::Zero(3);
  e1(0) = 1;
  e2(1) = 1;
  CHECK(angular_error(e1, e2) == doctest::Approx(std::numbers::pi / 2));
  VectorXd a(2), b(2);
  a << 1.0, 0.0;
  b << 0.995, std::sqrt(1 - 0.995 * 0.995);
  CHECK(std::abs(angular_error(b, a) - 0.100) < 1e-3);
}

TEST_CASE("misclassification against the quadrature oracle") {
  const VectorXd th = DgpSpec::theta0();
  CHECK(misclassification(th, th, 10000, 1) == 0.0);
  CHECK(misclassification(-th, th, 10000, 1) == doctest::Approx(1.0));
  Rng rng(4);
  for (double angle : {0.05, 0.10, 0.4}) {
    const VectorXd hat = rotate_towards(th, rng.normal_vector(5), angle);
    const double exact = misclass_oracle(hat, th);
    const std::size_t mc = 200000;
    const double est = misclassification(hat, th, mc, 9);
    const double se = std::sqrt(exact * (1 - exact) / mc);
    CHECK(std::abs(est - exact) < 3.5 * se);
  }
  // A rotation of 0.10 rad lands on the few-percent scale.
  const VectorXd hat = rotate_towards(th, rng.normal_vector(5), 0.10);
  const double m = misclass_oracle(hat, th);
  CHECK(m > 0.01);
  CHECK(m < 0.06);
}

TEST_CASE("replicate seeds follow the stream-splitting rule") {
  CHECK(replicate_data_seed(11, 3) == derive_seed(11, 6));
  CHECK(replicate_chain_seed(11, 3) == derive_seed(11, 7));
}

TEST_CASE("small study is deterministic and its aggregates are consistent") {
  StudyConfig cfg;
  cfg.dgp = DgpSpec::make(1, 150);
  cfg.sampler.n_iter = 400;
  cfg.sampler.n_burn = 150;
  cfg.n_replicates = 4;
  cfg.seed = 21;
  cfg.threads = 2;
  cfg.misclass_draws = 2000;
  int calls = 0;
  const SimResult a = run_study(cfg, [&](int, int) { ++calls; });
  const SimResult b = run_study(cfg);
  CHECK(calls == 4);
  CHECK(a.failures == 0);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t k = 0; k < a.metrics.size(); ++k) CHECK(a.metrics[k].value == b.metrics[k].value);
  for (const char* p : {"gamma", "theta[1]", "theta[5]"}) {
    const double cp = a.metric(p, "cp");
    CHECK(cp >= 0.0);
    CHECK(cp <= 1.0);
    CHECK(a.metric(p, "rmse") >= std::abs(a.metric(p, "bias")) - 1e-12);
  }
  CHECK(a.metric("study", "replicates_ok") == 4.0);
  CHECK_THROWS(a.metric("gamma", "nope"));

  std::ostringstream csv;
  write_study_csv(csv, cfg, a);
  CHECK(csv.str().rfind("dgp,method,parameter,metric,value\n", 0) == 0);
  CHECK(csv.str().find("1,parametric,gamma,cp,") != std::string::npos);
  std::ostringstream summary;
  write_study_summary(summary, cfg, a);
  CHECK(summary.str().find("theta[3]") != std::string::npos);
}

TEST_CASE("aggregate: coverage counts interval hits") {
  DgpTruth truth;
  truth.gamma = VectorXd::Constant(1, 2.0);
  truth.theta = VectorXd::Zero(2);
  truth.theta(0) = 1.0;
  std::vector<ReplicateResult> reps(4);
  for (int k = 0; k < 4; ++k) {
    auto& r = reps[static_cast<std::size_t>(k)];
    r.ok = true;
    r.gamma_mean = VectorXd::Constant(1, 2.0 + 0.1 * k);
    r.gamma_lower = VectorXd::Constant(1, 1.9 + 0.1 * k);
    r.gamma_upper = VectorXd::Constant(1, 2.1 + 0.1 * k);
    r.theta_mean = truth.theta;
    r.theta_lower = truth.theta.array() - 0.1;
    r.theta_upper = truth.theta.array() + 0.1;
    r.theta_hat = truth.theta;
  }
  reps[3].ok = false;
  const auto rows = aggregate(reps, truth, 2);
  auto get = [&](const std::string& p, const std::string& m) {
    for (const auto& row : rows) if (row.parameter == p && row.metric == m) return row.value;
    FAIL("missing metric");
    return 0.0;
  };
  // Replicates 0..2 kept; intervals [1.9,2.1], [2.0,2.2], [2.1,2.3].
  CHECK(get("gamma", "cp") == doctest::Approx(2.0 / 3.0));
  CHECK(get("gamma", "bias") == doctest::Approx(0.1));
  CHECK(get("gamma", "rmse") == doctest::Approx(std::sqrt((0.0 + 0.01 + 0.04) / 3.0)));
  CHECK(get("gamma", "ail") == doctest::Approx(0.2));
  CHECK(get("study", "failures") == 1.0);
}

TEST_CASE("tau sensitivity reports gray-zone widths") {
  const DgpSample s = generate_dgp(DgpSpec::make(1, 120), 2);
  SamplerConfig sc;
  sc.n_iter = 200;
  sc.n_burn = 50;
  const auto rows = tau_sensitivity(s.data, sc, {0.01, 0.035, 0.1}, DecisionConfig{});
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].gray_zone_width == doctest::Approx(0.11515));
  CHECK(rows[0].tau == 0.01);
}

TEST_CASE("gate sharpens as tau decreases") {
  VectorXd z(2), th(2);
  z << 0.03, 0.1;
  th << 1.0, 0.0;
  double prev = 1.0;
  for (double tau : {1.0, 0.3, 0.1, 0.035, 0.01}) {
    const double gap = std::abs(probit_gate(z, th, tau) - hard_indicator(z, th));
    CHECK(gap < prev);
    prev = gap;
  }
}
