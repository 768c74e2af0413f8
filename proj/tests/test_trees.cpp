#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "changeplane/trees.hpp"

#include <cmath>
#include <map>

using namespace changeplane;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("split probability") {
  TreeConfig cfg;
  CHECK(split_probability(cfg, 0) == doctest::Approx(0.95));
  CHECK(split_probability(cfg, 1) == doctest::Approx(0.95 / 4.0));
  CHECK(split_probability(cfg, 3) == doctest::Approx(0.95 / 16.0));
}

TEST_CASE("tree structure: split, route and collapse") {
  Tree t;
  CHECK(t.num_leaves() == 1);
  auto [l, r] = t.split(t.root(), 0, 0.5);
  CHECK(t.num_leaves() == 2);
  t.node(l).value = -1.0;
  t.node(r).value = 2.0;
  Eigen::RowVectorXd w(2);
  w << 0.4, 9.0;
  CHECK(t.evaluate(w) == -1.0);
  w << 0.5, 9.0;  // equal to the cut goes right
  CHECK(t.evaluate(w) == 2.0);

  auto [rl, rr] = t.split(r, 1, 0.0);
  t.node(rl).value = 3.0;
  t.node(rr).value = 4.0;
  w << 0.7, -1.0;
  CHECK(t.evaluate(w) == 3.0);
  CHECK(t.num_leaves() == 3);
  CHECK(t.prunable().size() == 1);
  CHECK(t.prunable()[0] == r);
  CHECK(t.node(rl).depth == 2);

  t.collapse(r);
  CHECK(t.num_leaves() == 2);
  CHECK(t.node(r).is_leaf());
  // Freed slots are reused.
  auto [a, b] = t.split(r, 0, 0.9);
  CHECK(((a == rl && b == rr) || (a == rr && b == rl)));
}

TEST_CASE("single root-only tree: leaf posterior matches the conjugate formula") {
  // A constant column cannot be split, so the tree stays a root and the leaf
  // draw is N(V S / sigma2, V) with V = (n / sigma2 + 1 / s_mu^2)^{-1}.
  const int n = 30;
  MatrixXd w = MatrixXd::Ones(n, 1);
  Rng rng(1);
  VectorXd y = 2.0 + rng.normal_vector(n).array();
  TreeConfig cfg;
  cfg.num_trees = 1;
  const double offset = 0.5, scale = 1.3;
  TreeEnsemble ens(w, cfg, offset, scale);
  CHECK(ens.leaf_sd() == doctest::Approx(1.0 * 1.3 / 2.0));
  const double sigma2 = 0.7;
  const double s_mu2 = ens.leaf_sd() * ens.leaf_sd();
  const double v = 1.0 / (n / sigma2 + 1.0 / s_mu2);
  const double m = v * (y.array() - offset).sum() / sigma2;
  const int iters = 100000;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < iters; ++k) {
    ens.backfit_sweep(y, w, sigma2, rng);
    const double leaf = ens.fitted()(0) - offset;
    sum += leaf;
    sq += leaf * leaf;
  }
  CHECK(ens.tree(0).num_leaves() == 1);
  const double mean = sum / iters;
  CHECK(std::abs(mean - m) < 3.0 * std::sqrt(v / iters));
  CHECK(sq / iters - mean * mean == doctest::Approx(v).epsilon(0.02));
}

TEST_CASE("tree structure prior is recovered under a flat likelihood") {
  // With an enormous noise variance the marginal likelihood is flat and the
  // grow/prune chain must sample the structure prior. Many distinct values
  // keep nearly every node splittable, so P(1 leaf) = 1 - alpha and
  // P(2 leaves) = alpha (1 - alpha / 2^beta)^2.
  const int n = 2000;
  Rng rng(2);
  MatrixXd w(n, 2);
  for (int i = 0; i < n; ++i) w.row(i) = rng.normal_vector(2).transpose();
  TreeConfig cfg;
  cfg.num_trees = 1;
  TreeEnsemble ens(w, cfg, 0.0, 1.0);
  const VectorXd y = VectorXd::Zero(n);
  std::map<int, int> counts;
  const int iters = 200000;
  for (int k = 0; k < iters; ++k) {
    ens.backfit_sweep(y, w, 1e14, rng);
    ++counts[ens.tree(0).num_leaves()];
  }
  const double p1 = counts[1] / static_cast<double>(iters);
  const double p2 = counts[2] / static_cast<double>(iters);
  const double a = cfg.alpha, d1 = cfg.alpha / 4.0;
  CHECK(p1 == doctest::Approx(1.0 - a).epsilon(0.1));
  CHECK(p2 == doctest::Approx(a * (1 - d1) * (1 - d1)).epsilon(0.03));
}

TEST_CASE("predict agrees with the cached fit and tracks a step function") {
  const int n = 400;
  Rng rng(3);
  MatrixXd w(n, 2);
  VectorXd y(n), truth(n);
  for (int i = 0; i < n; ++i) {
    w(i, 0) = rng.uniform(-1.0, 1.0);
    w(i, 1) = rng.uniform(-1.0, 1.0);
    truth(i) = (w(i, 0) < 0.0 ? -1.0 : 1.5) + 0.5 * w(i, 1);
    y(i) = truth(i) + 0.1 * rng.normal();
  }
  TreeConfig cfg;
  cfg.num_trees = 50;
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().sum() / (n - 1));
  TreeEnsemble ens(w, cfg, mean, sd);
  for (int k = 0; k < 300; ++k) ens.backfit_sweep(y, w, 0.01, rng);
  double max_gap = 0.0;
  for (int i = 0; i < n; ++i) max_gap = std::max(max_gap, std::abs(ens.predict(w.row(i)) - ens.fitted()(i)));
  CHECK(max_gap < 1e-9);
  const double rmse = std::sqrt((ens.fitted() - truth).squaredNorm() / n);
  CHECK(rmse < 0.15);
  CHECK(ens.proposed_moves() > 0);
  CHECK(ens.accepted_moves() > 0);

  // refresh rebuilds the same cache from the structures.
  const VectorXd before = ens.fitted();
  ens.refresh(w);
  CHECK((ens.fitted() - before).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("constant outcome gives a constant fit") {
  const int n = 100;
  Rng rng(4);
  MatrixXd w(n, 3);
  for (int i = 0; i < n; ++i) w.row(i) = rng.normal_vector(3).transpose();
  const VectorXd y = VectorXd::Constant(n, 3.0);
  TreeConfig cfg;
  cfg.num_trees = 20;
  TreeEnsemble ens(w, cfg, 3.0, 1.0);
  for (int k = 0; k < 200; ++k) ens.backfit_sweep(y, w, 1e-4, rng);
  const VectorXd f = ens.fitted();
  CHECK((f.array() - 3.0).abs().maxCoeff() < 0.05);
}

TEST_CASE("a variable with one distinct value is never split on") {
  const int n = 200;
  Rng rng(5);
  MatrixXd w(n, 2);
  for (int i = 0; i < n; ++i) {
    w(i, 0) = 7.0;
    w(i, 1) = rng.normal();
  }
  VectorXd y = w.col(1).array().sign();
  TreeConfig cfg;
  cfg.num_trees = 10;
  TreeEnsemble ens(w, cfg, 0.0, 1.0);
  for (int k = 0; k < 100; ++k) ens.backfit_sweep(y, w, 0.05, rng);
  for (int t = 0; t < ens.num_trees(); ++t) {
    const Tree& tr = ens.tree(t);
    std::vector<int> stack{tr.root()};
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      const auto& nd = tr.node(id);
      if (nd.is_leaf()) continue;
      CHECK(nd.var == 1);
      stack.push_back(nd.left);
      stack.push_back(nd.right);
    }
  }
}
