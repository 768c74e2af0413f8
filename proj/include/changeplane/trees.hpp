#pragma once

// Sum-of-trees baseline mu(W) = offset + sum_t g(W; T_t, M_t), updated by
// Bayesian backfitting with grow/prune Metropolis-Hastings moves and conjugate
// leaf-mean draws. The residual variance is owned by the caller and passed in
// on every sweep; the ensemble never updates it.

#include "changeplane/random.hpp"

#include <Eigen/Dense>

#include <vector>

namespace changeplane {

struct TreeConfig {
  int num_trees = 200;
  double alpha = 0.95;  // split probability alpha (1 + depth)^{-beta}
  double beta = 2.0;
  double k = 2.0;       // leaf prior sd = c * scale / (k sqrt(m))
  double c = 1.0;
};

/// Prior probability that a splittable node at `depth` is internal.
double split_probability(const TreeConfig& cfg, int depth);

/// Binary tree with axis-aligned rules "w[var] < cut goes left".
class Tree {
 public:
  struct Node {
    int var = -1;
    double cut = 0.0;
    int left = -1;
    int right = -1;
    int parent = -1;
    int depth = 0;
    double value = 0.0;
    bool growable = false;  // at least one valid split exists for the node's rows
    bool alive = true;
    bool is_leaf() const { return left < 0; }
  };

  Tree() { nodes_.push_back(Node{}); }

  const Node& node(int id) const { return nodes_[id]; }
  Node& node(int id) { return nodes_[id]; }
  int root() const { return 0; }

  /// Leaf reached by `w_row`.
  int find_leaf(const Eigen::Ref<const Eigen::RowVectorXd>& w_row) const;
  double evaluate(const Eigen::Ref<const Eigen::RowVectorXd>& w_row) const {
    return nodes_[find_leaf(w_row)].value;
  }

  /// Turns leaf `id` into an internal node with two fresh leaves; returns (left, right).
  std::pair<int, int> split(int id, int var, double cut);
  /// Collapses internal node `id` whose children are both leaves.
  void collapse(int id);

  std::vector<int> leaves() const;
  /// Internal nodes whose two children are leaves.
  std::vector<int> prunable() const;
  int num_leaves() const;
  int num_growable_leaves() const;

 private:
  int allocate();
  std::vector<Node> nodes_;
  std::vector<int> free_;
};

class TreeEnsemble {
 public:
  /// `offset` and `scale` fix the location and spread of the outcome the trees
  /// model; the leaf prior sd is c * scale / (k sqrt(m)).
  TreeEnsemble(const Eigen::MatrixXd& w, const TreeConfig& cfg, double offset, double scale);

  /// One backfitting pass over all trees against `y_dagger` with noise variance `sigma2`.
  void backfit_sweep(const Eigen::VectorXd& y_dagger, const Eigen::MatrixXd& w, double sigma2,
                     Rng& rng);

  /// offset + sum of per-tree leaf values at `w_row`.
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& w_row) const;

  /// Cached offset + sum of trees for each training row.
  const Eigen::VectorXd& fitted() const { return total_fit_; }
  const Eigen::VectorXd& tree_fit(int t) const { return fits_[t]; }

  const TreeConfig& config() const { return cfg_; }
  double offset() const { return offset_; }
  double leaf_sd() const { return leaf_sd_; }
  int num_trees() const { return static_cast<int>(trees_.size()); }
  const Tree& tree(int t) const { return trees_[t]; }
  Tree& tree(int t) { return trees_[t]; }

  /// Rebuilds leaf assignments and cached fits from the tree structures.
  void refresh(const Eigen::MatrixXd& w);

  int accepted_moves() const { return accepted_; }
  int proposed_moves() const { return proposed_; }

 private:
  void update_tree(int t, const Eigen::VectorXd& resid, const Eigen::MatrixXd& w, double sigma2,
                   Rng& rng);
  bool try_grow(int t, const Eigen::VectorXd& resid, const Eigen::MatrixXd& w, double sigma2,
                Rng& rng);
  bool try_prune(int t, const Eigen::VectorXd& resid, double sigma2, Rng& rng);
  void draw_leaves(int t, const Eigen::VectorXd& resid, double sigma2, Rng& rng);

  // Split candidates at a node: variables with >= 2 distinct values among its rows.
  std::vector<int> splittable_vars(const std::vector<int>& rows) const;
  bool is_growable(const std::vector<int>& rows) const;
  // Distinct values of `var` among `rows`, excluding the minimum (valid cutpoints).
  std::vector<double> cutpoints(const std::vector<int>& rows, int var) const;
  std::vector<int> rows_in(int t, int node) const;
  double log_marginal(double n_b, double sum_b, double sigma2) const;

  TreeConfig cfg_;
  double offset_;
  double leaf_sd_;
  std::vector<Tree> trees_;
  std::vector<std::vector<int>> leaf_of_row_;
  std::vector<Eigen::VectorXd> fits_;
  Eigen::VectorXd total_fit_;
  // Per-column rank of every row among that column's sorted distinct values.
  std::vector<std::vector<int>> rank_;
  std::vector<std::vector<double>> distinct_;
  mutable std::vector<int> stamp_;
  mutable int stamp_id_ = 0;
  int accepted_ = 0;
  int proposed_ = 0;
};

}  // namespace changeplane
