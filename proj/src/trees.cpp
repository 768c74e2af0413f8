#include "changeplane/trees.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace changeplane {

double split_probability(const TreeConfig& cfg, int depth) {
  return cfg.alpha * std::pow(1.0 + depth, -cfg.beta);
}

// ---------------------------------------------------------------------------
// Tree

int Tree::find_leaf(const Eigen::Ref<const Eigen::RowVectorXd>& w_row) const {
  int id = 0;
  while (!nodes_[id].is_leaf()) {
    const Node& nd = nodes_[id];
    id = w_row(nd.var) < nd.cut ? nd.left : nd.right;
  }
  return id;
}

int Tree::allocate() {
  if (!free_.empty()) {
    const int id = free_.back();
    free_.pop_back();
    nodes_[id] = Node{};
    return id;
  }
  nodes_.push_back(Node{});
  return static_cast<int>(nodes_.size()) - 1;
}

std::pair<int, int> Tree::split(int id, int var, double cut) {
  const int l = allocate();
  const int r = allocate();
  for (int c : {l, r}) {
    nodes_[c].parent = id;
    nodes_[c].depth = nodes_[id].depth + 1;
  }
  Node& nd = nodes_[id];
  nd.var = var;
  nd.cut = cut;
  nd.left = l;
  nd.right = r;
  return {l, r};
}

void Tree::collapse(int id) {
  Node& nd = nodes_[id];
  if (nd.is_leaf() || !nodes_[nd.left].is_leaf() || !nodes_[nd.right].is_leaf()) {
    throw std::logic_error("collapse requires a node with two leaf children");
  }
  for (int c : {nd.left, nd.right}) {
    nodes_[c].alive = false;
    free_.push_back(c);
  }
  nd.left = nd.right = -1;
  nd.var = -1;
  nd.growable = true;
}

std::vector<int> Tree::leaves() const {
  std::vector<int> out;
  for (int id = 0; id < static_cast<int>(nodes_.size()); ++id) {
    if (nodes_[id].alive && nodes_[id].is_leaf()) out.push_back(id);
  }
  return out;
}

std::vector<int> Tree::prunable() const {
  std::vector<int> out;
  for (int id = 0; id < static_cast<int>(nodes_.size()); ++id) {
    const Node& nd = nodes_[id];
    if (nd.alive && !nd.is_leaf() && nodes_[nd.left].is_leaf() && nodes_[nd.right].is_leaf()) {
      out.push_back(id);
    }
  }
  return out;
}

int Tree::num_leaves() const { return static_cast<int>(leaves().size()); }

int Tree::num_growable_leaves() const {
  int count = 0;
  for (const Node& nd : nodes_) {
    if (nd.alive && nd.is_leaf() && nd.growable) ++count;
  }
  return count;
}

// ---------------------------------------------------------------------------
// TreeEnsemble

namespace {

double grow_probability(int n_growable, int n_prunable) {
  if (n_growable == 0) return 0.0;
  return n_prunable == 0 ? 1.0 : 0.5;
}

double prune_probability(int n_growable, int n_prunable) {
  if (n_prunable == 0) return 0.0;
  return n_growable == 0 ? 1.0 : 0.5;
}

}  // namespace

TreeEnsemble::TreeEnsemble(const Eigen::MatrixXd& w, const TreeConfig& cfg, double offset,
                           double scale)
    : cfg_(cfg), offset_(offset) {
  if (cfg.num_trees < 1) throw std::invalid_argument("tree ensemble needs at least one tree");
  if (!(scale > 0.0)) throw std::invalid_argument("tree ensemble scale must be positive");
  leaf_sd_ = cfg.c * scale / (cfg.k * std::sqrt(static_cast<double>(cfg.num_trees)));

  const Eigen::Index n = w.rows();
  rank_.resize(w.cols());
  distinct_.resize(w.cols());
  std::size_t max_distinct = 0;
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    std::vector<double> vals(w.col(j).data(), w.col(j).data() + n);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    rank_[j].resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      rank_[j][i] = static_cast<int>(std::lower_bound(vals.begin(), vals.end(), w(i, j)) - vals.begin());
    }
    max_distinct = std::max(max_distinct, vals.size());
    distinct_[j] = std::move(vals);
  }
  stamp_.assign(max_distinct, 0);

  std::vector<int> all(n);
  for (Eigen::Index i = 0; i < n; ++i) all[i] = static_cast<int>(i);
  const bool root_growable = is_growable(all);

  trees_.assign(cfg.num_trees, Tree{});
  for (Tree& tr : trees_) tr.node(0).growable = root_growable;
  leaf_of_row_.assign(cfg.num_trees, std::vector<int>(n, 0));
  fits_.assign(cfg.num_trees, Eigen::VectorXd::Zero(n));
  total_fit_ = Eigen::VectorXd::Constant(n, offset_);
}

double TreeEnsemble::predict(const Eigen::Ref<const Eigen::RowVectorXd>& w_row) const {
  double sum = offset_;
  for (const Tree& tr : trees_) sum += tr.evaluate(w_row);
  return sum;
}

void TreeEnsemble::refresh(const Eigen::MatrixXd& w) {
  total_fit_.setConstant(offset_);
  for (int t = 0; t < num_trees(); ++t) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      const int leaf = trees_[t].find_leaf(w.row(i));
      leaf_of_row_[t][i] = leaf;
      fits_[t](i) = trees_[t].node(leaf).value;
    }
    total_fit_ += fits_[t];
  }
}

std::vector<int> TreeEnsemble::rows_in(int t, int node) const {
  const Tree& tr = trees_[t];
  const Tree::Node& nd = tr.node(node);
  std::vector<int> rows;
  const auto& leaf_of = leaf_of_row_[t];
  if (nd.is_leaf()) {
    for (int i = 0; i < static_cast<int>(leaf_of.size()); ++i) {
      if (leaf_of[i] == node) rows.push_back(i);
    }
  } else {
    for (int i = 0; i < static_cast<int>(leaf_of.size()); ++i) {
      if (leaf_of[i] == nd.left || leaf_of[i] == nd.right) rows.push_back(i);
    }
  }
  return rows;
}

bool TreeEnsemble::is_growable(const std::vector<int>& rows) const {
  if (rows.size() < 2) return false;
  for (std::size_t j = 0; j < rank_.size(); ++j) {
    const int first = rank_[j][rows[0]];
    for (int i : rows) {
      if (rank_[j][i] != first) return true;
    }
  }
  return false;
}

std::vector<int> TreeEnsemble::splittable_vars(const std::vector<int>& rows) const {
  std::vector<int> vars;
  if (rows.size() < 2) return vars;
  for (std::size_t j = 0; j < rank_.size(); ++j) {
    const int first = rank_[j][rows[0]];
    for (int i : rows) {
      if (rank_[j][i] != first) {
        vars.push_back(static_cast<int>(j));
        break;
      }
    }
  }
  return vars;
}

std::vector<double> TreeEnsemble::cutpoints(const std::vector<int>& rows, int var) const {
  // Stamp the ranks present, then walk the rank range in order; avoids a sort.
  ++stamp_id_;
  int min_rank = static_cast<int>(distinct_[var].size());
  int max_rank = -1;
  for (int i : rows) {
    const int rk = rank_[var][i];
    min_rank = std::min(min_rank, rk);
    max_rank = std::max(max_rank, rk);
    stamp_[rk] = stamp_id_;
  }
  std::vector<double> cuts;
  for (int rk = min_rank + 1; rk <= max_rank; ++rk) {
    if (stamp_[rk] == stamp_id_) cuts.push_back(distinct_[var][rk]);
  }
  return cuts;
}

double TreeEnsemble::log_marginal(double n_b, double sum_b, double sigma2) const {
  // Leaf mean integrated out under N(0, leaf_sd^2); terms common to all
  // partitions of the same rows are dropped.
  const double s2 = leaf_sd_ * leaf_sd_;
  return -0.5 * std::log1p(n_b * s2 / sigma2) +
         0.5 * s2 * sum_b * sum_b / (sigma2 * (sigma2 + n_b * s2));
}

void TreeEnsemble::backfit_sweep(const Eigen::VectorXd& y_dagger, const Eigen::MatrixXd& w,
                                 double sigma2, Rng& rng) {
  if (y_dagger.size() != total_fit_.size() || w.rows() != total_fit_.size()) {
    throw std::invalid_argument("backfit_sweep: data size does not match the ensemble");
  }
  if (!(sigma2 > 0.0)) throw std::invalid_argument("backfit_sweep: sigma2 must be positive");
  Eigen::VectorXd resid(y_dagger.size());
  for (int t = 0; t < num_trees(); ++t) {
    // Partial residual: outcome minus offset and every other tree.
    resid = y_dagger - total_fit_ + fits_[t];
    total_fit_ -= fits_[t];
    update_tree(t, resid, w, sigma2, rng);
    total_fit_ += fits_[t];
  }
}

void TreeEnsemble::update_tree(int t, const Eigen::VectorXd& resid, const Eigen::MatrixXd& w,
                               double sigma2, Rng& rng) {
  Tree& tr = trees_[t];
  const int n_growable = tr.num_growable_leaves();
  const int n_prunable = static_cast<int>(tr.prunable().size());
  const double p_grow = grow_probability(n_growable, n_prunable);
  const double p_prune = prune_probability(n_growable, n_prunable);
  if (p_grow + p_prune > 0.0) {
    ++proposed_;
    const bool accepted = rng.uniform() < p_grow ? try_grow(t, resid, w, sigma2, rng)
                                                 : try_prune(t, resid, sigma2, rng);
    if (accepted) ++accepted_;
  }
  draw_leaves(t, resid, sigma2, rng);
}

bool TreeEnsemble::try_grow(int t, const Eigen::VectorXd& resid, const Eigen::MatrixXd& w,
                            double sigma2, Rng& rng) {
  Tree& tr = trees_[t];
  std::vector<int> candidates;
  for (int id : tr.leaves()) {
    if (tr.node(id).growable) candidates.push_back(id);
  }
  const int n_growable = static_cast<int>(candidates.size());
  const int n_prunable = static_cast<int>(tr.prunable().size());
  const int leaf = candidates[static_cast<std::size_t>(rng.uniform() * n_growable)];

  const std::vector<int> rows = rows_in(t, leaf);
  const std::vector<int> vars = splittable_vars(rows);
  if (vars.empty()) return false;
  const int var = vars[static_cast<std::size_t>(rng.uniform() * vars.size())];
  const std::vector<double> cuts = cutpoints(rows, var);
  if (cuts.empty()) return false;
  const double cut = cuts[static_cast<std::size_t>(rng.uniform() * cuts.size())];

  std::vector<int> left_rows;
  std::vector<int> right_rows;
  double sum_l = 0.0;
  double sum_r = 0.0;
  for (int i : rows) {
    if (w(i, var) < cut) {
      left_rows.push_back(i);
      sum_l += resid(i);
    } else {
      right_rows.push_back(i);
      sum_r += resid(i);
    }
  }
  if (left_rows.empty() || right_rows.empty()) return false;

  const bool grow_l = is_growable(left_rows);
  const bool grow_r = is_growable(right_rows);
  const int depth = tr.node(leaf).depth;
  const double ps = split_probability(cfg_, depth);
  const double ps_child = split_probability(cfg_, depth + 1);
  const double pl = grow_l ? ps_child : 0.0;
  const double pr = grow_r ? ps_child : 0.0;

  const int parent = tr.node(leaf).parent;
  bool parent_was_prunable = false;
  if (parent >= 0) {
    const Tree::Node& pn = tr.node(parent);
    parent_was_prunable = tr.node(pn.left).is_leaf() && tr.node(pn.right).is_leaf();
  }
  const int n_growable_new = n_growable - 1 + (grow_l ? 1 : 0) + (grow_r ? 1 : 0);
  const int n_prunable_new = n_prunable + 1 - (parent_was_prunable ? 1 : 0);

  double sum_all = sum_l + sum_r;
  const double log_ratio =
      std::log(prune_probability(n_growable_new, n_prunable_new)) - std::log(n_prunable_new) -
      std::log(grow_probability(n_growable, n_prunable)) + std::log(n_growable) + std::log(ps) +
      std::log1p(-pl) + std::log1p(-pr) - std::log1p(-ps) +
      log_marginal(left_rows.size(), sum_l, sigma2) + log_marginal(right_rows.size(), sum_r, sigma2) -
      log_marginal(rows.size(), sum_all, sigma2);

  if (std::log(rng.uniform()) >= log_ratio) return false;

  const auto [l, r] = tr.split(leaf, var, cut);
  tr.node(l).growable = grow_l;
  tr.node(r).growable = grow_r;
  auto& leaf_of = leaf_of_row_[t];
  for (int i : left_rows) leaf_of[i] = l;
  for (int i : right_rows) leaf_of[i] = r;
  return true;
}

bool TreeEnsemble::try_prune(int t, const Eigen::VectorXd& resid, double sigma2, Rng& rng) {
  Tree& tr = trees_[t];
  const std::vector<int> nodes = tr.prunable();
  const int n_prunable = static_cast<int>(nodes.size());
  const int n_growable = tr.num_growable_leaves();
  const int target = nodes[static_cast<std::size_t>(rng.uniform() * n_prunable)];
  const Tree::Node nd = tr.node(target);

  const std::vector<int> rows = rows_in(t, target);
  double sum_l = 0.0;
  double sum_r = 0.0;
  int n_l = 0;
  const auto& leaf_of = leaf_of_row_[t];
  for (int i : rows) {
    if (leaf_of[i] == nd.left) {
      sum_l += resid(i);
      ++n_l;
    } else {
      sum_r += resid(i);
    }
  }
  const int n_r = static_cast<int>(rows.size()) - n_l;

  const bool grow_l = tr.node(nd.left).growable;
  const bool grow_r = tr.node(nd.right).growable;
  const double ps = split_probability(cfg_, nd.depth);
  const double ps_child = split_probability(cfg_, nd.depth + 1);
  const double pl = grow_l ? ps_child : 0.0;
  const double pr = grow_r ? ps_child : 0.0;

  bool sibling_is_leaf = false;
  if (nd.parent >= 0) {
    const Tree::Node& pn = tr.node(nd.parent);
    const int sibling = pn.left == target ? pn.right : pn.left;
    sibling_is_leaf = tr.node(sibling).is_leaf();
  }
  const int n_growable_new = n_growable - (grow_l ? 1 : 0) - (grow_r ? 1 : 0) + 1;
  const int n_prunable_new = n_prunable - 1 + (sibling_is_leaf ? 1 : 0);

  const double log_ratio =
      std::log(grow_probability(n_growable_new, n_prunable_new)) - std::log(n_growable_new) -
      std::log(prune_probability(n_growable, n_prunable)) + std::log(n_prunable) +
      std::log1p(-ps) - std::log(ps) - std::log1p(-pl) - std::log1p(-pr) +
      log_marginal(rows.size(), sum_l + sum_r, sigma2) - log_marginal(n_l, sum_l, sigma2) -
      log_marginal(n_r, sum_r, sigma2);

  if (std::log(rng.uniform()) >= log_ratio) return false;

  tr.collapse(target);
  auto& leaf_of_mut = leaf_of_row_[t];
  for (int i : rows) leaf_of_mut[i] = target;
  return true;
}

void TreeEnsemble::draw_leaves(int t, const Eigen::VectorXd& resid, double sigma2, Rng& rng) {
  Tree& tr = trees_[t];
  const auto& leaf_of = leaf_of_row_[t];
  const std::vector<int> leaves = tr.leaves();
  // Node ids are small; accumulate sufficient statistics by id.
  int max_id = 0;
  for (int id : leaves) max_id = std::max(max_id, id);
  std::vector<double> sum(max_id + 1, 0.0);
  std::vector<double> count(max_id + 1, 0.0);
  for (std::size_t i = 0; i < leaf_of.size(); ++i) {
    sum[leaf_of[i]] += resid(static_cast<Eigen::Index>(i));
    count[leaf_of[i]] += 1.0;
  }
  const double prior_prec = 1.0 / (leaf_sd_ * leaf_sd_);
  for (int id : leaves) {
    const double var = 1.0 / (prior_prec + count[id] / sigma2);
    const double mean = var * sum[id] / sigma2;
    tr.node(id).value = mean + std::sqrt(var) * rng.normal();
  }
  Eigen::VectorXd& fit = fits_[t];
  for (std::size_t i = 0; i < leaf_of.size(); ++i) {
    fit(static_cast<Eigen::Index>(i)) = tr.node(leaf_of[i]).value;
  }
}

}  // namespace changeplane
