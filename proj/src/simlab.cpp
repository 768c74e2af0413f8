#include "changeplane/simlab.hpp"

#include "changeplane/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <thread>

namespace changeplane {

DgpSpec DgpSpec::make(int id, Eigen::Index n) {
  if (id < 1 || id > 5) throw ConfigError("dgp id must be in 1..5, got " + std::to_string(id));
  DgpSpec spec;
  spec.id = id;
  spec.n = n;
  spec.baseline = (id == 2 || id == 4) ? BaselineShape::nonlinear : BaselineShape::linear;
  spec.noise_covariates = (id == 3 || id == 4);
  spec.gamma0 = id == 5 ? 0.0 : 2.0;
  return spec;
}

Eigen::VectorXd DgpSpec::theta_star() {
  Eigen::VectorXd v(5);
  v << 1.0, -0.8, 0.7, 1.2, -1.5;
  return v;
}

Eigen::VectorXd DgpSpec::theta0() { return theta_star().normalized(); }

Eigen::VectorXd DgpSpec::beta0() {
  Eigen::VectorXd v(5);
  v << 1.0, -0.3, -0.4, -0.65, 0.4;
  return v;
}

Eigen::VectorXd DgpSpec::theta_true() const {
  Eigen::VectorXd th = Eigen::VectorXd::Zero(q());
  th.head(5) = theta0();
  return th;
}

double dgp_baseline(const DgpSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& w) {
  if (spec.baseline == BaselineShape::linear) return w.dot(DgpSpec::beta0().transpose());
  return 1.0 - 0.3 * w(1) * w(2) - 0.4 * std::exp(-std::abs(w(3))) -
         0.65 * std::log(w(4) * w(4)) + 0.4 * std::sin(std::numbers::pi * w(1));
}

Eigen::MatrixXd draw_boundary_covariates(Eigen::Index rows, Eigen::Index q, Rng& rng) {
  Eigen::MatrixXd z(rows, q);
  for (Eigen::Index i = 0; i < rows; ++i) {
    z(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < q; ++j) z(i, j) = rng.normal();
  }
  return z;
}

DgpSample generate_dgp(const DgpSpec& spec, std::uint64_t seed) {
  if (spec.n < 1) throw ConfigError("dgp sample size must be positive");
  Rng rng(seed);
  const Eigen::Index n = spec.n;
  const Eigen::VectorXd th0 = DgpSpec::theta0();
  DgpSample out;
  Dataset& d = out.data;
  d.y.resize(n);
  d.w.resize(n, 5);
  d.x.resize(n, 1);
  d.z.resize(n, spec.q());
  Eigen::Index members = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd w(5);
    do {
      w(0) = 1.0;
      for (int j = 1; j < 5; ++j) w(j) = rng.normal();
    } while (spec.baseline == BaselineShape::nonlinear && std::abs(w(4)) < 1e-12);
    const double x = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const bool member = w.dot(th0.transpose()) > 0.0;
    members += member ? 1 : 0;
    const double eps = rng.normal();
    d.w.row(i) = w;
    d.x(i, 0) = x;
    d.z.row(i).head(5) = w;
    for (Eigen::Index j = 5; j < spec.q(); ++j) d.z(i, j) = rng.normal();
    d.y(i) = dgp_baseline(spec, w) + spec.gamma0 * x * (member ? 1.0 : 0.0) + eps;
  }
  out.truth.gamma = Eigen::VectorXd::Constant(1, spec.gamma0);
  out.truth.theta = spec.theta_true();
  if (spec.baseline == BaselineShape::linear) {
    out.truth.beta = DgpSpec::beta0();
    out.truth.baseline_label = "linear";
  } else {
    out.truth.baseline_label = "nonlinear";
  }
  out.truth.subgroup_fraction = static_cast<double>(members) / static_cast<double>(n);
  return out;
}

double angular_error(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta0) {
  const double c = theta_hat.dot(theta0) / (theta_hat.norm() * theta0.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

double misclassification(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta0,
                         std::size_t mc_draws, std::uint64_t seed) {
  if (theta_hat.size() != theta0.size()) {
    throw std::invalid_argument("misclassification: direction lengths differ");
  }
  if (mc_draws == 0) throw std::invalid_argument("misclassification: need at least one draw");
  Rng rng(seed);
  const Eigen::Index q = theta0.size();
  std::size_t disagree = 0;
  Eigen::VectorXd z(q);
  for (std::size_t k = 0; k < mc_draws; ++k) {
    z(0) = 1.0;
    for (Eigen::Index j = 1; j < q; ++j) z(j) = rng.normal();
    if ((z.dot(theta_hat) >= 0.0) != (z.dot(theta0) >= 0.0)) ++disagree;
  }
  return static_cast<double>(disagree) / static_cast<double>(mc_draws);
}

std::uint64_t replicate_data_seed(std::uint64_t seed, int replicate) {
  return derive_seed(seed, 2 * static_cast<std::uint64_t>(replicate));
}

std::uint64_t replicate_chain_seed(std::uint64_t seed, int replicate) {
  return derive_seed(seed, 2 * static_cast<std::uint64_t>(replicate) + 1);
}

ReplicateResult run_replicate(const StudyConfig& cfg, int replicate) {
  ReplicateResult rr;
  rr.replicate = replicate;
  try {
    const DgpSample sample = generate_dgp(cfg.dgp, replicate_data_seed(cfg.seed, replicate));
    SamplerConfig sc = cfg.sampler;
    sc.seed = replicate_chain_seed(cfg.seed, replicate);
    const PosteriorDraws draws = run_gibbs(sample.data, sc);

    const auto gs = column_summaries(draws.gamma);
    const auto ts = column_summaries(draws.theta);
    rr.gamma_mean.resize(gs.size());
    rr.gamma_lower.resize(gs.size());
    rr.gamma_upper.resize(gs.size());
    for (std::size_t k = 0; k < gs.size(); ++k) {
      rr.gamma_mean(k) = gs[k].mean;
      rr.gamma_lower(k) = gs[k].lower;
      rr.gamma_upper(k) = gs[k].upper;
    }
    rr.theta_mean.resize(ts.size());
    rr.theta_lower.resize(ts.size());
    rr.theta_upper.resize(ts.size());
    for (std::size_t j = 0; j < ts.size(); ++j) {
      rr.theta_mean(j) = ts[j].mean;
      rr.theta_lower(j) = ts[j].lower;
      rr.theta_upper(j) = ts[j].upper;
    }
    const PrincipalDirection pd = posterior_principal_direction(draws);
    rr.theta_hat = pd.theta_hat;
    rr.lambda_max = pd.lambda_max;
    rr.angle = angular_error(pd.theta_hat, sample.truth.theta);
    rr.misclass = misclassification(pd.theta_hat, sample.truth.theta, cfg.misclass_draws,
                                    derive_seed(replicate_data_seed(cfg.seed, replicate), 1));
    rr.prob_h = prob_heterogeneity(draws, cfg.decision);
    rr.action = bayes_action(rr.prob_h, cfg.decision);
    rr.ok = true;
  } catch (const std::exception& e) {
    rr.ok = false;
    rr.error = e.what();
  }
  return rr;
}

namespace {

struct Accumulator {
  double sum_err = 0.0, sum_sq = 0.0, sum_len = 0.0;
  double covered = 0.0, count = 0.0;
  void add(double est, double lo, double hi, double truth) {
    sum_err += est - truth;
    sum_sq += (est - truth) * (est - truth);
    sum_len += hi - lo;
    covered += (lo <= truth && truth <= hi) ? 1.0 : 0.0;
    count += 1.0;
  }
  void emit(const std::string& name, std::vector<MetricRow>& out) const {
    if (count == 0.0) return;
    const double cp = covered / count;
    out.push_back({name, "bias", sum_err / count});
    out.push_back({name, "rmse", std::sqrt(sum_sq / count)});
    out.push_back({name, "ail", sum_len / count});
    out.push_back({name, "cp", cp});
    out.push_back({name, "cp_se", std::sqrt(cp * (1.0 - cp) / count)});
  }
};

}  // namespace

std::vector<MetricRow> aggregate(const std::vector<ReplicateResult>& reps, const DgpTruth& truth,
                                 Eigen::Index active_q) {
  std::vector<MetricRow> out;
  const Eigen::Index r = truth.gamma.size();
  const Eigen::Index q = truth.theta.size();
  std::vector<Accumulator> gamma(r), theta(std::min(active_q, q));
  Accumulator inactive;
  double angle = 0.0, misclass = 0.0, lambda = 0.0, prob = 0.0, a1 = 0.0, ok = 0.0;
  for (const auto& rr : reps) {
    if (!rr.ok) continue;
    ok += 1.0;
    for (Eigen::Index k = 0; k < r; ++k) {
      gamma[k].add(rr.gamma_mean(k), rr.gamma_lower(k), rr.gamma_upper(k), truth.gamma(k));
    }
    for (Eigen::Index j = 0; j < q; ++j) {
      if (j < active_q) {
        theta[j].add(rr.theta_mean(j), rr.theta_lower(j), rr.theta_upper(j), truth.theta(j));
      } else {
        inactive.add(rr.theta_mean(j), rr.theta_lower(j), rr.theta_upper(j), truth.theta(j));
      }
    }
    angle += rr.angle;
    misclass += rr.misclass;
    lambda += rr.lambda_max;
    prob += rr.prob_h;
    a1 += rr.action == Action::a1 ? 1.0 : 0.0;
  }
  for (Eigen::Index k = 0; k < r; ++k) {
    gamma[k].emit(r == 1 ? "gamma" : "gamma[" + std::to_string(k + 1) + "]", out);
  }
  for (std::size_t j = 0; j < theta.size(); ++j) {
    theta[j].emit("theta[" + std::to_string(j + 1) + "]", out);
  }
  inactive.emit("theta_inactive", out);
  if (ok > 0.0) {
    out.push_back({"direction", "angle", angle / ok});
    out.push_back({"direction", "misclass", misclass / ok});
    out.push_back({"direction", "lambda_max", lambda / ok});
    out.push_back({"decision", "prob_h_delta", prob / ok});
    out.push_back({"decision", "a1_frequency", a1 / ok});
    out.push_back({"decision", "a0_frequency", 1.0 - a1 / ok});
  }
  out.push_back({"study", "replicates_ok", ok});
  out.push_back({"study", "failures", static_cast<double>(reps.size()) - ok});
  return out;
}

double SimResult::metric(const std::string& parameter, const std::string& name) const {
  for (const auto& m : metrics) {
    if (m.parameter == parameter && m.metric == name) return m.value;
  }
  throw std::out_of_range("no metric " + parameter + "/" + name);
}

SimResult run_study(const StudyConfig& cfg, const std::function<void(int, int)>& progress) {
  cfg.sampler.validate();
  cfg.decision.validate();
  if (cfg.n_replicates < 1) throw ConfigError("n_replicates must be at least 1");

  SimResult result;
  result.replicates.resize(static_cast<std::size_t>(cfg.n_replicates));
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cfg.n_replicates));

  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (int rep = next++; rep < cfg.n_replicates; rep = next++) {
      result.replicates[static_cast<std::size_t>(rep)] = run_replicate(cfg, rep);
      const int finished = ++done;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(finished, cfg.n_replicates);
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  DgpTruth truth;
  truth.gamma = Eigen::VectorXd::Constant(1, cfg.dgp.gamma0);
  truth.theta = cfg.dgp.theta_true();
  result.metrics = aggregate(result.replicates, truth, 5);
  for (const auto& rr : result.replicates) result.failures += rr.ok ? 0 : 1;
  return result;
}

void write_study_csv(std::ostream& os, const StudyConfig& cfg, const SimResult& result,
                     bool header) {
  if (header) os << "dgp,method,parameter,metric,value\n";
  os << std::setprecision(10);
  for (const auto& m : result.metrics) {
    os << cfg.dgp.id << ',' << cfg.method << ',' << m.parameter << ',' << m.metric << ','
       << m.value << '\n';
  }
}

void write_study_summary(std::ostream& os, const StudyConfig& cfg, const SimResult& result) {
  os << "DGP " << cfg.dgp.id << "  method " << cfg.method << "  replicates "
     << cfg.n_replicates << "  failures " << result.failures << '\n';
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, double>> table;
  for (const auto& m : result.metrics) {
    if (!table.count(m.parameter)) order.push_back(m.parameter);
    table[m.parameter][m.metric] = m.value;
  }
  os << std::left << std::setw(16) << "parameter" << std::right;
  for (const char* h : {"bias", "rmse", "ail", "cp"}) os << std::setw(10) << h;
  os << '\n' << std::fixed << std::setprecision(3);
  for (const auto& p : order) {
    const auto& row = table[p];
    if (!row.count("bias")) continue;
    os << std::left << std::setw(16) << p << std::right;
    for (const char* h : {"bias", "rmse", "ail", "cp"}) os << std::setw(10) << row.at(h);
    os << '\n';
  }
  for (const auto& p : order) {
    const auto& row = table[p];
    if (row.count("bias")) continue;
    for (const auto& [k, v] : row) os << p << '.' << k << " = " << v << '\n';
  }
  os.unsetf(std::ios::fixed);
}

std::vector<TauRow> tau_sensitivity(const Dataset& data, const SamplerConfig& base,
                                    const std::vector<double>& grid,
                                    const DecisionConfig& decision) {
  std::vector<TauRow> out;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    SamplerConfig sc = base;
    sc.tau = grid[k];
    sc.seed = derive_seed(base.seed, k);
    const PosteriorDraws draws = run_gibbs(data, sc);
    TauRow row;
    row.tau = grid[k];
    row.gray_zone_width = SmoothingScale(grid[k]).gray_zone_width();
    row.report = build_report(draws, data, decision);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace changeplane
