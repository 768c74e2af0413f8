// Command-line front end: fit, simulate, report, theory-lab, tau-grid.

#include "changeplane/error.hpp"
#include "changeplane/io.hpp"
#include "changeplane/reporting.hpp"
#include "changeplane/samplers.hpp"
#include "changeplane/simlab.hpp"
#include "changeplane/theory.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace changeplane;

namespace {

int emit_error(const char* type, int code, const std::string& message) {
  nlohmann::json rec = {{"error", {{"type", type}, {"exit_code", code}, {"message", message}}}};
  std::cerr << rec.dump() << std::endl;
  return code;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

void warn_unused(const KeyValueConfig& kv) {
  for (const auto& k : kv.unused_keys()) std::cerr << "warning: unused config key '" << k << "'\n";
}

DecisionReport report_with_notes(const PosteriorDraws& draws, const LoadedData& ld,
                                 const DecisionConfig& dc) {
  DecisionReport rep = build_report(draws, ld.data, dc);
  if (ld.w_x_overlap) {
    rep.notes.push_back("treatment columns also appear among baseline columns; gamma is then a "
                        "contrast net of their baseline coefficients");
  }
  return rep;
}

void write_report_files(const fs::path& dir, const DecisionReport& rep) {
  open_out(dir / "report.json") << report_to_json(rep) << '\n';
  auto mem = open_out(dir / "membership.csv");
  write_membership_csv(mem, rep);
}

PosteriorDraws thin_draws(const PosteriorDraws& raw, std::size_t thin) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < raw.n_kept(); ++k) {
    if ((static_cast<std::size_t>(k) + 1) % thin == 0) keep.push_back(k);
  }
  PosteriorDraws out;
  out.beta = raw.beta(keep, Eigen::all);
  out.gamma = raw.gamma(keep, Eigen::all);
  out.theta = raw.theta(keep, Eigen::all);
  out.sigma2 = raw.sigma2(keep);
  out.n_iter = raw.n_iter;
  out.n_burn = raw.n_burn;
  out.thin = thin;
  out.tau = raw.tau;
  return out;
}

int cmd_fit(const std::string& config_path, const std::string& out_override, bool has_seed,
            std::uint64_t seed) {
  KeyValueConfig kv = KeyValueConfig::load(config_path);
  RunConfig rc = run_config_from(kv);
  if (has_seed) rc.sampler.seed = seed;
  if (!out_override.empty()) rc.output_dir = out_override;
  if (rc.input.empty()) throw ConfigError("missing required key 'data.input'");
  warn_unused(kv);
  const LoadedData ld = load_csv(rc.input, rc.roles);
  fs::create_directories(rc.output_dir);
  const fs::path dir(rc.output_dir);
  PosteriorDraws draws;
  if (rc.keep_raw_chain) {
    // Thinning does not touch the random stream, so the thinned draws are a
    // row subset of the raw chain.
    SamplerConfig raw_cfg = rc.sampler;
    raw_cfg.thin = 1;
    const PosteriorDraws raw = run_gibbs(ld.data, raw_cfg);
    save_draws((dir / "raw_chain.csv").string(), raw);
    draws = thin_draws(raw, rc.sampler.thin);
  } else {
    draws = run_gibbs(ld.data, rc.sampler);
  }
  save_draws((dir / "draws.csv").string(), draws);
  const DecisionReport rep = report_with_notes(draws, ld, rc.decision);
  write_report_files(dir, rep);
  std::cout << report_to_json(rep) << '\n';
  return 0;
}

int cmd_report(const std::string& draws_path, const std::string& config_path,
               const std::vector<double>& deltas, const std::vector<double>& p_reports,
               const std::string& out_dir) {
  const PosteriorDraws draws = load_draws(draws_path);
  DecisionConfig base;
  Eigen::MatrixXd z;
  std::optional<LoadedData> ld;
  if (!config_path.empty()) {
    KeyValueConfig kv = KeyValueConfig::load(config_path);
    const RunConfig rc = run_config_from(kv);
    base = rc.decision;
    if (!rc.input.empty()) ld = load_csv(rc.input, rc.roles);
  }
  if (deltas.size() <= 1 && p_reports.size() <= 1) {
    DecisionConfig dc = base;
    if (!deltas.empty()) dc.delta = deltas.front();
    if (!p_reports.empty()) {
      const DecisionConfig t = DecisionConfig::with_threshold(dc.delta, p_reports.front());
      dc.cost_fp = t.cost_fp;
      dc.cost_fn = t.cost_fn;
    }
    const DecisionReport rep = ld ? report_with_notes(draws, *ld, dc) : build_report(draws, z, dc);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      write_report_files(out_dir, rep);
    }
    std::cout << report_to_json(rep) << '\n';
    return 0;
  }
  // Action grid: one row per delta, one column per threshold.
  const std::vector<double> ds = deltas.empty() ? std::vector<double>{base.delta} : deltas;
  const std::vector<double> ps = p_reports.empty() ? std::vector<double>{base.p_report()} : p_reports;
  std::ostringstream grid;
  grid << "delta,prob_h_delta";
  for (double p : ps) grid << ",action@" << p;
  grid << '\n';
  for (double d : ds) {
    DecisionConfig dc = base;
    dc.delta = d;
    const double prob = prob_heterogeneity(draws, dc);
    grid << d << ',' << format_double(prob);
    for (double p : ps) {
      const DecisionConfig t = DecisionConfig::with_threshold(d, p);
      grid << ',' << to_string(bayes_action(prob, t));
    }
    grid << '\n';
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    open_out(fs::path(out_dir) / "action_grid.csv") << grid.str();
  }
  std::cout << grid.str();
  return 0;
}

struct SimulateArgs {
  int dgp = 1;
  long long n = 500;
  int replicates = 100;
  std::size_t iters = 8000;
  std::size_t burn = 3000;
  std::size_t thin = 1;
  double tau = 0.035;
  std::uint64_t seed = 1;
  std::string baseline = "parametric";
  std::string theta_prior = "uniform_hemisphere";
  int num_trees = 200;
  double delta = 1.0;
  double p_report = 0.9;
  unsigned threads = 0;
  std::string out;
  std::string config;
};

int cmd_simulate(SimulateArgs a) {
  StudyConfig sc;
  if (!a.config.empty()) {
    KeyValueConfig kv = KeyValueConfig::load(a.config);
    sc.sampler = sampler_config_from(kv);
    sc.decision = decision_config_from(kv);
    a.dgp = static_cast<int>(kv.get_int("study.dgp", a.dgp));
    a.n = kv.get_int("study.n", a.n);
    a.replicates = static_cast<int>(kv.get_int("study.replicates", a.replicates));
    a.seed = kv.get_uint64("study.seed", a.seed);
    a.threads = static_cast<unsigned>(kv.get_int("study.threads", a.threads));
    sc.method = kv.get("study.method", to_string(sc.sampler.baseline));
    warn_unused(kv);
  } else {
    sc.sampler.n_iter = a.iters;
    sc.sampler.n_burn = a.burn;
    sc.sampler.thin = a.thin;
    sc.sampler.tau = a.tau;
    sc.sampler.baseline = parse_baseline(a.baseline);
    sc.sampler.theta_prior = parse_theta_prior(a.theta_prior);
    sc.sampler.trees.num_trees = a.num_trees;
    sc.decision = DecisionConfig::with_threshold(a.delta, a.p_report);
    sc.method = a.baseline + (sc.sampler.theta_prior == ThetaPrior::horseshoe ? "_hs" : "");
  }
  sc.sampler.validate();
  if (a.n < 1) throw ConfigError("n must be positive");
  sc.dgp = DgpSpec::make(a.dgp, a.n);
  sc.n_replicates = a.replicates;
  sc.seed = a.seed;
  sc.threads = a.threads;
  const SimResult res = run_study(sc, [](int done, int total) {
    std::cerr << "\rreplicate " << done << "/" << total << std::flush;
  });
  std::cerr << '\n';
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    write_study_csv(out, sc, res);
  } else {
    write_study_csv(std::cout, sc, res);
  }
  write_study_summary(std::cerr, sc, res);
  for (const auto& rr : res.replicates) {
    if (!rr.ok) std::cerr << "replicate " << rr.replicate << " failed: " << rr.error << '\n';
  }
  return 0;
}

int cmd_theory(std::size_t mc_draws, int budget, long long rows, std::uint64_t seed,
               const std::string& out) {
  std::ostringstream os;
  os << "section,key,value\n";
  const std::vector<double> taus{0.2, 0.1, 0.05, 0.025};
  const MarginSlope ms = gaussian_margin_slope(taus, mc_draws, seed);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    os << "gate_error,tau=" << taus[k] << ',' << format_double(ms.errors[k].value) << '\n';
    os << "gate_error_se,tau=" << taus[k] << ',' << format_double(ms.errors[k].se) << '\n';
  }
  os << "gate_error,slope," << format_double(ms.fit.slope) << '\n';

  const PseudoTruePath path = pseudo_true_path(DgpSpec::make(1), taus, budget, rows, derive_seed(seed, 1));
  for (const auto& pt : path.points) {
    os << "pseudo_true,distance@tau=" << pt.tau << ',' << format_double(pt.distance) << '\n';
    os << "pseudo_true,gamma@tau=" << pt.tau << ',' << format_double(pt.eta.gamma(0)) << '\n';
    os << "pseudo_true,converged@tau=" << pt.tau << ',' << (pt.converged ? 1 : 0) << '\n';
  }
  os << "pseudo_true,rate," << format_double(path.rate.slope) << '\n';

  for (double rho : {1.0 / 10, 1.0 / 8, 1.0 / 6, 1.0 / 4}) {
    for (double alpha : {2.0, 4.0, 6.0}) {
      const Feasibility f = schedule_feasibility(alpha, rho);
      os << "feasibility,rho=" << rho << " alpha=" << alpha << ",tv=" << f.tv_bvm_ok
         << " shift=" << f.shift_removed << " both=" << f.both << '\n';
    }
  }
  if (!out.empty()) open_out(out) << os.str();
  std::cout << os.str();
  return 0;
}

int cmd_tau_grid(const std::string& config_path, const std::vector<double>& taus,
                 const std::string& out_override) {
  KeyValueConfig kv = KeyValueConfig::load(config_path);
  RunConfig rc = run_config_from(kv);
  if (rc.input.empty()) throw ConfigError("missing required key 'data.input'");
  warn_unused(kv);
  const LoadedData ld = load_csv(rc.input, rc.roles);
  const auto rows = tau_sensitivity(ld.data, rc.sampler, taus, rc.decision);
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = nlohmann::json::parse(report_to_json(r.report));
    j["tau"] = r.tau;
    j["gray_zone_width"] = r.gray_zone_width;
    arr.push_back(j);
  }
  const std::string out_dir = out_override.empty() ? rc.output_dir : out_override;
  fs::create_directories(out_dir);
  open_out(fs::path(out_dir) / "tau_grid.json") << arr.dump(2) << '\n';
  std::cout << arr.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian change-plane regression: fit, simulate, report"};
  app.require_subcommand(1);

  std::string config, out, draws;
  std::uint64_t seed = 1;
  auto* fit = app.add_subcommand("fit", "Run the Gibbs sampler on a CSV dataset");
  fit->add_option("-c,--config", config, "Run configuration file")->required();
  fit->add_option("-o,--output", out, "Output directory (overrides output.dir)");
  auto* seed_opt = fit->add_option("--seed", seed, "Override sampler.seed");

  std::vector<double> deltas, p_reports;
  auto* report = app.add_subcommand("report", "Recompute the decision report from stored draws");
  report->add_option("-d,--draws", draws, "Draws file written by fit")->required();
  report->add_option("-c,--config", config, "Run configuration (decision defaults, data for q-bar)");
  report->add_option("--delta", deltas, "Threshold(s) delta")->delimiter(',');
  report->add_option("--p-report", p_reports, "Reporting threshold(s)")->delimiter(',');
  report->add_option("-o,--output", out, "Output directory");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Replicate study on a simulation design");
  sim->add_option("-c,--config", sa.config, "Study configuration file");
  sim->add_option("--dgp", sa.dgp, "Design 1-5");
  sim->add_option("--n", sa.n, "Sample size");
  sim->add_option("--replicates", sa.replicates, "Number of replicates");
  sim->add_option("--iters", sa.iters, "Gibbs iterations");
  sim->add_option("--burn", sa.burn, "Burn-in iterations");
  sim->add_option("--thin", sa.thin, "Thinning");
  sim->add_option("--tau", sa.tau, "Smoothing scale");
  sim->add_option("--seed", sa.seed, "Study seed");
  sim->add_option("--baseline", sa.baseline, "parametric or trees");
  sim->add_option("--theta-prior", sa.theta_prior, "uniform_hemisphere or horseshoe");
  sim->add_option("--trees", sa.num_trees, "Number of trees");
  sim->add_option("--delta", sa.delta, "Decision threshold delta");
  sim->add_option("--p-report", sa.p_report, "Reporting threshold");
  sim->add_option("--threads", sa.threads, "Worker threads (0 = all cores)");
  sim->add_option("-o,--output", sa.out, "CSV output path (default stdout)");

  std::size_t mc_draws = 1000000;
  int budget = 2000;
  long long rows = 100000;
  std::uint64_t theory_seed = 1;
  std::string theory_out;
  auto* theory = app.add_subcommand("theory-lab", "Gate error, pseudo-true path and schedule checks");
  theory->add_option("--mc", mc_draws, "Monte Carlo draws for the gate error");
  theory->add_option("--budget", budget, "Optimizer evaluations per tau");
  theory->add_option("--rows", rows, "Covariate rows for the pseudo-true objective");
  theory->add_option("--seed", theory_seed, "Seed");
  theory->add_option("-o,--output", theory_out, "CSV output path");

  std::vector<double> taus{0.01, 0.035, 0.1};
  auto* tau_grid = app.add_subcommand("tau-grid", "Decision report across smoothing scales");
  tau_grid->add_option("-c,--config", config, "Run configuration file")->required();
  tau_grid->add_option("--taus", taus, "Smoothing scales")->delimiter(',');
  tau_grid->add_option("-o,--output", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return emit_error("ConfigError", 2, e.what());
  }

  try {
    if (*fit) return cmd_fit(config, out, seed_opt->count() > 0, seed);
    if (*report) return cmd_report(draws, config, deltas, p_reports, out);
    if (*sim) return cmd_simulate(sa);
    if (*theory) return cmd_theory(mc_draws, budget, rows, theory_seed, theory_out);
    if (*tau_grid) return cmd_tau_grid(config, taus, out);
  } catch (const ConfigError& e) {
    return emit_error("ConfigError", 2, e.what());
  } catch (const DataError& e) {
    return emit_error("DataError", 3, e.what());
  } catch (const NumericalError& e) {
    return emit_error("NumericalError", 4, e.what());
  } catch (const std::exception& e) {
    return emit_error("InternalError", 1, e.what());
  }
  return 0;
}
