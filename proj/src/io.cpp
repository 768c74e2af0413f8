#include "changeplane/io.hpp"

#include "changeplane/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace changeplane {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// KeyValueConfig

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
  KeyValueConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values_.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
    cfg.values_[full] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  return it->second;
}

std::string KeyValueConfig::require(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required key '" + key + "'");
  used_[key] = true;
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  double v = 0.0;
  if (!parse_double(get(key, ""), v)) {
    throw ConfigError("key '" + key + "': expected a number, got '" + get(key, "") + "'");
  }
  return v;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  if (!has(key)) return fallback;
  const std::string t = get(key, "");
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + t + "'");
  }
  return v;
}

std::uint64_t KeyValueConfig::get_uint64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string t = get(key, "");
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + t + "'");
  }
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string t = lower(get(key, ""));
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + t + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
  if (!has(key)) return {};
  return split_list(get(key, ""));
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : get_list(key)) {
    double v = 0.0;
    if (!parse_double(item, v)) throw ConfigError("key '" + key + "': '" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

void standardize_columns(Eigen::MatrixXd& m) {
  const double n = static_cast<double>(m.rows());
  if (m.rows() < 2) return;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double mean = m.col(j).mean();
    const double sd = std::sqrt((m.col(j).array() - mean).square().sum() / (n - 1.0));
    if (!(sd > 0.0)) continue;
    m.col(j) = (m.col(j).array() - mean) / sd;
  }
}

LoadedData load_csv(std::istream& in, const ColumnRoles& roles, const std::string& source) {
  if (roles.outcome.empty()) throw ConfigError("no outcome column configured");
  if (roles.treatment.empty()) throw ConfigError("no treatment columns configured");
  if (roles.boundary.empty()) throw ConfigError("no boundary columns configured");
  if (roles.baseline.empty() && !roles.add_intercept) {
    throw ConfigError("no baseline columns configured and intercept disabled");
  }
  auto check_disjoint = [](const std::vector<std::string>& cols, const char* role) {
    std::set<std::string> seen;
    for (const auto& c : cols) {
      if (!seen.insert(c).second) {
        throw ConfigError(std::string("column '") + c + "' listed twice among " + role + " columns");
      }
    }
  };
  check_disjoint(roles.baseline, "baseline");
  check_disjoint(roles.treatment, "treatment");
  check_disjoint(roles.boundary, "boundary");

  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError(source + ": file is empty (no header row)");
  std::map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j].empty()) throw DataError(source + ": header column " + std::to_string(j + 1) + " is unnamed");
    if (!index.emplace(header[j], j).second) {
      throw DataError(source + ": duplicate header column '" + header[j] + "'");
    }
  }
  auto column = [&](const std::string& name, const char* role) {
    const auto it = index.find(name);
    if (it == index.end()) {
      throw DataError(source + ": " + role + " column '" + name + "' not found in header");
    }
    return it->second;
  };
  const std::size_t y_col = column(roles.outcome, "outcome");
  std::vector<std::size_t> w_cols, x_cols, z_cols;
  for (const auto& c : roles.baseline) w_cols.push_back(column(c, "baseline"));
  for (const auto& c : roles.treatment) x_cols.push_back(column(c, "treatment"));
  for (const auto& c : roles.boundary) z_cols.push_back(column(c, "boundary"));

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(source + ": row " + std::to_string(lineno) + " has " +
                      std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(header.size()));
    }
    std::vector<double> vals(cells.size(), 0.0);
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const bool needed = j == y_col || std::count(w_cols.begin(), w_cols.end(), j) ||
                          std::count(x_cols.begin(), x_cols.end(), j) ||
                          std::count(z_cols.begin(), z_cols.end(), j);
      if (!needed) continue;
      if (!parse_double(cells[j], vals[j]) || !std::isfinite(vals[j])) {
        throw DataError(source + ": row " + std::to_string(lineno) + ", column '" + header[j] +
                        "': non-numeric or non-finite value '" + cells[j] + "'");
      }
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataError(source + ": no data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  LoadedData out;
  Dataset& d = out.data;
  d.y.resize(n);
  const Eigen::Index icpt = roles.add_intercept ? 1 : 0;
  d.w.resize(n, icpt + static_cast<Eigen::Index>(w_cols.size()));
  d.x.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  const auto nz = static_cast<Eigen::Index>(z_cols.size());
  const Eigen::Index n_inter = roles.interactions ? nz * (nz - 1) / 2 : 0;
  d.z.resize(n, icpt + nz + n_inter);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    d.y(i) = r[y_col];
    if (icpt) d.w(i, 0) = 1.0;
    for (std::size_t j = 0; j < w_cols.size(); ++j) d.w(i, icpt + static_cast<Eigen::Index>(j)) = r[w_cols[j]];
    for (std::size_t j = 0; j < x_cols.size(); ++j) d.x(i, static_cast<Eigen::Index>(j)) = r[x_cols[j]];
    if (icpt) d.z(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < nz; ++j) d.z(i, icpt + j) = r[z_cols[static_cast<std::size_t>(j)]];
  }
  if (icpt) {
    out.w_names.push_back("(intercept)");
    out.z_names.push_back("(intercept)");
  }
  for (const auto& c : roles.baseline) out.w_names.push_back(c);
  for (const auto& c : roles.treatment) out.x_names.push_back(c);
  for (const auto& c : roles.boundary) out.z_names.push_back(c);
  if (roles.interactions) {
    Eigen::Index col = icpt + nz;
    for (Eigen::Index a = 0; a < nz; ++a) {
      for (Eigen::Index b = a + 1; b < nz; ++b) {
        d.z.col(col++) = d.z.col(icpt + a).cwiseProduct(d.z.col(icpt + b));
        out.z_names.push_back(roles.boundary[static_cast<std::size_t>(a)] + ":" +
                              roles.boundary[static_cast<std::size_t>(b)]);
      }
    }
  }
  if (roles.standardize_z) standardize_columns(d.z);
  for (const auto& c : roles.treatment) {
    if (std::count(roles.baseline.begin(), roles.baseline.end(), c)) out.w_x_overlap = true;
  }
  d.validate();
  return out;
}

LoadedData load_csv(const std::string& path, const ColumnRoles& roles) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return load_csv(in, roles, path);
}

// ---------------------------------------------------------------------------
// Run configuration

SamplerConfig sampler_config_from(const KeyValueConfig& kv) {
  SamplerConfig s;
  auto count = [&](const std::string& key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError("key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  s.n_iter = count("sampler.n_iter", s.n_iter);
  s.n_burn = count("sampler.n_burn", s.n_burn);
  s.thin = count("sampler.thin", s.thin);
  s.tau = kv.get_double("sampler.tau", s.tau);
  s.seed = kv.get_uint64("sampler.seed", s.seed);
  s.prior_beta_var = kv.get_double("sampler.prior_beta_var", s.prior_beta_var);
  s.prior_gamma_var = kv.get_double("sampler.prior_gamma_var", s.prior_gamma_var);
  const auto gm = kv.get_double_list("sampler.prior_gamma_mean");
  if (!gm.empty()) s.prior_gamma_mean = Eigen::Map<const Eigen::VectorXd>(gm.data(), static_cast<Eigen::Index>(gm.size()));
  s.sigma_a = kv.get_double("sampler.sigma_a", s.sigma_a);
  s.sigma_b = kv.get_double("sampler.sigma_b", s.sigma_b);
  s.theta_prior = parse_theta_prior(kv.get("sampler.theta_prior", to_string(s.theta_prior)));
  s.baseline = parse_baseline(kv.get("sampler.baseline", to_string(s.baseline)));
  s.trees.num_trees = static_cast<int>(kv.get_int("trees.num_trees", s.trees.num_trees));
  s.trees.alpha = kv.get_double("trees.alpha", s.trees.alpha);
  s.trees.beta = kv.get_double("trees.beta", s.trees.beta);
  s.trees.k = kv.get_double("trees.k", s.trees.k);
  s.trees.c = kv.get_double("trees.c", s.trees.c);
  s.validate();
  return s;
}

DecisionConfig decision_config_from(const KeyValueConfig& kv) {
  DecisionConfig d;
  d.delta = kv.get_double("decision.delta", d.delta);
  if (kv.has("decision.p_report")) {
    if (kv.has("decision.cost_fp") || kv.has("decision.cost_fn")) {
      throw ConfigError("give either decision.p_report or decision.cost_fp/cost_fn, not both");
    }
    d = DecisionConfig::with_threshold(d.delta, kv.get_double("decision.p_report", 0.9));
  } else {
    d.cost_fp = kv.get_double("decision.cost_fp", d.cost_fp);
    d.cost_fn = kv.get_double("decision.cost_fn", d.cost_fn);
  }
  const std::string contrast = lower(kv.get("decision.contrast", "coordinate"));
  if (contrast == "coordinate") {
    d.contrast = ContrastKind::coordinate;
    const long long idx = kv.get_int("decision.coordinate", 1);
    if (idx < 1) throw ConfigError("decision.coordinate is 1-based and must be >= 1");
    d.coordinate = idx - 1;
  } else if (contrast == "vector") {
    d.contrast = ContrastKind::vector;
    const auto v = kv.get_double_list("decision.contrast_vector");
    if (v.empty()) throw ConfigError("decision.contrast = vector needs decision.contrast_vector");
    d.contrast_vector = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  } else if (contrast == "l2" || contrast == "l2_norm" || contrast == "norm") {
    d.contrast = ContrastKind::l2_norm;
  } else {
    throw ConfigError("unknown decision.contrast '" + contrast + "'");
  }
  d.validate();
  return d;
}

RunConfig run_config_from(const KeyValueConfig& kv) {
  RunConfig rc;
  rc.input = kv.get("data.input", "");
  rc.roles.outcome = kv.get("data.outcome", "");
  rc.roles.baseline = kv.get_list("data.baseline");
  rc.roles.treatment = kv.get_list("data.treatment");
  rc.roles.boundary = kv.get_list("data.boundary");
  rc.roles.add_intercept = kv.get_bool("data.intercept", true);
  rc.roles.interactions = kv.get_bool("data.interactions", false);
  rc.roles.standardize_z = kv.get_bool("data.standardize_boundary", false);
  rc.sampler = sampler_config_from(kv);
  rc.decision = decision_config_from(kv);
  rc.output_dir = kv.get("output.dir", rc.output_dir);
  rc.keep_raw_chain = kv.get_bool("output.keep_raw_chain", false);
  return rc;
}

// ---------------------------------------------------------------------------
// Draws

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_draws(std::ostream& os, const PosteriorDraws& draws) {
  const Eigen::Index p = draws.beta.cols(), r = draws.gamma.cols(), q = draws.theta.cols();
  os << "# changeplane-draws v1\n";
  os << "# n_kept=" << draws.n_kept() << " n_iter=" << draws.n_iter << " n_burn=" << draws.n_burn
     << " thin=" << draws.thin << " tau=" << format_double(draws.tau) << " p=" << p << " r=" << r
     << " q=" << q << "\n";
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("beta[" + std::to_string(j + 1) + "]");
  for (Eigen::Index j = 0; j < r; ++j) names.push_back("gamma[" + std::to_string(j + 1) + "]");
  for (Eigen::Index j = 0; j < q; ++j) names.push_back("theta[" + std::to_string(j + 1) + "]");
  names.push_back("sigma2");
  for (std::size_t k = 0; k < names.size(); ++k) os << (k ? "," : "") << names[k];
  os << '\n';
  std::string row;
  for (Eigen::Index i = 0; i < draws.n_kept(); ++i) {
    row.clear();
    for (Eigen::Index j = 0; j < p; ++j) row += format_double(draws.beta(i, j)) + ",";
    for (Eigen::Index j = 0; j < r; ++j) row += format_double(draws.gamma(i, j)) + ",";
    for (Eigen::Index j = 0; j < q; ++j) row += format_double(draws.theta(i, j)) + ",";
    row += format_double(draws.sigma2(i));
    os << row << '\n';
  }
}

PosteriorDraws read_draws(std::istream& in, const std::string& source) {
  std::string line;
  int lineno = 0;
  std::map<std::string, std::string> meta;
  bool tagged = false;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("changeplane-draws v1") != std::string::npos) tagged = true;
      std::stringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq != std::string::npos) meta[tok.substr(0, eq)] = tok.substr(eq + 1);
      }
      continue;
    }
    names = split_csv_line(line);
    break;
  }
  if (!tagged) throw DataError(source + ": not a draws file (missing format tag)");
  auto meta_int = [&](const char* key) -> long long {
    const auto it = meta.find(key);
    if (it == meta.end()) throw DataError(source + ": header lacks '" + key + "'");
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (ec != std::errc() || v < 0) throw DataError(source + ": bad header value for '" + key + "'");
    return v;
  };
  const Eigen::Index p = meta_int("p"), r = meta_int("r"), q = meta_int("q");
  const long long n_kept = meta_int("n_kept");
  if (static_cast<Eigen::Index>(names.size()) != p + r + q + 1) {
    throw DataError(source + ": column count does not match the header dimensions");
  }
  PosteriorDraws d;
  d.n_iter = static_cast<std::size_t>(meta_int("n_iter"));
  d.n_burn = static_cast<std::size_t>(meta_int("n_burn"));
  d.thin = static_cast<std::size_t>(meta_int("thin"));
  if (!meta.count("tau") || !parse_double(meta["tau"], d.tau)) throw DataError(source + ": bad tau");
  d.beta.resize(n_kept, p);
  d.gamma.resize(n_kept, r);
  d.theta.resize(n_kept, q);
  d.sigma2.resize(n_kept);
  Eigen::Index i = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (i >= n_kept) throw DataError(source + ": more rows than n_kept=" + std::to_string(n_kept));
    const auto cells = split_csv_line(line);
    if (cells.size() != names.size()) {
      throw DataError(source + ": row " + std::to_string(lineno) + " has the wrong number of cells");
    }
    std::vector<double> v(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!parse_double(cells[j], v[j])) {
        throw DataError(source + ": row " + std::to_string(lineno) + ", column '" + names[j] +
                        "': not a number");
      }
    }
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < p; ++j) d.beta(i, j) = v[c++];
    for (Eigen::Index j = 0; j < r; ++j) d.gamma(i, j) = v[c++];
    for (Eigen::Index j = 0; j < q; ++j) d.theta(i, j) = v[c++];
    d.sigma2(i) = v[c];
    ++i;
  }
  if (i != n_kept) throw DataError(source + ": expected " + std::to_string(n_kept) + " rows, found " + std::to_string(i));
  return d;
}

void save_draws(const std::string& path, const PosteriorDraws& draws) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write draws file '" + path + "'");
  write_draws(out, draws);
}

PosteriorDraws load_draws(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open draws file '" + path + "'");
  return read_draws(in, path);
}

// ---------------------------------------------------------------------------
// Report

std::string report_to_json(const DecisionReport& rep, int indent) {
  using nlohmann::json;
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json j;
  j["prob_h_delta"] = rep.prob_h_delta;
  j["delta"] = rep.delta;
  j["p_report"] = rep.p_report;
  j["action"] = to_string(rep.action);
  json gs = json::array();
  for (const auto& s : rep.gamma_summary) gs.push_back({{"mean", s.mean}, {"lower", s.lower}, {"upper", s.upper}});
  j["gamma_summary"] = gs;
  j["contrast_summary"] = {{"mean", rep.contrast_summary.mean},
                           {"lower", rep.contrast_summary.lower},
                           {"upper", rep.contrast_summary.upper}};
  if (rep.theta_hat) j["theta_hat"] = vec(*rep.theta_hat);
  if (rep.lambda_max) j["lambda_max"] = *rep.lambda_max;
  if (rep.q_bar) j["q_bar"] = *rep.q_bar;
  j["membership_rows"] = rep.membership_table.size();
  j["statement"] = rep.statement;
  if (!rep.notes.empty()) j["notes"] = rep.notes;
  return j.dump(indent);
}

void write_membership_csv(std::ostream& os, const DecisionReport& rep) {
  if (rep.membership_table.empty()) {
    os << "profile,q\n";
    return;
  }
  const Eigen::Index q = rep.membership_table.front().z.size();
  os << "profile";
  for (Eigen::Index j = 0; j < q; ++j) os << ",z" << j + 1;
  os << ",q\n";
  for (std::size_t k = 0; k < rep.membership_table.size(); ++k) {
    const auto& row = rep.membership_table[k];
    os << k + 1;
    for (Eigen::Index j = 0; j < row.z.size(); ++j) os << ',' << format_double(row.z(j));
    os << ',' << format_double(row.q) << '\n';
  }
}

}  // namespace changeplane
