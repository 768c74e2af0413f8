#pragma once

// Run configuration, CSV ingestion and serialization of draws and reports.

#include "changeplane/model.hpp"
#include "changeplane/reporting.hpp"
#include "changeplane/samplers.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace changeplane {

/// Sectioned key-value file:
///   # comment
///   [section]
///   key = value
/// Keys are addressed as "section.key". Duplicate keys are a ConfigError.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list; empty when the key is absent.
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Keys that were never read through a getter.
  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
};

struct ColumnRoles {
  std::string outcome;
  std::vector<std::string> baseline;   // W
  std::vector<std::string> treatment;  // X
  std::vector<std::string> boundary;   // Z
  bool add_intercept = true;           // prepend a constant column to W and Z
  bool interactions = false;           // append pairwise products of boundary columns to Z
  bool standardize_z = false;          // center and scale non-constant Z columns
};

struct LoadedData {
  Dataset data;
  std::vector<std::string> w_names, x_names, z_names;
  bool w_x_overlap = false;
};

/// Parses a CSV table with a header row and binds columns to roles. Throws
/// DataError naming the row and column of the first problem.
LoadedData load_csv(std::istream& in, const ColumnRoles& roles, const std::string& source = "<csv>");
LoadedData load_csv(const std::string& path, const ColumnRoles& roles);

/// Centers and scales every non-constant column to mean 0 and sample SD 1.
void standardize_columns(Eigen::MatrixXd& m);

struct RunConfig {
  std::string input;
  ColumnRoles roles;
  SamplerConfig sampler;
  DecisionConfig decision;
  std::string output_dir = "out";
  bool keep_raw_chain = false;
};

/// Builds a RunConfig from [data], [sampler], [trees], [decision], [output].
RunConfig run_config_from(const KeyValueConfig& kv);
SamplerConfig sampler_config_from(const KeyValueConfig& kv);
DecisionConfig decision_config_from(const KeyValueConfig& kv);

/// Self-describing text format. Header lines start with '#': format tag,
/// dimensions and run metadata; then a row of column names (beta[1], ...,
/// sigma2) and one comma-separated row per draw. Values are written in
/// shortest round-trip form, so reading reproduces them bit-exactly.
void write_draws(std::ostream& os, const PosteriorDraws& draws);
PosteriorDraws read_draws(std::istream& in, const std::string& source = "<draws>");
void save_draws(const std::string& path, const PosteriorDraws& draws);
PosteriorDraws load_draws(const std::string& path);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

std::string report_to_json(const DecisionReport& report, int indent = 2);
void write_membership_csv(std::ostream& os, const DecisionReport& report);

}  // namespace changeplane
