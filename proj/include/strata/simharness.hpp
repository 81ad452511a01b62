#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "strata/dgp.hpp"
#include "strata/estimators.hpp"

namespace strata {

struct MethodConfig {
  std::string name;   // naive | adjusted | msm | pencomp | proposed
  int n_boot = 200;
  int B = 50;
  std::string backend = "glm";
};

struct StudyConfig {
  int scenario = 1;
  size_t population_size = 1000000;
  std::vector<size_t> sample_sizes = {4000};
  int n_replications = 200;
  std::vector<MethodConfig> methods;
  uint64_t master_seed = 20240417;
  int threads = 0;  // 0 = runtime default / STRATACAUSAL_THREADS
  bool regenerate_population_per_replication = false;

  void validate() const;  // throws with the JSON path of the offending field
  static StudyConfig from_json_file(const std::string& path);
  std::string to_json() const;
};

struct RawEstimate {
  int scenario = 0;
  size_t n = 0;
  std::string method, contrast;
  int replicate = 0;
  double estimate = 0.0, ci_low = 0.0, ci_high = 0.0;
  bool covered = false;
};

struct MetricsRow {
  int scenario = 0;
  size_t n = 0;
  std::string method, contrast;
  double true_value = 0.0;
  double bias = 0.0, rmse = 0.0, coverage = 0.0, ail = 0.0;
  double mc_se_bias = 0.0, mc_se_coverage = 0.0;
  int n_reps = 0, n_failures = 0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  std::vector<RawEstimate> raw;
  std::vector<std::string> failures;  // "method rep=k: what"
  TrueEffects truth;

  const MetricsRow& cell(const std::string& method, const std::string& contrast, size_t n) const;
};

// deterministic given master_seed at any parallelism degree; aborts when more
// than 1% of (method, replicate) runs fail
MetricsTable run_study(const StudyConfig& config);

void write_metrics_csv(const std::string& path, const MetricsTable& m);
void write_metrics_json(const std::string& path, const MetricsTable& m);
void write_raw_csv(const std::string& path, const MetricsTable& m);

struct CompareCell {
  std::string key;       // scenario/n/method/contrast/metric
  double ours = 0.0, reference = 0.0, tolerance = 0.0;
  std::string status;    // pass | fail | info | missing
};

struct CompareReport {
  std::vector<CompareCell> cells;
  std::vector<std::string> unmatched_keys;
  int n_pass = 0, n_fail = 0, n_info = 0;

  std::string to_text() const;
  std::string to_json() const;
};

// reference rows: scenario,n,method,contrast,true_value,bias,rmse,coverage,ail
// (transcribed result tables, 1000-replication originals). Tolerances widen
// with the Monte Carlo error of the smaller replication count; interval
// length is reported as informational because the desk-scale bootstrap and
// imputation sizes differ from the originals.
CompareReport compare_to_reference(const MetricsTable& metrics, const std::string& reference_csv);

}  // namespace strata
