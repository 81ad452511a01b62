#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "doctest.h"
#include "strata/csvio.hpp"
#include "strata/simharness.hpp"

using namespace strata;

namespace {

StudyConfig tiny_config() {
  StudyConfig c;
  c.scenario = 2;
  c.population_size = 30000;
  c.sample_sizes = {1500};
  c.n_replications = 2;
  c.master_seed = 555;
  c.methods = {{"naive", 30, 10, "glm"}, {"msm", 30, 10, "glm"}};
  return c;
}

}  // namespace

TEST_CASE("config validation names the offending field") {
  StudyConfig c = tiny_config();
  c.scenario = 9;
  CHECK_THROWS_WITH_AS(c.validate(), "scenario: must be 1, 2 or 3", std::invalid_argument);
  c = tiny_config();
  c.methods[0].name = "wizard";
  CHECK_THROWS_WITH_AS(c.validate(), "methods[0].name: unknown method 'wizard'",
                       std::invalid_argument);
  c = tiny_config();
  c.sample_sizes = {999999999};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  {
    std::ofstream f("/tmp/strata_cfg_bad.json");
    f << R"({"population_size": 1000})";
  }
  CHECK_THROWS_WITH_AS(StudyConfig::from_json_file("/tmp/strata_cfg_bad.json"),
                       doctest::Contains("scenario"), std::invalid_argument);
}

TEST_CASE("config json round trip") {
  StudyConfig c = tiny_config();
  {
    std::ofstream f("/tmp/strata_cfg_rt.json");
    f << c.to_json();
  }
  StudyConfig d = StudyConfig::from_json_file("/tmp/strata_cfg_rt.json");
  CHECK(d.scenario == c.scenario);
  CHECK(d.population_size == c.population_size);
  CHECK(d.methods.size() == c.methods.size());
  CHECK(d.methods[1].name == "msm");
  CHECK(d.master_seed == c.master_seed);
}

TEST_CASE("single-replication coverage is all-or-nothing") {
  StudyConfig c = tiny_config();
  c.n_replications = 1;
  c.methods = {{"naive", 25, 10, "glm"}};
  MetricsTable m = run_study(c);
  REQUIRE(m.rows.size() == 10);
  for (const auto& r : m.rows) {
    CHECK((r.coverage == 0.0 || r.coverage == 100.0));
    CHECK(r.n_reps == 1);
    CHECK(r.rmse == doctest::Approx(std::fabs(r.bias)).epsilon(1e-12));
  }
}

TEST_CASE("metrics are deterministic at any parallelism degree") {
  StudyConfig c = tiny_config();
  c.threads = 1;
  MetricsTable a = run_study(c);
  c.threads = 2;
  MetricsTable b = run_study(c);
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t k = 0; k < a.rows.size(); ++k) {
    CHECK(a.rows[k].bias == b.rows[k].bias);
    CHECK(a.rows[k].rmse == b.rows[k].rmse);
    CHECK(a.rows[k].coverage == b.rows[k].coverage);
    CHECK(a.rows[k].ail == b.rows[k].ail);
  }
  // raw estimates line up as well
  REQUIRE(a.raw.size() == b.raw.size());
  for (size_t k = 0; k < a.raw.size(); ++k) {
    CHECK(a.raw[k].estimate == b.raw[k].estimate);
    CHECK(a.raw[k].replicate == b.raw[k].replicate);
  }
}

TEST_CASE("rmse never falls below absolute bias and quantities are sane") {
  StudyConfig c = tiny_config();
  c.n_replications = 4;
  MetricsTable m = run_study(c);
  for (const auto& r : m.rows) {
    CHECK(r.rmse * r.rmse >= r.bias * r.bias - 1e-12);
    CHECK(r.coverage >= 0.0);
    CHECK(r.coverage <= 100.0);
    CHECK(r.ail > 0.0);
    CHECK(r.mc_se_coverage >= 0.0);
  }
  CHECK(m.truth.delta.size() == 10);
}

TEST_CASE("metrics files are written and re-readable") {
  StudyConfig c = tiny_config();
  MetricsTable m = run_study(c);
  write_metrics_csv("/tmp/strata_metrics.csv", m);
  write_metrics_json("/tmp/strata_metrics.json", m);
  write_raw_csv("/tmp/strata_raw.csv", m);
  CsvTable t = read_csv_file("/tmp/strata_metrics.csv");
  CHECK(t.rows.size() == m.rows.size());
  CHECK(t.column("bias") >= 0);
  CsvTable raw = read_csv_file("/tmp/strata_raw.csv");
  CHECK(raw.rows.size() == m.raw.size());
}

TEST_CASE("comparison passes on itself and fails on a shifted bias") {
  StudyConfig c = tiny_config();
  c.n_replications = 4;
  MetricsTable m = run_study(c);
  // write a reference that IS our metrics: every checked cell must pass
  {
    std::ofstream f("/tmp/strata_ref_self.csv");
    f << "scenario,n,method,contrast,true_value,bias,rmse,coverage,ail\n";
    for (const auto& r : m.rows) {
      f << r.scenario << "," << r.n << "," << r.method << "," << r.contrast << ","
        << r.true_value << "," << r.bias << "," << r.rmse << "," << r.coverage << "," << r.ail
        << "\n";
    }
  }
  CompareReport rep = compare_to_reference(m, "/tmp/strata_ref_self.csv");
  CHECK(rep.n_fail == 0);
  CHECK(rep.n_pass > 0);
  CHECK(rep.unmatched_keys.empty());

  // shift one bias cell by ten Monte Carlo standard errors: that cell fails
  {
    std::ofstream f("/tmp/strata_ref_off.csv");
    f << "scenario,n,method,contrast,true_value,bias,rmse,coverage,ail\n";
    for (size_t k = 0; k < m.rows.size(); ++k) {
      const auto& r = m.rows[k];
      const double bias = k == 0 ? r.bias + 10.0 * r.mc_se_bias * std::sqrt(double(r.n_reps)) +
                                       0.5
                                 : r.bias;
      f << r.scenario << "," << r.n << "," << r.method << "," << r.contrast << ","
        << r.true_value << "," << bias << "," << r.rmse << "," << r.coverage << "," << r.ail
        << "\n";
    }
  }
  CompareReport rep2 = compare_to_reference(m, "/tmp/strata_ref_off.csv");
  CHECK(rep2.n_fail >= 1);

  // unmatched keys are listed, not fatal
  {
    std::ofstream f("/tmp/strata_ref_extra.csv");
    f << "scenario,n,method,contrast,true_value,bias,rmse,coverage,ail\n";
    f << "2,1500,pencomp,D_1_0,-3.37,0,0.05,95,0.2\n";
  }
  CompareReport rep3 = compare_to_reference(m, "/tmp/strata_ref_extra.csv");
  CHECK(rep3.unmatched_keys.size() == 1);
}

TEST_CASE("study aborts when a method keeps failing") {
  StudyConfig c = tiny_config();
  c.sample_sizes = {40};  // far too small for the msm weight models
  c.n_replications = 3;
  c.methods = {{"msm", 20, 10, "glm"}};
  CHECK_THROWS_AS(run_study(c), std::runtime_error);
}
