#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "strata/csvio.hpp"
#include "strata/dgp.hpp"
#include "strata/estimators.hpp"
#include "strata/panel.hpp"
#include "strata/simharness.hpp"

namespace fs = std::filesystem;
using namespace strata;

namespace {

// exit codes: 0 success, 1 estimator/runtime failure, 2 config/schema error
constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

void apply_thread_env() {
#ifdef _OPENMP
  if (const char* env = std::getenv("STRATACAUSAL_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) omp_set_num_threads(t);
  }
#endif
}

int cmd_genpop(int scenario, size_t size, uint64_t seed, const std::string& out_dir,
               const std::string& na) {
  const ParameterSet params = scenario_params(scenario);
  PopulationTable pop = generate_population(params, size, seed);
  fs::create_directories(out_dir);
  const std::string csv_path = (fs::path(out_dir) / "population.csv").string();
  write_population_csv_file(csv_path, pop, na);

  nlohmann::json manifest;
  manifest["scenario"] = scenario;
  manifest["size"] = size;
  manifest["seed"] = seed;
  manifest["na_token"] = na;
  manifest["params"] = nlohmann::json::parse(params.to_json());
  std::ofstream mf(fs::path(out_dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";

  TrueEffects te = true_effects(pop);
  std::cout << "population: " << size << " subjects -> " << csv_path << "\n";
  for (size_t k = 0; k < te.contrast.size(); ++k) {
    std::cout << "  " << te.contrast[k] << " (" << te.stratum[k] << ") = " << te.delta[k] << "\n";
  }
  return kOk;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, bool quick,
                 int scenario_override, int reps_override, uint64_t seed_override,
                 bool has_seed_override) {
  StudyConfig cfg;
  if (!config_path.empty()) {
    cfg = StudyConfig::from_json_file(config_path);
  } else {
    cfg.methods = {{"naive", 200, 50, "glm"}, {"msm", 200, 50, "glm"},
                   {"proposed", 200, 50, "glm"}};
  }
  if (scenario_override > 0) cfg.scenario = scenario_override;
  if (reps_override > 0) cfg.n_replications = reps_override;
  if (has_seed_override) cfg.master_seed = seed_override;
  if (quick) {
    cfg.population_size = std::min<size_t>(cfg.population_size, 100000);
    cfg.sample_sizes = {2000};
    cfg.n_replications = std::min(cfg.n_replications, 5);
    for (auto& m : cfg.methods) {
      m.n_boot = std::min(m.n_boot, 50);
      m.B = std::min(m.B, 20);
    }
  }
  cfg.validate();

  fs::create_directories(out_dir);
  MetricsTable metrics = run_study(cfg);
  write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), metrics);
  write_metrics_json((fs::path(out_dir) / "metrics.json").string(), metrics);
  write_raw_csv((fs::path(out_dir) / "raw_estimates.csv").string(), metrics);
  {
    std::ofstream cf(fs::path(out_dir) / "study_config.json");
    cf << cfg.to_json() << "\n";
  }
  if (!metrics.failures.empty()) {
    std::ofstream ff(fs::path(out_dir) / "failures.txt");
    for (const auto& line : metrics.failures) ff << line << "\n";
  }

  // compare against the shipped reference when the sample size matches
  const char* root = std::getenv("STRATA_REFERENCE_DIR");
  for (size_t n : cfg.sample_sizes) {
    const std::string ref_name = n == 8000 ? "table_n8000.csv" : "table_n4000.csv";
    fs::path ref = root ? fs::path(root) / ref_name : fs::path("data/reference") / ref_name;
    if ((n == 4000 || n == 8000) && fs::exists(ref)) {
      CompareReport rep = compare_to_reference(metrics, ref.string());
      std::ofstream rf(fs::path(out_dir) / ("compare_n" + std::to_string(n) + ".json"));
      rf << rep.to_json() << "\n";
      std::cout << rep.to_text();
    }
  }

  std::cout << "metrics rows: " << metrics.rows.size() << ", replicate failures: "
            << metrics.failures.size() << "\n";
  for (const auto& r : metrics.rows) {
    std::cout << "  s" << r.scenario << " n=" << r.n << " " << r.method << " " << r.contrast
              << " bias=" << r.bias << " rmse=" << r.rmse << " cov=" << r.coverage
              << " ail=" << r.ail << "\n";
  }
  return kOk;
}

int cmd_estimate(const std::string& panel_path, const std::string& schema_path,
                 const std::string& method, const std::string& backend, int n_boot, int B,
                 uint64_t seed, const std::string& out_path) {
  ObservedPanel panel;
  if (schema_path.empty()) {
    panel = read_panel_csv_file(panel_path);
  } else {
    panel = read_panel_with_schema(panel_path, PanelSchema::from_json_file(schema_path));
  }
  std::vector<ContrastDef> contrasts = contrasts_for_waves(panel.n_waves);
  if (method == "pencomp") contrasts = contrasts_for_waves(std::min(panel.n_waves, 2));

  EstimatorOptions opts;
  opts.seed = seed;
  opts.n_boot = n_boot;
  opts.B = B;
  opts.backend = backend;
  opts.bart = bart_desk_config();

  std::vector<EstimateResult> results;
  if (method == "naive") {
    results = naive_estimate(panel, contrasts, opts);
  } else if (method == "adjusted") {
    results = baseline_adjusted_estimate(panel, contrasts, opts);
  } else if (method == "msm") {
    results = msm_estimate(panel, contrasts, opts);
  } else if (method == "pencomp") {
    opts.stratify_bootstrap = true;
    results = pencomp_estimate(panel, contrasts, opts);
  } else if (method == "proposed") {
    results = proposed_estimate(panel, contrasts, opts);
  } else {
    std::cerr << "unknown method: " << method << "\n";
    return kConfigError;
  }

  nlohmann::json j = nlohmann::json::array();
  std::cout << "method: " << method << " (n=" << panel.size() << ")\n";
  const auto& defs = dgp_contrasts();
  for (const auto& r : results) {
    std::string label;
    for (const auto& d : defs) {
      if (d.name == r.contrast) label = d.label;
    }
    std::cout << "  " << label << " [" << r.contrast << " | " << r.stratum
              << "]: " << r.estimate << "  95% CI (" << r.ci_low << ", " << r.ci_high << ")\n";
    nlohmann::json row = {{"contrast", r.contrast}, {"label", label},   {"stratum", r.stratum},
                          {"estimate", r.estimate}, {"ci_low", r.ci_low}, {"ci_high", r.ci_high},
                          {"method", r.method}};
    if (r.B > 0) {
      row["B"] = r.B;
      row["W_bar"] = r.W_bar;
      row["D_between"] = r.D_between;
      row["T_B"] = r.T_B;
      row["nu"] = r.nu;
    }
    j.push_back(row);
  }
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    f << j.dump(2) << "\n";
  }
  return kOk;
}

int cmd_compare(const std::string& metrics_path, const std::string& reference_path,
                const std::string& out_path) {
  // rebuild a MetricsTable from a metrics CSV
  CsvTable t = read_csv_file(metrics_path);
  MetricsTable m;
  const char* names[] = {"scenario", "n",  "method",   "contrast", "true_value", "bias",
                         "rmse",     "ail", "coverage", "mc_se_bias", "n_reps"};
  for (const char* name : names) {
    if (t.column(name) < 0) {
      std::cerr << "metrics CSV missing column: " << name << "\n";
      return kConfigError;
    }
  }
  for (const auto& row : t.rows) {
    MetricsRow r;
    r.scenario = std::stoi(row[t.column("scenario")]);
    r.n = std::stoul(row[t.column("n")]);
    r.method = row[t.column("method")];
    r.contrast = row[t.column("contrast")];
    r.true_value = std::stod(row[t.column("true_value")]);
    r.bias = std::stod(row[t.column("bias")]);
    r.rmse = std::stod(row[t.column("rmse")]);
    r.coverage = std::stod(row[t.column("coverage")]);
    r.ail = std::stod(row[t.column("ail")]);
    r.mc_se_bias = std::stod(row[t.column("mc_se_bias")]);
    r.n_reps = std::stoi(row[t.column("n_reps")]);
    m.rows.push_back(r);
  }
  CompareReport rep = compare_to_reference(m, reference_path);
  std::cout << rep.to_text();
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    f << rep.to_json() << "\n";
  }
  return rep.n_fail == 0 ? kOk : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  CLI::App app{"longitudinal causal effects under censoring by death"};
  app.require_subcommand(1);

  // genpop
  auto* genpop = app.add_subcommand("genpop", "generate a synthetic population with potentials");
  int scenario = 1;
  size_t size = 1000000;
  uint64_t seed = 20240417;
  std::string out_dir = "out";
  std::string na = "NA";
  genpop->add_option("--scenario", scenario, "scenario id (1-3)")->check(CLI::Range(1, 3));
  genpop->add_option("--size", size, "population size");
  genpop->add_option("--seed", seed, "generator seed");
  genpop->add_option("--out-dir", out_dir, "output directory");
  genpop->add_option("--na", na, "NA cell token");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run a replication study");
  std::string config_path;
  bool quick = false;
  int reps_override = 0, scen_override = 0;
  uint64_t seed_override = 0;
  bool has_seed = false;
  simulate->add_option("--config", config_path, "StudyConfig JSON path");
  simulate->add_option("--scenario", scen_override, "override scenario")->check(CLI::Range(1, 3));
  simulate->add_option("--replications", reps_override, "override replication count");
  simulate->add_option_function<uint64_t>(
      "--seed", [&](uint64_t s) { seed_override = s; has_seed = true; }, "override master seed");
  simulate->add_flag("--quick", quick, "smoke profile: tiny population and replication count");
  simulate->add_option("--out-dir", out_dir, "output directory");

  // estimate
  auto* estimate = app.add_subcommand("estimate", "run one estimator on a panel CSV");
  std::string panel_path, schema_path, method = "proposed", backend = "glm", out_path;
  int n_boot = 200, B = 50;
  estimate->add_option("--panel", panel_path, "panel CSV path")->required();
  estimate->add_option("--schema", schema_path, "PanelSchema JSON for external layouts");
  estimate->add_option("--method", method, "naive|adjusted|msm|pencomp|proposed");
  estimate->add_option("--backend", backend, "glm|bart|pspline_bart");
  estimate->add_option("--n-boot", n_boot, "bootstrap resamples (percentile methods)");
  estimate->add_option("--B", B, "imputation replicates (pencomp/proposed)");
  estimate->add_option("--seed", seed, "seed");
  estimate->add_option("--out", out_path, "write estimates JSON here");

  // compare
  auto* compare = app.add_subcommand("compare", "compare a metrics CSV against a reference table");
  std::string metrics_path, reference_path;
  compare->add_option("--metrics", metrics_path, "metrics CSV from simulate")->required();
  compare->add_option("--reference", reference_path, "reference CSV")->required();
  compare->add_option("--out", out_path, "write comparison JSON here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (genpop->parsed()) return cmd_genpop(scenario, size, seed, out_dir, na);
    if (simulate->parsed()) {
      return cmd_simulate(config_path, out_dir, quick, scen_override, reps_override,
                          seed_override, has_seed);
    }
    if (estimate->parsed()) {
      return cmd_estimate(panel_path, schema_path, method, backend, n_boot, B, seed, out_path);
    }
    if (compare->parsed()) return cmd_compare(metrics_path, reference_path, out_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
