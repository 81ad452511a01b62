#include "strata/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"
#include "strata/csvio.hpp"
#include "strata/dist.hpp"

namespace strata {

void StudyConfig::validate() const {
  if (scenario < 1 || scenario > 3) throw std::invalid_argument("scenario: must be 1, 2 or 3");
  if (population_size < 1) throw std::invalid_argument("population_size: must be >= 1");
  if (n_replications < 1) throw std::invalid_argument("n_replications: must be >= 1");
  if (sample_sizes.empty()) throw std::invalid_argument("sample_sizes: must be non-empty");
  for (size_t n : sample_sizes) {
    if (n < 10 || n > population_size) {
      throw std::invalid_argument("sample_sizes: each must be in [10, population_size]");
    }
  }
  if (methods.empty()) throw std::invalid_argument("methods: must be non-empty");
  for (size_t k = 0; k < methods.size(); ++k) {
    const auto& m = methods[k];
    const std::string path = "methods[" + std::to_string(k) + "]";
    if (m.name != "naive" && m.name != "adjusted" && m.name != "msm" && m.name != "pencomp" &&
        m.name != "proposed") {
      throw std::invalid_argument(path + ".name: unknown method '" + m.name + "'");
    }
    if (m.n_boot < 2) throw std::invalid_argument(path + ".n_boot: must be >= 2");
    if (m.B < 2) throw std::invalid_argument(path + ".B: must be >= 2");
    if (m.backend != "glm" && m.backend != "bart" && m.backend != "pspline_bart") {
      throw std::invalid_argument(path + ".backend: unknown backend '" + m.backend + "'");
    }
  }
}

StudyConfig StudyConfig::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  StudyConfig c;
  try {
    c.scenario = j.at("scenario").get<int>();
    if (j.contains("population_size")) c.population_size = j["population_size"].get<size_t>();
    if (j.contains("sample_sizes")) c.sample_sizes = j["sample_sizes"].get<std::vector<size_t>>();
    if (j.contains("n_replications")) c.n_replications = j["n_replications"].get<int>();
    if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<uint64_t>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
    if (j.contains("regenerate_population_per_replication")) {
      c.regenerate_population_per_replication =
          j["regenerate_population_per_replication"].get<bool>();
    }
    if (!j.contains("methods")) throw std::invalid_argument("methods: required field missing");
    for (const auto& jm : j["methods"]) {
      MethodConfig m;
      m.name = jm.at("name").get<std::string>();
      if (jm.contains("n_boot")) m.n_boot = jm["n_boot"].get<int>();
      if (jm.contains("B")) m.B = jm["B"].get<int>();
      if (jm.contains("backend")) m.backend = jm["backend"].get<std::string>();
      c.methods.push_back(m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config field error: ") + e.what());
  }
  c.validate();
  return c;
}

std::string StudyConfig::to_json() const {
  nlohmann::json j;
  j["scenario"] = scenario;
  j["population_size"] = population_size;
  j["sample_sizes"] = sample_sizes;
  j["n_replications"] = n_replications;
  j["master_seed"] = master_seed;
  j["threads"] = threads;
  j["regenerate_population_per_replication"] = regenerate_population_per_replication;
  j["methods"] = nlohmann::json::array();
  for (const auto& m : methods) {
    j["methods"].push_back({{"name", m.name}, {"n_boot", m.n_boot}, {"B", m.B},
                            {"backend", m.backend}});
  }
  return j.dump(2);
}

const MetricsRow& MetricsTable::cell(const std::string& method, const std::string& contrast,
                                     size_t n) const {
  for (const auto& r : rows) {
    if (r.method == method && r.contrast == contrast && r.n == n) return r;
  }
  throw std::out_of_range("metrics cell not found: " + method + "/" + contrast + "/n=" +
                          std::to_string(n));
}

namespace {

std::vector<EstimateResult> run_method(const MethodConfig& m, const ObservedPanel& panel,
                                       const std::vector<ContrastDef>& contrasts, uint64_t seed) {
  EstimatorOptions opts;
  opts.seed = seed;
  opts.n_boot = m.n_boot;
  opts.B = m.B;
  opts.backend = m.backend;
  opts.bart = bart_desk_config();
  if (m.name == "naive") return naive_estimate(panel, contrasts, opts);
  if (m.name == "adjusted") return baseline_adjusted_estimate(panel, contrasts, opts);
  if (m.name == "msm") return msm_estimate(panel, contrasts, opts);
  if (m.name == "pencomp") {
    opts.stratify_bootstrap = true;
    std::vector<ContrastDef> two_wave;
    for (const auto& c : contrasts) {
      if (c.wave <= 2) two_wave.push_back(c);
    }
    return pencomp_estimate(panel, two_wave, opts);
  }
  if (m.name == "proposed") return proposed_estimate(panel, contrasts, opts);
  throw std::invalid_argument("unknown method: " + m.name);
}

}  // namespace

MetricsTable run_study(const StudyConfig& config) {
  config.validate();
#ifdef _OPENMP
  if (config.threads > 0) omp_set_num_threads(config.threads);
#endif

  const ParameterSet params = scenario_params(config.scenario);
  const uint64_t pop_seed = hash_mix(config.master_seed, 0xB0B0ull, 1);

  MetricsTable out;
  PopulationTable pop;
  if (!config.regenerate_population_per_replication) {
    pop = generate_population(params, config.population_size, pop_seed);
    out.truth = true_effects(pop);
  }

  const auto& contrasts = dgp_contrasts();
  const int R = config.n_replications;

  struct Slot {
    bool ok = false;
    std::string error;
    std::vector<EstimateResult> results;
  };

  for (size_t n : config.sample_sizes) {
    std::vector<std::vector<Slot>> slots(config.methods.size(),
                                         std::vector<Slot>(R));
#pragma omp parallel for schedule(dynamic)
    for (int rep = 0; rep < R; ++rep) {
      const uint64_t rep_seed =
          hash_mix(config.master_seed, static_cast<uint64_t>(config.scenario) * 1000003 + n,
                   static_cast<uint64_t>(rep) + 7);
      PopulationTable local_pop;
      const PopulationTable* use_pop = &pop;
      if (config.regenerate_population_per_replication) {
        local_pop = generate_population(params, config.population_size,
                                        hash_mix(pop_seed, 0x9E11ull, rep));
        use_pop = &local_pop;
      }
      ObservedPanel panel = sample_observed(*use_pop, n, rep_seed);
      for (size_t mi = 0; mi < config.methods.size(); ++mi) {
        Slot& slot = slots[mi][rep];
        try {
          slot.results = run_method(config.methods[mi], panel, contrasts,
                                    hash_mix(rep_seed, 0xE57ull, mi));
          slot.ok = true;
        } catch (const std::exception& e) {
          slot.error = e.what();
        }
      }
    }

    if (config.regenerate_population_per_replication && out.truth.delta.empty()) {
      // oracle from a dedicated population when none is shared
      PopulationTable oracle_pop = generate_population(params, config.population_size, pop_seed);
      out.truth = true_effects(oracle_pop);
    }

    for (size_t mi = 0; mi < config.methods.size(); ++mi) {
      const auto& mc = config.methods[mi];
      // collect per-contrast series
      std::vector<std::vector<double>> est(contrasts.size()), lo(contrasts.size()),
          hi(contrasts.size());
      int failures = 0;
      for (int rep = 0; rep < R; ++rep) {
        const Slot& slot = slots[mi][rep];
        if (!slot.ok) {
          ++failures;
          out.failures.push_back(mc.name + " n=" + std::to_string(n) + " rep=" +
                                 std::to_string(rep) + ": " + slot.error);
          continue;
        }
        for (const auto& r : slot.results) {
          for (size_t k = 0; k < contrasts.size(); ++k) {
            if (r.contrast == contrasts[k].name) {
              est[k].push_back(r.estimate);
              lo[k].push_back(r.ci_low);
              hi[k].push_back(r.ci_high);
              out.raw.push_back({config.scenario, n, mc.name, r.contrast, rep, r.estimate,
                                 r.ci_low, r.ci_high,
                                 r.ci_low <= out.truth.delta[k] && out.truth.delta[k] <= r.ci_high});
            }
          }
        }
      }
      if (failures > std::max(1, R / 100)) {
        throw std::runtime_error("run_study: method " + mc.name + " failed in " +
                                 std::to_string(failures) + "/" + std::to_string(R) +
                                 " replications; first: " +
                                 (out.failures.empty() ? "?" : out.failures.front()));
      }
      for (size_t k = 0; k < contrasts.size(); ++k) {
        if (est[k].empty()) continue;
        const double truth = out.truth.delta[k];
        const int reps = static_cast<int>(est[k].size());
        double mean = 0.0, mse = 0.0, cov = 0.0, ail = 0.0;
        for (int i = 0; i < reps; ++i) {
          mean += est[k][i];
          mse += (est[k][i] - truth) * (est[k][i] - truth);
          cov += (lo[k][i] <= truth && truth <= hi[k][i]) ? 1.0 : 0.0;
          ail += hi[k][i] - lo[k][i];
        }
        mean /= reps;
        mse /= reps;
        cov /= reps;
        ail /= reps;
        double sd = 0.0;
        for (int i = 0; i < reps; ++i) sd += (est[k][i] - mean) * (est[k][i] - mean);
        sd = std::sqrt(sd / std::max(1, reps - 1));
        MetricsRow row;
        row.scenario = config.scenario;
        row.n = n;
        row.method = mc.name;
        row.contrast = contrasts[k].name;
        row.true_value = truth;
        row.bias = mean - truth;
        row.rmse = std::sqrt(mse);
        row.coverage = 100.0 * cov;
        row.ail = ail;
        row.mc_se_bias = sd / std::sqrt(static_cast<double>(reps));
        row.mc_se_coverage = 100.0 * std::sqrt(cov * (1.0 - cov) / reps);
        row.n_reps = reps;
        row.n_failures = failures;
        out.rows.push_back(row);
      }
    }
  }
  return out;
}

void write_metrics_csv(const std::string& path, const MetricsTable& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  write_csv_row(f, {"scenario", "n", "method", "contrast", "true_value", "bias", "rmse",
                    "coverage", "ail", "mc_se_bias", "mc_se_coverage", "n_reps", "n_failures"});
  for (const auto& r : m.rows) {
    write_csv_row(f, {std::to_string(r.scenario), std::to_string(r.n), r.method, r.contrast,
                      format_double(r.true_value), format_double(r.bias), format_double(r.rmse),
                      format_double(r.coverage), format_double(r.ail),
                      format_double(r.mc_se_bias), format_double(r.mc_se_coverage),
                      std::to_string(r.n_reps), std::to_string(r.n_failures)});
  }
}

void write_metrics_json(const std::string& path, const MetricsTable& m) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : m.rows) {
    j.push_back({{"scenario", r.scenario},
                 {"n", r.n},
                 {"method", r.method},
                 {"contrast", r.contrast},
                 {"true_value", r.true_value},
                 {"bias", r.bias},
                 {"rmse", r.rmse},
                 {"coverage", r.coverage},
                 {"ail", r.ail},
                 {"mc_se_bias", r.mc_se_bias},
                 {"mc_se_coverage", r.mc_se_coverage},
                 {"n_reps", r.n_reps},
                 {"n_failures", r.n_failures}});
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
}

void write_raw_csv(const std::string& path, const MetricsTable& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  write_csv_row(f, {"scenario", "n", "method", "contrast", "replicate", "estimate", "ci_low",
                    "ci_high", "covered"});
  for (const auto& r : m.raw) {
    write_csv_row(f, {std::to_string(r.scenario), std::to_string(r.n), r.method, r.contrast,
                      std::to_string(r.replicate), format_double(r.estimate),
                      format_double(r.ci_low), format_double(r.ci_high),
                      r.covered ? "1" : "0"});
  }
}

std::string CompareReport::to_text() const {
  std::ostringstream os;
  os << "comparison against reference (" << n_pass << " pass, " << n_fail << " fail, " << n_info
     << " informational)\n";
  for (const auto& c : cells) {
    os << "  [" << c.status << "] " << c.key << ": ours=" << c.ours << " ref=" << c.reference
       << " tol=" << c.tolerance << "\n";
  }
  for (const auto& k : unmatched_keys) os << "  [missing] " << k << "\n";
  return os.str();
}

std::string CompareReport::to_json() const {
  nlohmann::json j;
  j["n_pass"] = n_pass;
  j["n_fail"] = n_fail;
  j["n_info"] = n_info;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    j["cells"].push_back({{"key", c.key},
                          {"ours", c.ours},
                          {"reference", c.reference},
                          {"tolerance", c.tolerance},
                          {"status", c.status}});
  }
  j["unmatched_keys"] = unmatched_keys;
  return j.dump(2);
}

CompareReport compare_to_reference(const MetricsTable& metrics, const std::string& reference_csv) {
  CsvTable ref = read_csv_file(reference_csv);
  const int c_scen = ref.column("scenario"), c_n = ref.column("n"), c_m = ref.column("method"),
            c_c = ref.column("contrast"), c_t = ref.column("true_value"),
            c_b = ref.column("bias"), c_r = ref.column("rmse"), c_cov = ref.column("coverage"),
            c_a = ref.column("ail");
  for (int c : {c_scen, c_n, c_m, c_c, c_t, c_b, c_r, c_cov, c_a}) {
    if (c < 0) throw std::runtime_error("reference CSV missing a required column");
  }
  constexpr double kRefReps = 1000.0;  // original tables use 1000 replications
  CompareReport rep;
  for (const auto& row : ref.rows) {
    const int scen = std::stoi(row[c_scen]);
    const size_t n = static_cast<size_t>(std::stoul(row[c_n]));
    const std::string method = row[c_m], contrast = row[c_c];
    const MetricsRow* ours = nullptr;
    for (const auto& r : metrics.rows) {
      if (r.scenario == scen && r.n == n && r.method == method && r.contrast == contrast) {
        ours = &r;
        break;
      }
    }
    const std::string base = "s" + std::to_string(scen) + "/n" + std::to_string(n) + "/" +
                             method + "/" + contrast;
    if (!ours) {
      rep.unmatched_keys.push_back(base);
      continue;
    }
    const double ref_true = std::stod(row[c_t]);
    const double ref_bias = std::stod(row[c_b]);
    const double ref_rmse = std::stod(row[c_r]);
    const double ref_cov = std::stod(row[c_cov]);
    const double ref_ail = std::stod(row[c_a]);
    const double reps = ours->n_reps;

    auto add = [&rep](const std::string& key, double ours_v, double ref_v, double tol,
                      bool informational = false) {
      CompareCell cell;
      cell.key = key;
      cell.ours = ours_v;
      cell.reference = ref_v;
      cell.tolerance = tol;
      if (informational) {
        cell.status = "info";
        ++rep.n_info;
      } else if (std::fabs(ours_v - ref_v) <= tol) {
        cell.status = "pass";
        ++rep.n_pass;
      } else {
        cell.status = "fail";
        ++rep.n_fail;
      }
      rep.cells.push_back(cell);
    };

    // true value: the oracle populations differ only by Monte Carlo error
    add(base + "/true", ours->true_value, ref_true, 0.03);
    // bias: both estimates carry sampling noise sd/sqrt(R); table rounding adds 5e-4
    const double sd = ours->mc_se_bias * std::sqrt(reps);
    add(base + "/bias", ours->bias, ref_bias,
        1.96 * sd * std::sqrt(1.0 / reps + 1.0 / kRefReps) + 0.002);
    // rmse: chi-square style relative error
    add(base + "/rmse", ours->rmse, ref_rmse,
        ref_rmse * 1.96 * std::sqrt(0.5 / reps + 0.5 / kRefReps) + 0.002);
    // coverage: binomial error on both sides
    const double p = std::min(0.999, std::max(0.001, ref_cov / 100.0));
    add(base + "/coverage", ours->coverage, ref_cov,
        100.0 * 1.96 * std::sqrt(p * (1.0 - p) * (1.0 / reps + 1.0 / kRefReps)) + 0.5);
    // interval length: informational (desk-scale bootstrap/imputation sizes differ)
    add(base + "/ail", ours->ail, ref_ail, 0.0, /*informational=*/true);
  }
  return rep;
}

}  // namespace strata
