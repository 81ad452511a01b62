#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "strata/panel.hpp"

namespace strata {

// Coefficients of the three-scenario data generating process, keyed by the
// names used in the simulation parameter table.
struct ParameterSet {
  double baseline_mean = 0.0;
  double baseline_sd = 1.0;
  double noise_sd = 1.0;
  std::map<std::string, double> gamma;  // treatment models
  std::map<std::string, double> beta;   // outcome models
  std::map<std::string, double> alpha;  // survival models

  double g(const std::string& name) const;
  double b(const std::string& name) const;
  double a(const std::string& name) const;

  static const std::vector<std::string>& gamma_names();
  static const std::vector<std::string>& beta_names();
  static const std::vector<std::string>& alpha_names();

  // every named coefficient present exactly once, sds positive
  void validate() const;

  std::string to_json() const;
  static ParameterSet from_json(const std::string& text);
};

ParameterSet scenario_params(int scenario);

// Complete potential outcomes for one synthetic cohort. NaN marks structural
// missingness (dead under that regime's prefix); z2/z3 are the observed
// treatment path and are -1 once the subject is dead under the observed path.
struct PopulationTable {
  std::vector<double> v;
  std::vector<int8_t> z1, z2, z3;
  std::vector<double> y1, y0;
  std::vector<int8_t> s1, s0;
  std::vector<double> y00, y01, y11;
  std::vector<int8_t> s00, s01, s11;
  std::vector<double> y000, y001, y011, y111;

  ParameterSet params;
  uint64_t seed = 0;

  size_t size() const { return v.size(); }
  void resize(size_t n);
};

// Deterministic given (params, size, seed); per-subject draws are addressed
// as (seed, subject, slot) with slot order V, Z1, e1, S, Z2, e2, S, Z3, e3,
// one shared error/uniform per wave across that wave's potential outcomes.
PopulationTable generate_population(const ParameterSet& params, size_t size, uint64_t seed);
// plain sequential loop kept as the reference implementation for tests and
// the benchmark target
PopulationTable generate_population_serial(const ParameterSet& params, size_t size,
                                           uint64_t seed);

struct TrueEffects {
  std::vector<std::string> contrast;  // ten labels, fixed order
  std::vector<std::string> stratum;   // conditioning stratum description
  std::vector<double> delta;
};

const std::vector<std::string>& contrast_names();  // the ten Delta labels

TrueEffects true_effects(const PopulationTable& pop);

// simple random sample without replacement; counterfactuals masked, death
// truncates downstream values
ObservedPanel sample_observed(const PopulationTable& pop, size_t n, uint64_t seed);

void write_population_csv(std::ostream& os, const PopulationTable& pop,
                          const std::string& na = "NA");
void write_population_csv_file(const std::string& path, const PopulationTable& pop,
                               const std::string& na = "NA");
PopulationTable read_population_csv_file(const std::string& path, const std::string& na = "NA");

}  // namespace strata
