#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "strata/bart.hpp"
#include "strata/panel.hpp"
#include "strata/rng.hpp"

namespace strata {

// Treatment regimes are coded per wave: wave 1 {0,1}; wave 2 {0:"00",
// 1:"01", 2:"11"}; wave 3 {0:"000", 1:"001", 2:"011", 3:"111"}.
struct ContrastDef {
  int wave;   // 1-based
  int reg_a;  // regime codes in the wave's coding
  int reg_b;
  std::string name;     // e.g. "D_11_00"
  std::string stratum;  // conditioning stratum description
  std::string label;    // shock-duration reading, e.g. "4y shock vs none"
};

// the ten simulation-study contrasts, in table order
const std::vector<ContrastDef>& dgp_contrasts();
std::vector<ContrastDef> contrasts_for_waves(int n_waves);

struct EstimateResult {
  std::string method;
  std::string contrast;
  std::string stratum;
  double estimate = 0.0;
  double ci_low = 0.0, ci_high = 0.0;
  // filled by Rubin-combined methods only
  double W_bar = -1.0, D_between = -1.0, T_B = -1.0, nu = -1.0;
  int B = 0;
  int n_redraws = 0;
};

struct CombinedEstimate {
  std::string contrast;
  double delta_bar = 0.0;
  double W_bar = 0.0;
  double D_between = 0.0;
  double T_B = 0.0;
  double nu = 0.0;
  double ci_low = 0.0, ci_high = 0.0;
  int B = 0;
};

// delta_bar = mean, D = sample variance, T_B = W_bar + (1+1/B) D,
// nu = (B-1)(1 + W_bar/(D(B+1)))^2 floored at 1; D=0 caps nu at 1e6 and the
// interval falls back to normal quantiles
CombinedEstimate rubin_combine(const std::vector<double>& deltas,
                               const std::vector<double>& within_vars);

struct MsmOptions {
  enum class Numerator {
    paper,           // baseline-conditional at waves >= 2, marginal at wave 1
    intercept_only,  // marginal at every wave
    unstabilized,    // numerator 1
  };
  Numerator numerator = Numerator::paper;
  bool death_weights = true;
  bool response_weights = true;
  // fixed coefficient injection for tests; keys: z1_den, z1_num, z2_den,
  // z2_num, z3_den, z3_num, s2_den_0, s2_den_1, s2_num, s3_den_00, s3_den_01,
  // s3_den_11, s3_num (intercept-first layouts documented in msm_weights)
  std::map<std::string, Eigen::VectorXd> fixed;
};

struct EstimatorOptions {
  uint64_t seed = 0;
  int n_boot = 200;         // percentile-bootstrap methods
  int B = 50;               // multiple-imputation methods
  std::string backend = "glm";  // glm | bart | pspline_bart
  bool simplified = true;       // skip the propensity steps (simulation profile)
  bool stratify_bootstrap = false;
  int redraw_cap_factor = 10;
  MsmOptions msm;
  BartConfig bart = bart_desk_config();
  // test hook: collects per-replicate imputed survival rows
  // (s2 under z=0, s2 under z=1, s3 under 00, 01, 11)
  std::vector<std::array<int8_t, 5>>* capture_survival = nullptr;
};

std::vector<EstimateResult> naive_estimate(const ObservedPanel& panel,
                                           const std::vector<ContrastDef>& contrasts,
                                           const EstimatorOptions& opts);

std::vector<EstimateResult> baseline_adjusted_estimate(const ObservedPanel& panel,
                                                       const std::vector<ContrastDef>& contrasts,
                                                       const EstimatorOptions& opts);

// Per subject-wave inverse-probability weights with stabilized numerators;
// component probabilities retained for diagnostics. Waves are cumulative.
struct WeightSet {
  std::array<std::vector<double>, 3> w_treat, w_death, w_resp, w_final;
  // fitted probabilities of the observed transition at each wave (NaN where
  // the component does not apply)
  std::array<std::vector<double>, 3> den_treat, den_death;
  int n_clamped = 0;

  void check() const;  // positivity of every weight, final = product
};

WeightSet msm_weights(const ObservedPanel& panel, const MsmOptions& opts);

struct PositivityReport {
  double min_den_treat = 1.0, min_den_death = 1.0;
  double max_weight = 0.0;
  std::array<double, 5> weight_quantiles{};  // 1/25/50/75/99 percentiles of final wave
  int n_clamped = 0;
  int n_beyond_threshold = 0;
  std::vector<size_t> flagged_rows;  // first few offenders
  double threshold = 0.0;

  std::string to_string() const;
};

PositivityReport check_positivity(const WeightSet& ws, double threshold);

std::vector<EstimateResult> msm_estimate(const ObservedPanel& panel,
                                         const std::vector<ContrastDef>& contrasts,
                                         const EstimatorOptions& opts);

// two-period spline-of-propensity multiple imputation; panels with deaths are
// analyzed among wave-2 survivors (the method predates the survival
// imputation machinery)
std::vector<EstimateResult> pencomp_estimate(const ObservedPanel& panel,
                                             const std::vector<ContrastDef>& contrasts,
                                             const EstimatorOptions& opts);

// principal-stratification imputation estimator; counterfactual survival and
// outcomes imputed per bootstrap replicate, contrasts restricted to the
// both-survive stratum, combined by the multiple-imputation rules
std::vector<EstimateResult> proposed_estimate(const ObservedPanel& panel,
                                              const std::vector<ContrastDef>& contrasts,
                                              const EstimatorOptions& opts);

struct ImputeOptions {
  uint64_t seed = 0;
  std::string backend = "glm";
  BartConfig bart = bart_desk_config();
  std::vector<std::string> conditioning;  // baseline columns; default {"v"} + extras
};

// fills r=0 outcomes among survivors from the backend predictive
// distribution given (baseline, treatment path, completed lags); structural
// NA (death) is never filled
ObservedPanel impute_missing_outcomes(const ObservedPanel& panel, const ImputeOptions& opts);

}  // namespace strata
