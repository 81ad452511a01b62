// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit code = number of
// failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "strata/bart.hpp"
#include "strata/csvio.hpp"
#include "strata/dgp.hpp"
#include "strata/dist.hpp"
#include "strata/estimators.hpp"
#include "strata/regress.hpp"
#include "strata/simharness.hpp"

using namespace strata;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes;

double minutes_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
}

struct Criterion {
  std::string name;
  bool ok = true;
  std::vector<std::string> details;

  void expect(bool cond, const std::string& what) {
    details.push_back(std::string(cond ? "    ok   " : "    FAIL ") + what);
    ok &= cond;
  }
  void finish(double minutes) {
    std::printf("[%s] %s (%.1f min)\n", ok ? "PASS" : "FAIL", name.c_str(), minutes);
    for (const auto& d : details) std::printf("%s\n", d.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
  }
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", x);
  return buf;
}

const MetricsRow& cell(const MetricsTable& m, const std::string& method,
                       const std::string& contrast) {
  return m.cell(method, contrast, m.rows.front().n);
}

// ---------------- criterion 1 ----------------
double criterion1() {
  auto t0 = Clock::now();
  Criterion c{"criterion 1: true-effect oracle, 1e6 population, all ten within 0.03"};
  const char* ref_path = std::getenv("STRATA_REFERENCE_DIR");
  std::string ref_dir = ref_path ? ref_path : "data/reference";
  CsvTable ref = read_csv_file(ref_dir + "/table_n4000.csv");
  const int c_s = ref.column("scenario"), c_m = ref.column("method"),
            c_c = ref.column("contrast"), c_t = ref.column("true_value");
  for (int scen = 1; scen <= 3; ++scen) {
    auto ts = Clock::now();
    PopulationTable pop = generate_population(scenario_params(scen), 1000000, 20240417);
    TrueEffects te = true_effects(pop);
    const double mins = minutes_since(ts);
    c.expect(mins < 3.0, "scenario " + std::to_string(scen) + " runtime " + fmt(mins) + " min < 3");
    for (size_t k = 0; k < te.contrast.size(); ++k) {
      double ref_true = 0.0;
      bool found = false;
      for (const auto& row : ref.rows) {
        if (std::stoi(row[c_s]) == scen && row[c_m] == "naive" && row[c_c] == te.contrast[k]) {
          ref_true = std::stod(row[c_t]);
          found = true;
          break;
        }
      }
      const double diff = std::fabs(te.delta[k] - ref_true);
      c.expect(found && diff < 0.03, "scenario " + std::to_string(scen) + " " + te.contrast[k] +
                                         " oracle " + fmt(te.delta[k]) + " vs " + fmt(ref_true) +
                                         " (|diff| " + fmt(diff) + ")");
    }
  }
  const double mins = minutes_since(t0);
  c.finish(mins);
  return mins;
}

// shared study runner for criteria 2-4
MetricsTable run_criterion_study(int scenario, size_t n, int reps,
                                 std::vector<MethodConfig> methods) {
  StudyConfig cfg;
  cfg.scenario = scenario;
  cfg.population_size = 1000000;
  cfg.sample_sizes = {n};
  cfg.n_replications = reps;
  cfg.master_seed = 20240417;
  cfg.methods = std::move(methods);
  return run_study(cfg);
}

// ---------------- criterion 2 ----------------
double criterion2() {
  auto t0 = Clock::now();
  Criterion c{"criterion 2: scenario 1 sanity (200 reps, n=4000)"};
  MetricsTable m = run_criterion_study(1, 4000, 200,
                                       {{"naive", 200, 50, "glm"},
                                        {"msm", 200, 50, "glm"},
                                        {"proposed", 200, 50, "glm"}});
  for (const char* method : {"naive", "msm", "proposed"}) {
    const auto& r = cell(m, method, "D_1_0");
    c.expect(std::fabs(r.bias) <= 0.01,
             std::string(method) + " D_1_0 |bias| " + fmt(std::fabs(r.bias)) + " <= 0.01");
  }
  for (const auto& cd : dgp_contrasts()) {
    const auto& r = cell(m, "proposed", cd.name);
    c.expect(r.coverage >= 93.0,
             "proposed " + cd.name + " coverage " + fmt(r.coverage) + " >= 93");
  }
  const double mins = minutes_since(t0);
  c.expect(mins < 30.0, "runtime " + fmt(mins) + " min < 30");
  c.finish(mins);
  return mins;
}

// ---------------- criterion 3 ----------------
double criterion3() {
  auto t0 = Clock::now();
  Criterion c{"criterion 3: scenario 3 separation (200 reps, n=4000)"};
  MetricsTable m = run_criterion_study(3, 4000, 200,
                                       {{"naive", 200, 50, "glm"},
                                        {"msm", 200, 50, "glm"},
                                        {"proposed", 200, 50, "glm"}});
  {
    const auto& r = cell(m, "naive", "D_11_00");
    c.expect(std::fabs(r.bias - (-0.231)) <= 0.03,
             "naive D_11_00 bias " + fmt(r.bias) + " within -0.231 +- 0.03");
    c.expect(r.coverage <= 10.0, "naive D_11_00 coverage " + fmt(r.coverage) + " <= 10");
  }
  {
    const auto& r = cell(m, "msm", "D_01_00");
    c.expect(std::fabs(r.bias - (-0.060)) <= 0.02,
             "msm D_01_00 bias " + fmt(r.bias) + " within -0.060 +- 0.02");
    c.expect(r.coverage <= 80.0, "msm D_01_00 coverage " + fmt(r.coverage) + " <= 80");
  }
  for (const auto& cd : dgp_contrasts()) {
    const auto& r = cell(m, "proposed", cd.name);
    c.expect(std::fabs(r.bias) <= 0.02,
             "proposed " + cd.name + " |bias| " + fmt(std::fabs(r.bias)) + " <= 0.02");
    c.expect(r.coverage >= 93.0,
             "proposed " + cd.name + " coverage " + fmt(r.coverage) + " >= 93");
  }
  const double mins = minutes_since(t0);
  c.finish(mins);
  return mins;
}

// ---------------- criterion 4 ----------------
double criterion4() {
  auto t0 = Clock::now();
  Criterion c{"criterion 4: sample-size effect (200 reps, n=8000, scenario 3)"};
  MetricsTable m = run_criterion_study(3, 8000, 200, {{"naive", 200, 50, "glm"}});
  const auto& r = cell(m, "naive", "D_1_0");
  c.expect(r.coverage <= 6.0, "naive D_1_0 coverage " + fmt(r.coverage) + " <= 6");
  c.expect(std::fabs(r.bias - (-0.123)) <= 0.03,
           "naive D_1_0 bias " + fmt(r.bias) + " stays near -0.123 while coverage collapses");
  const double mins = minutes_since(t0);
  c.finish(mins);
  return mins;
}

// ---------------- criterion 5 ----------------
double criterion5() {
  auto t0 = Clock::now();
  Criterion c{"criterion 5: combine-rule hand algebra to 1e-12"};
  CombinedEstimate ce = rubin_combine({1.0, 2.0, 3.0}, {0.1, 0.1, 0.1});
  c.expect(std::fabs(ce.delta_bar - 2.0) < 1e-12, "delta_bar = 2");
  c.expect(std::fabs(ce.T_B - (0.1 + 4.0 / 3.0)) < 1e-12, "T_B = 0.1 + 4/3");
  c.expect(std::fabs(ce.nu - 2.0 * std::pow(1.0 + 0.1 / 4.0, 2.0)) < 1e-12,
           "nu = 2 (1 + 0.1/4)^2");
  const double mins = minutes_since(t0);
  c.finish(mins);
  return mins;
}

// ---------------- criterion 6 ----------------
double criterion6() {
  auto t0 = Clock::now();
  Criterion c{"criterion 6: property suites"};

  // monotonicity over generated rows (>= 1e5 across scenarios)
  {
    size_t checked = 0;
    bool mono = true;
    for (int scen = 1; scen <= 3; ++scen) {
      PopulationTable pop = generate_population(scenario_params(scen), 40000, 1000 + scen);
      for (size_t i = 0; i < pop.size(); ++i) {
        mono &= pop.s0[i] >= pop.s1[i];
        mono &= pop.s00[i] >= pop.s01[i] && pop.s01[i] >= pop.s11[i];
        mono &= pop.s00[i] <= pop.s0[i] && pop.s11[i] <= pop.s1[i];
        ++checked;
      }
    }
    c.expect(mono && checked >= 100000,
             "monotonicity holds in 100% of " + std::to_string(checked) + " generated rows");
  }

  // monotonicity of imputed survival matrices (>= 1e5 subject-replicates)
  {
    PopulationTable pop = generate_population(scenario_params(3), 200000, 77);
    ObservedPanel panel = sample_observed(pop, 2000, 78);
    EstimatorOptions opts;
    opts.seed = 79;
    opts.B = 50;
    std::vector<std::array<int8_t, 5>> cap;
    opts.capture_survival = &cap;
    proposed_estimate(panel, dgp_contrasts(), opts);
    bool mono = cap.size() >= 100000;
    for (const auto& row : cap) {
      mono &= row[0] >= row[1];                       // S0 >= S1
      mono &= row[2] >= row[3] && row[3] >= row[4];   // S00 >= S01 >= S11
      mono &= row[2] <= row[0] && row[4] <= row[1];   // absorbing across waves
    }
    c.expect(mono, "monotonicity holds in 100% of " + std::to_string(cap.size()) +
                       " imputed survival rows");
  }

  // T_B >= W over 1e4 fuzzed combines
  {
    Rng rng(6001);
    bool ok = true;
    for (int trial = 0; trial < 10000; ++trial) {
      const int B = 2 + static_cast<int>(rng.below(20));
      std::vector<double> d(B), w(B);
      for (int b = 0; b < B; ++b) {
        d[b] = 5.0 * rng.normal();
        w[b] = std::exp(2.0 * rng.normal());
      }
      CombinedEstimate ce = rubin_combine(d, w);
      ok &= ce.T_B >= ce.W_bar;
    }
    c.expect(ok, "T_B >= W_bar on 10000 fuzzed inputs");
  }

  // IRLS matches a coarse-to-fine grid MLE on 20 random small problems
  {
    bool ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(7000 + trial);
      const int n = 40;
      Eigen::MatrixXd X(n, 2);
      Eigen::VectorXd y(n);
      const double b0 = rng.normal(), b1 = rng.normal();
      for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = rng.normal();
        y(i) = rng.bernoulli(expit(b0 + b1 * X(i, 1))) ? 1.0 : 0.0;
      }
      if (y.sum() < 2 || y.sum() > n - 2) continue;
      WeightedDesign d{X, y, {}};
      FitArtifact fit = fit_logistic(d);
      if (fit.convergence == Convergence::separated) continue;
      auto loglik = [&](double a, double b) {
        double ll = 0.0;
        for (int i = 0; i < n; ++i) {
          const double eta = a + b * X(i, 1);
          ll += y(i) * eta - std::log1p(std::exp(eta));
        }
        return ll;
      };
      double c0 = 0.0, c1 = 0.0, half = 8.0;
      for (int round = 0; round < 14; ++round) {
        double best = -1e300, bb0 = c0, bb1 = c1;
        for (int a = -10; a <= 10; ++a) {
          for (int b = -10; b <= 10; ++b) {
            const double t0_ = c0 + half * a / 10.0, t1 = c1 + half * b / 10.0;
            const double ll = loglik(t0_, t1);
            if (ll > best) {
              best = ll;
              bb0 = t0_;
              bb1 = t1;
            }
          }
        }
        c0 = bb0;
        c1 = bb1;
        half /= 5.0;
      }
      worst = std::max({worst, std::fabs(fit.coef(0) - c0), std::fabs(fit.coef(1) - c1)});
      ok &= std::fabs(fit.coef(0) - c0) < 1e-4 && std::fabs(fit.coef(1) - c1) < 1e-4;
    }
    c.expect(ok, "IRLS matches grid-search MLE to 1e-4 (worst " + fmt(worst) + ")");
  }

  // stabilized weights are exactly one under constant propensity
  {
    PopulationTable pop = generate_population(scenario_params(2), 30000, 6100);
    ObservedPanel p = sample_observed(pop, 1000, 6101);
    MsmOptions mo;
    auto flat = [](int len, double v) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(len);
      x(0) = v;
      return x;
    };
    mo.fixed["z1_den"] = flat(2, 0.2);
    mo.fixed["z1_num"] = flat(1, 0.2);
    mo.fixed["z2_den"] = flat(3, -0.1);
    mo.fixed["z2_num"] = flat(2, -0.1);
    mo.fixed["z3_den"] = flat(4, 0.3);
    mo.fixed["z3_num"] = flat(2, 0.3);
    WeightSet ws = msm_weights(p, mo);
    bool ok = true;
    for (size_t i = 0; i < p.size(); ++i) ok &= std::fabs(ws.w_treat[2][i] - 1.0) < 1e-12;
    c.expect(ok, "stabilized treatment weights equal 1 under constant propensity");
  }

  // unit-weight msm equals naive exactly
  {
    PopulationTable pop = generate_population(scenario_params(3), 30000, 6200);
    ObservedPanel p = sample_observed(pop, 1200, 6201);
    EstimatorOptions opts;
    opts.seed = 6202;
    opts.n_boot = 50;
    double z1bar = 0.0;
    for (size_t i = 0; i < p.size(); ++i) z1bar += p.z[0][i];
    z1bar /= p.size();
    double n2 = 0, d2 = 0, n3 = 0, d3 = 0;
    for (size_t i = 0; i < p.size(); ++i) {
      if (p.z[0][i] == 0 && p.s[1][i] == 1 && p.z[1][i] >= 0) {
        n2 += p.z[1][i];
        d2 += 1;
      }
      if (p.regime2(i) == 0 && p.s[2][i] == 1 && p.z[2][i] >= 0) {
        n3 += p.z[2][i];
        d3 += 1;
      }
    }
    auto lv = [](double pr, int len) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(len);
      v(0) = logit(pr);
      return v;
    };
    opts.msm.death_weights = false;
    opts.msm.response_weights = false;
    opts.msm.fixed["z1_den"] = lv(z1bar, 2);
    opts.msm.fixed["z1_num"] = lv(z1bar, 1);
    opts.msm.fixed["z2_den"] = lv(n2 / d2, 3);
    opts.msm.fixed["z2_num"] = lv(n2 / d2, 2);
    opts.msm.fixed["z3_den"] = lv(n3 / d3, 4);
    opts.msm.fixed["z3_num"] = lv(n3 / d3, 2);
    auto msm = msm_estimate(p, dgp_contrasts(), opts);
    auto naive = naive_estimate(p, dgp_contrasts(), opts);
    bool ok = msm.size() == naive.size();
    for (size_t k = 0; ok && k < msm.size(); ++k) {
      ok &= std::fabs(msm[k].estimate - naive[k].estimate) < 1e-12;
      ok &= std::fabs(msm[k].ci_low - naive[k].ci_low) < 1e-10;
      ok &= std::fabs(msm[k].ci_high - naive[k].ci_high) < 1e-10;
    }
    c.expect(ok, "unit-weight msm equals naive exactly (point and intervals)");
  }

  const double mins = minutes_since(t0);
  c.finish(mins);
  return mins;
}

// ---------------- criterion 7 ----------------
double criterion7() {
  auto t0 = Clock::now();
  Criterion c{"criterion 7: BART backend properties"};

  // step-function RMSE halving vs intercept-only at n=500, m=50
  {
    const int n = 500;
    Rng rng(8001);
    Eigen::MatrixXd X(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = rng.normal();
      y(i) = X(i, 0) > 0 ? 1.0 : 0.0;
    }
    Rng chain(8002);
    BartPosterior post = bart_fit(X, y, bart_desk_config(), chain);
    Eigen::VectorXd fit = post.predict_mean(X);
    const double rmse = std::sqrt((fit - y).squaredNorm() / n);
    const double base = std::sqrt((y.array() - y.mean()).square().sum() / n);
    c.expect(rmse < 0.5 * base,
             "step-function rmse " + fmt(rmse) + " < 0.5 x intercept-only " + fmt(base));
  }

  // probit calibration on a null design within +-0.05 (regularization-scale
  // configuration: the pointwise window is a few-effective-df property)
  {
    const int n = 2000;
    Rng rng(8011);
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = rng.normal();
      X(i, 1) = rng.uniform();
      y(i) = rng.bernoulli(0.7) ? 1.0 : 0.0;
    }
    BartConfig calib = bart_desk_config();
    calib.m = 10;
    calib.split_alpha = 0.1;
    calib.split_beta = 3.0;
    calib.k = 5.0;
    calib.n_burn = 500;
    calib.n_keep = 1000;
    Rng chain(8012);
    BartPosterior post = bart_fit_probit(X, y, calib, chain);
    Eigen::VectorXd p = post.predict_mean(X);
    c.expect(p.minCoeff() > 0.65 && p.maxCoeff() < 0.75,
             "null-design probabilities within [0.65, 0.75] (got [" + fmt(p.minCoeff()) + ", " +
                 fmt(p.maxCoeff()) + "])");
    Rng chain2(8013);
    BartPosterior desk = bart_fit_probit(X, y, bart_desk_config(), chain2);
    const double mean_p = desk.predict_mean(X).mean();
    c.expect(std::fabs(mean_p - 0.7) < 0.03,
             "desk-scale mean-level calibration " + fmt(mean_p) + " within 0.7 +- 0.03");
  }

  // MIA totality on all-NA prediction rows
  {
    const int n = 400;
    Rng rng(8021);
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = rng.normal();
      X(i, 1) = rng.normal();
      y(i) = X(i, 0) + 0.2 * rng.normal();
      if (i % 5 == 0) X(i, 1) = std::numeric_limits<double>::quiet_NaN();
    }
    Rng chain(8022);
    BartPosterior post = bart_fit(X, y, bart_desk_config(), chain);
    Eigen::MatrixXd all_na(3, 2);
    all_na.setConstant(std::numeric_limits<double>::quiet_NaN());
    Eigen::MatrixXd pred = post.predict(all_na);
    c.expect(pred.allFinite(), "all-NA rows predict finite values through MIA routing");
    BartConfig no_mia = bart_desk_config();
    no_mia.mia_enabled = false;
    Rng chain2(8023);
    bool threw = false;
    try {
      bart_fit(X, y, no_mia, chain2);
    } catch (const std::exception&) {
      threw = true;
    }
    c.expect(threw, "disabling MIA on NA-containing data is an error");
  }

  // seed determinism
  {
    const int n = 300;
    Rng rng(8031);
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = rng.normal();
      X(i, 1) = rng.normal();
      y(i) = std::sin(X(i, 0)) + 0.3 * rng.normal();
    }
    BartConfig cfg = bart_desk_config();
    cfg.m = 20;
    Rng c1(8032), c2(8032);
    BartPosterior a = bart_fit(X, y, cfg, c1);
    BartPosterior b = bart_fit(X, y, cfg, c2);
    c.expect((a.predict(X) - b.predict(X)).lpNorm<Eigen::Infinity>() == 0.0,
             "identical seeds give identical kept draws");
  }

  const double mins = minutes_since(t0);
  c.expect(mins < 10.0, "runtime " + fmt(mins) + " min < 10");
  c.finish(mins);
  return mins;
}

// ---------------- criterion 8 ----------------
double criterion8(double desk_minutes) {
  auto t0 = Clock::now();
  Criterion c{"criterion 8: desk-scale runtime and quick profile"};
  c.expect(desk_minutes < 240.0,
           "criteria 1-4 total " + fmt(desk_minutes) + " min < 240");
  const std::string out = "/tmp/strata_quick_profile";
  const std::string cmd = std::string(STRATA_CLI_PATH) +
                          " simulate --quick --scenario 1 --seed 11 --out-dir " + out +
                          " > /dev/null 2>&1";
  auto tq = Clock::now();
  const int status = std::system(cmd.c_str());
  const double quick_min = minutes_since(tq);
  c.expect(WEXITSTATUS(status) == 0, "--quick profile exits 0");
  c.expect(quick_min < 5.0, "--quick profile " + fmt(quick_min) + " min < 5");
  c.finish(minutes_since(t0) + desk_minutes * 0.0);
  return minutes_since(t0);
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  auto t0 = Clock::now();
  double desk = 0.0;
  desk += criterion1();
  desk += criterion2();
  desk += criterion3();
  desk += criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8(desk);
  std::printf("total runtime %.1f min, %d failing criteria\n", minutes_since(t0), g_failures);
  return g_failures;
}
