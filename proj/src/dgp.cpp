#include "strata/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "strata/csvio.hpp"
#include "strata/dist.hpp"
#include "strata/rng.hpp"

namespace strata {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double lookup(const std::map<std::string, double>& m, const std::string& name,
              const char* family) {
  auto it = m.find(name);
  if (it == m.end()) {
    throw std::invalid_argument(std::string("unknown ") + family + " coefficient: " + name);
  }
  return it->second;
}
}  // namespace

double ParameterSet::g(const std::string& name) const { return lookup(gamma, name, "gamma"); }
double ParameterSet::b(const std::string& name) const { return lookup(beta, name, "beta"); }
double ParameterSet::a(const std::string& name) const { return lookup(alpha, name, "alpha"); }

const std::vector<std::string>& ParameterSet::gamma_names() {
  static const std::vector<std::string> names = {
      "gamma0", "gamma1", "gamma2", "gammaY0_2", "gamma3", "gammaY0_3", "gammaY00"};
  return names;
}

const std::vector<std::string>& ParameterSet::beta_names() {
  static const std::vector<std::string> names = {
      "beta0",      "betaZ",      "betaV",      "betaVZ",     "betaZ01",    "betaZ11",
      "betaY0Z00",  "betaY0Z01",  "betaY1Z11",  "betaVZ01",   "betaVZ11",   "betaZ001",
      "betaZ011",   "betaZ111",   "betaY00Z000", "betaY00Z001", "betaY01Z011",
      "betaY11Z111", "betaY0Z0",  "betaY1Z1",   "betaVZ001",  "betaVZ011",  "betaVZ111"};
  return names;
}

const std::vector<std::string>& ParameterSet::alpha_names() {
  static const std::vector<std::string> names = {
      "alpha0",     "alphaY1",    "alphaY0",    "alphaZ",     "alphaV",     "alphaVZ",
      "alphaZ01",   "alphaZ11",   "alphaY00Z00", "alphaY01Z01", "alphaY11Z11",
      "alphaVZ01",  "alphaVZ11"};
  return names;
}

void ParameterSet::validate() const {
  if (!(baseline_sd > 0.0)) throw std::invalid_argument("baseline_sd must be > 0");
  if (!(noise_sd > 0.0)) throw std::invalid_argument("noise_sd must be > 0");
  auto check = [](const std::map<std::string, double>& m, const std::vector<std::string>& names,
                  const char* family) {
    for (const auto& n : names) {
      if (!m.count(n)) {
        throw std::invalid_argument(std::string("missing ") + family + " coefficient: " + n);
      }
    }
    if (m.size() != names.size()) {
      for (const auto& [k, _] : m) {
        if (std::find(names.begin(), names.end(), k) == names.end()) {
          throw std::invalid_argument(std::string("unexpected ") + family + " coefficient: " + k);
        }
      }
    }
  };
  check(gamma, gamma_names(), "gamma");
  check(beta, beta_names(), "beta");
  check(alpha, alpha_names(), "alpha");
}

std::string ParameterSet::to_json() const {
  nlohmann::json j;
  j["baseline_mean"] = baseline_mean;
  j["baseline_sd"] = baseline_sd;
  j["noise_sd"] = noise_sd;
  j["gamma"] = gamma;
  j["beta"] = beta;
  j["alpha"] = alpha;
  return j.dump(2);
}

ParameterSet ParameterSet::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ParameterSet p;
  p.baseline_mean = j.at("baseline_mean").get<double>();
  p.baseline_sd = j.at("baseline_sd").get<double>();
  p.noise_sd = j.at("noise_sd").get<double>();
  p.gamma = j.at("gamma").get<std::map<std::string, double>>();
  p.beta = j.at("beta").get<std::map<std::string, double>>();
  p.alpha = j.at("alpha").get<std::map<std::string, double>>();
  p.validate();
  return p;
}

ParameterSet scenario_params(int scenario) {
  if (scenario < 1 || scenario > 3) {
    throw std::invalid_argument("unknown scenario id: " + std::to_string(scenario));
  }
  const int i = scenario - 1;
  auto pick = [i](double s1, double s2, double s3) {
    const double vals[3] = {s1, s2, s3};
    return vals[i];
  };
  ParameterSet p;
  p.baseline_mean = pick(0, 17, 17);
  p.baseline_sd = 2.0;
  p.noise_sd = 1.0;
  p.gamma = {
      {"gamma0", pick(0, 2, 2)},
      {"gamma1", pick(-0.02, -0.2, -0.2)},
      {"gamma2", pick(-0.002, -0.02, -0.02)},
      {"gammaY0_2", pick(-0.02, -0.2, -0.2)},
      {"gamma3", pick(-0.0002, -0.002, -0.002)},
      {"gammaY0_3", pick(-0.002, -0.02, -0.02)},
      {"gammaY00", pick(-0.02, -0.2, -0.2)},
  };
  p.beta = {
      {"beta0", pick(0, 5.3, 5.3)},
      {"betaZ", -1.5},
      {"betaV", pick(0.015, 0.15, 0.2)},
      {"betaVZ", pick(-0.005, -0.11, -0.05)},
      {"betaZ01", -1.5},
      {"betaZ11", -1.0},
      {"betaY0Z00", pick(0.015, 0.02, 0.3)},
      {"betaY0Z01", pick(0.01, 0.015, 0.2)},
      {"betaY1Z11", pick(0.005, 0.01, 0.1)},
      {"betaVZ01", pick(-0.00011, -0.011, -0.011)},
      {"betaVZ11", pick(-0.00005, -0.005, -0.005)},
      {"betaZ001", -1.5},
      {"betaZ011", -1.0},
      {"betaZ111", -0.5},
      {"betaY00Z000", pick(0.015, 0.02, 0.3)},
      {"betaY00Z001", pick(0.01, 0.015, 0.2)},
      {"betaY01Z011", pick(0.005, 0.01, 0.1)},
      {"betaY11Z111", pick(0.0025, 0.005, 0.05)},
      {"betaY0Z0", pick(0.0008, 0.08, 0.08)},
      {"betaY1Z1", pick(0.0003, 0.03, 0.03)},
      {"betaVZ001", pick(-0.00011, -0.011, -0.011)},
      {"betaVZ011", pick(-0.00005, -0.005, -0.005)},
      {"betaVZ111", pick(-0.00003, -0.003, -0.003)},
  };
  p.alpha = {
      {"alpha0", pick(0, 1, 0)},
      {"alphaY1", pick(0.005, 0.00625, 0.0625)},
      {"alphaY0", pick(0.01, 0.0125, 0.125)},
      {"alphaZ", pick(-0.01, -0.2, -0.2)},
      {"alphaV", pick(0.002, 0.02, 0.02)},
      {"alphaVZ", pick(-0.002, -0.02, -0.02)},
      {"alphaZ01", pick(-0.01, -0.2, -0.2)},
      {"alphaZ11", pick(-0.015, -0.1, -0.1)},
      {"alphaY00Z00", pick(0.01, 0.0125, 0.125)},
      {"alphaY01Z01", pick(0.005, 0.00625, 0.0625)},
      {"alphaY11Z11", pick(0.0025, 0.003125, 0.03125)},
      {"alphaVZ01", pick(-0.0001, -0.02, -0.02)},
      {"alphaVZ11", pick(-0.0005, -0.05, -0.05)},
  };
  p.validate();
  return p;
}

void PopulationTable::resize(size_t n) {
  v.resize(n);
  z1.resize(n);
  z2.resize(n);
  z3.resize(n);
  y1.resize(n);
  y0.resize(n);
  s1.resize(n);
  s0.resize(n);
  y00.resize(n);
  y01.resize(n);
  y11.resize(n);
  s00.resize(n);
  s01.resize(n);
  s11.resize(n);
  y000.resize(n);
  y001.resize(n);
  y011.resize(n);
  y111.resize(n);
}

namespace {

// flattened coefficients so the per-subject kernel stays free of map lookups
struct Coef {
  double vmean, vsd, esd;
  double g0, g1, g2, gY0_2, g3, gY0_3, gY00;
  double b0, bZ, bV, bVZ, bZ01, bZ11, bY0Z00, bY0Z01, bY1Z11, bVZ01, bVZ11;
  double bZ001, bZ011, bZ111, bY00Z000, bY00Z001, bY01Z011, bY11Z111, bY0Z0, bY1Z1;
  double bVZ001, bVZ011, bVZ111;
  double a0, aY1, aY0, aZ, aV, aVZ, aZ01, aZ11, aY00Z00, aY01Z01, aY11Z11, aVZ01, aVZ11;

  explicit Coef(const ParameterSet& p)
      : vmean(p.baseline_mean), vsd(p.baseline_sd), esd(p.noise_sd),
        g0(p.g("gamma0")), g1(p.g("gamma1")), g2(p.g("gamma2")), gY0_2(p.g("gammaY0_2")),
        g3(p.g("gamma3")), gY0_3(p.g("gammaY0_3")), gY00(p.g("gammaY00")),
        b0(p.b("beta0")), bZ(p.b("betaZ")), bV(p.b("betaV")), bVZ(p.b("betaVZ")),
        bZ01(p.b("betaZ01")), bZ11(p.b("betaZ11")), bY0Z00(p.b("betaY0Z00")),
        bY0Z01(p.b("betaY0Z01")), bY1Z11(p.b("betaY1Z11")), bVZ01(p.b("betaVZ01")),
        bVZ11(p.b("betaVZ11")), bZ001(p.b("betaZ001")), bZ011(p.b("betaZ011")),
        bZ111(p.b("betaZ111")), bY00Z000(p.b("betaY00Z000")), bY00Z001(p.b("betaY00Z001")),
        bY01Z011(p.b("betaY01Z011")), bY11Z111(p.b("betaY11Z111")), bY0Z0(p.b("betaY0Z0")),
        bY1Z1(p.b("betaY1Z1")), bVZ001(p.b("betaVZ001")), bVZ011(p.b("betaVZ011")),
        bVZ111(p.b("betaVZ111")),
        a0(p.a("alpha0")), aY1(p.a("alphaY1")), aY0(p.a("alphaY0")), aZ(p.a("alphaZ")),
        aV(p.a("alphaV")), aVZ(p.a("alphaVZ")), aZ01(p.a("alphaZ01")), aZ11(p.a("alphaZ11")),
        aY00Z00(p.a("alphaY00Z00")), aY01Z01(p.a("alphaY01Z01")), aY11Z11(p.a("alphaY11Z11")),
        aVZ01(p.a("alphaVZ01")), aVZ11(p.a("alphaVZ11")) {}
};

// slot layout per subject: V, Z1, e1, S(t2), Z2, e2, S(t3), Z3, e3
enum Slot : uint64_t { kV = 0, kZ1, kE1, kS2, kZ2, kE2, kS3, kZ3, kE3 };

void subject_row(const Coef& c, uint64_t seed, size_t i, PopulationTable& t) {
  const double v = c.vmean + c.vsd * normal_at(seed, i, kV);
  const int z1 = uniform_at(seed, i, kZ1) < expit(c.g0 + c.g1 * v) ? 1 : 0;
  const double e1 = c.esd * normal_at(seed, i, kE1);
  const double y1 = c.b0 + c.bZ + c.bV * v + c.bVZ * v + e1;
  const double y0 = c.b0 + c.bV * v + e1;

  const double us2 = uniform_at(seed, i, kS2);
  int s1 = us2 < expit(c.a0 + c.aY1 * y1 + c.aZ + c.aV * v + c.aVZ * v) ? 1 : 0;
  int s0 = us2 < expit(c.a0 + c.aY0 * y0 + c.aV * v) ? 1 : 0;
  if (s1) s0 = 1;  // monotonicity at t=2

  const int alive2 = z1 ? s1 : s0;
  int z2;
  if (!alive2) {
    z2 = -1;
  } else if (z1) {
    z2 = 1;  // absorbing
  } else {
    z2 = uniform_at(seed, i, kZ2) < expit(c.g0 + c.gY0_2 * y0 + c.g2 * v) ? 1 : 0;
  }

  const double e2 = c.esd * normal_at(seed, i, kE2);
  const double y00 = s0 ? c.b0 + c.bY0Z00 * y0 + c.bV * v + e2 : kNaN;
  const double y01 = s0 ? c.b0 + c.bZ01 + c.bY0Z01 * y0 + c.bV * v + c.bVZ01 * v + e2 : kNaN;
  const double y11 = s1 ? c.b0 + c.bZ11 + c.bY1Z11 * y1 + c.bV * v + c.bVZ11 * v + e2 : kNaN;

  const double us3 = uniform_at(seed, i, kS3);
  int s00 = 0, s01 = 0, s11 = 0;
  if (s0) {
    s00 = us3 < expit(c.a0 + c.aY00Z00 * y00 + c.aV * v) ? 1 : 0;
    s01 = us3 < expit(c.a0 + c.aZ01 + c.aY01Z01 * y01 + c.aV * v + c.aVZ01 * v) ? 1 : 0;
  }
  if (s1) {
    s11 = us3 < expit(c.a0 + c.aZ11 + c.aY11Z11 * y11 + c.aV * v + c.aVZ11 * v) ? 1 : 0;
  }
  // monotonicity at t=3 (s11=1 implies s1=1 implies s0=1, so no resurrection)
  if (s11) s01 = 1;
  if (s01) s00 = 1;

  const int r2 = z1 ? 2 : (z2 == 1 ? 1 : 0);  // observed wave-2 regime 00/01/11
  const int alive3 = !alive2 ? 0 : (r2 == 2 ? s11 : (r2 == 1 ? s01 : s00));
  int z3;
  if (!alive3) {
    z3 = -1;
  } else if (z1 || z2 == 1) {
    z3 = 1;
  } else {
    z3 = uniform_at(seed, i, kZ3) < expit(c.g0 + c.gY00 * y00 + c.gY0_3 * y0 + c.g3 * v) ? 1 : 0;
  }

  const double e3 = c.esd * normal_at(seed, i, kE3);
  t.v[i] = v;
  t.z1[i] = static_cast<int8_t>(z1);
  t.z2[i] = static_cast<int8_t>(z2);
  t.z3[i] = static_cast<int8_t>(z3);
  t.y1[i] = y1;
  t.y0[i] = y0;
  t.s1[i] = static_cast<int8_t>(s1);
  t.s0[i] = static_cast<int8_t>(s0);
  t.y00[i] = y00;
  t.y01[i] = y01;
  t.y11[i] = y11;
  t.s00[i] = static_cast<int8_t>(s00);
  t.s01[i] = static_cast<int8_t>(s01);
  t.s11[i] = static_cast<int8_t>(s11);
  t.y000[i] = s00 ? c.b0 + c.bY00Z000 * y00 + c.bY0Z0 * y0 + c.bV * v + e3 : kNaN;
  t.y001[i] = s00 ? c.b0 + c.bZ001 + c.bY00Z001 * y00 + c.bY0Z0 * y0 + c.bV * v +
                        c.bVZ001 * v + e3
                  : kNaN;
  t.y011[i] = s01 ? c.b0 + c.bZ011 + c.bY01Z011 * y01 + c.bY0Z0 * y0 + c.bV * v +
                        c.bVZ011 * v + e3
                  : kNaN;
  t.y111[i] = s11 ? c.b0 + c.bZ111 + c.bY11Z111 * y11 + c.bY1Z1 * y1 + c.bV * v +
                        c.bVZ111 * v + e3
                  : kNaN;
}

}  // namespace

PopulationTable generate_population(const ParameterSet& params, size_t size, uint64_t seed) {
  if (size < 1) throw std::invalid_argument("population size must be >= 1");
  params.validate();
  PopulationTable t;
  t.params = params;
  t.seed = seed;
  t.resize(size);
  const Coef c(params);
  const int64_t n = static_cast<int64_t>(size);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    subject_row(c, seed, static_cast<size_t>(i), t);
  }
  return t;
}

PopulationTable generate_population_serial(const ParameterSet& params, size_t size,
                                           uint64_t seed) {
  if (size < 1) throw std::invalid_argument("population size must be >= 1");
  params.validate();
  PopulationTable t;
  t.params = params;
  t.seed = seed;
  t.resize(size);
  const Coef c(params);
  for (size_t i = 0; i < size; ++i) {
    subject_row(c, seed, i, t);
  }
  return t;
}

const std::vector<std::string>& contrast_names() {
  static const std::vector<std::string> names = {
      "D_1_0",     "D_01_00",   "D_11_00",   "D_11_01",   "D_001_000",
      "D_011_000", "D_111_000", "D_011_001", "D_111_001", "D_111_011"};
  return names;
}

TrueEffects true_effects(const PopulationTable& pop) {
  const size_t n = pop.size();
  TrueEffects te;
  te.contrast = contrast_names();
  te.stratum = {"all",        "S0=1",       "S0=S1=1",    "S0=S1=1",    "S00=1",
                "S00=S01=1",  "S00=S11=1",  "S00=S01=1",  "S00=S11=1",  "S01=S11=1"};
  te.delta.assign(10, 0.0);

  auto stratum_mean_diff = [n](const std::vector<double>& ya, const std::vector<double>& yb,
                               auto in_stratum, const std::string& label) {
    double sum = 0.0;
    size_t cnt = 0;
    for (size_t i = 0; i < n; ++i) {
      if (!in_stratum(i)) continue;
      sum += ya[i] - yb[i];
      ++cnt;
    }
    if (cnt == 0) throw std::runtime_error("empty principal stratum: " + label);
    return sum / static_cast<double>(cnt);
  };

  te.delta[0] = stratum_mean_diff(pop.y1, pop.y0, [](size_t) { return true; }, "all");
  te.delta[1] = stratum_mean_diff(pop.y01, pop.y00,
                                  [&](size_t i) { return pop.s0[i] == 1; }, "S0=1");
  auto both2 = [&](size_t i) { return pop.s0[i] == 1 && pop.s1[i] == 1; };
  te.delta[2] = stratum_mean_diff(pop.y11, pop.y00, both2, "S0=S1=1");
  te.delta[3] = stratum_mean_diff(pop.y11, pop.y01, both2, "S0=S1=1");
  te.delta[4] = stratum_mean_diff(pop.y001, pop.y000,
                                  [&](size_t i) { return pop.s00[i] == 1; }, "S00=1");
  auto s00s01 = [&](size_t i) { return pop.s00[i] == 1 && pop.s01[i] == 1; };
  auto s00s11 = [&](size_t i) { return pop.s00[i] == 1 && pop.s11[i] == 1; };
  auto s01s11 = [&](size_t i) { return pop.s01[i] == 1 && pop.s11[i] == 1; };
  te.delta[5] = stratum_mean_diff(pop.y011, pop.y000, s00s01, "S00=S01=1");
  te.delta[6] = stratum_mean_diff(pop.y111, pop.y000, s00s11, "S00=S11=1");
  te.delta[7] = stratum_mean_diff(pop.y011, pop.y001, s00s01, "S00=S01=1");
  te.delta[8] = stratum_mean_diff(pop.y111, pop.y001, s00s11, "S00=S11=1");
  te.delta[9] = stratum_mean_diff(pop.y111, pop.y011, s01s11, "S01=S11=1");
  return te;
}

ObservedPanel sample_observed(const PopulationTable& pop, size_t n, uint64_t seed) {
  const size_t pop_n = pop.size();
  if (n > pop_n) {
    throw std::invalid_argument("sample size " + std::to_string(n) +
                                " exceeds population size " + std::to_string(pop_n));
  }
  // Floyd's algorithm: n distinct indices, deterministic in seed
  Rng rng(seed, /*stream=*/0x5a3cull);
  std::set<uint64_t> chosen;
  for (uint64_t j = pop_n - n; j < pop_n; ++j) {
    uint64_t t = rng.below(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }

  ObservedPanel p;
  p.n_waves = 3;
  p.absorbing_treatment = true;
  const size_t m = chosen.size();
  p.v.resize(m);
  p.z.assign(3, std::vector<int8_t>(m, -1));
  p.y.assign(3, std::vector<double>(m, kNaN));
  p.s.assign(3, std::vector<int8_t>(m, 0));
  p.r.assign(3, std::vector<int8_t>(m, 0));

  size_t k = 0;
  for (uint64_t idx : chosen) {
    const size_t i = static_cast<size_t>(idx);
    p.v[k] = pop.v[i];
    const int z1 = pop.z1[i];
    p.z[0][k] = static_cast<int8_t>(z1);
    p.y[0][k] = z1 ? pop.y1[i] : pop.y0[i];
    p.s[0][k] = 1;
    p.r[0][k] = 1;
    const int alive2 = z1 ? pop.s1[i] : pop.s0[i];
    p.s[1][k] = static_cast<int8_t>(alive2);
    if (alive2) {
      const int z2 = pop.z2[i];
      p.z[1][k] = static_cast<int8_t>(z2);
      const int r2 = z1 ? 2 : (z2 == 1 ? 1 : 0);
      p.y[1][k] = r2 == 2 ? pop.y11[i] : (r2 == 1 ? pop.y01[i] : pop.y00[i]);
      p.r[1][k] = 1;
      const int alive3 = r2 == 2 ? pop.s11[i] : (r2 == 1 ? pop.s01[i] : pop.s00[i]);
      p.s[2][k] = static_cast<int8_t>(alive3);
      if (alive3) {
        const int z3 = pop.z3[i];
        p.z[2][k] = static_cast<int8_t>(z3);
        const int r3 = r2 == 2 ? 3 : (r2 == 1 ? 2 : (z3 == 1 ? 1 : 0));
        p.y[2][k] = r3 == 3 ? pop.y111[i]
                            : (r3 == 2 ? pop.y011[i] : (r3 == 1 ? pop.y001[i] : pop.y000[i]));
        p.r[2][k] = 1;
      }
    }
    ++k;
  }
  return p;
}

namespace {

std::string cell(double x, const std::string& na) {
  return std::isnan(x) ? na : format_double(x);
}
std::string cell(int v, const std::string& na) {
  return v < 0 ? na : std::to_string(v);
}

}  // namespace

void write_population_csv(std::ostream& os, const PopulationTable& pop, const std::string& na) {
  write_csv_row(os, {"v",   "z1",  "y1",  "y0",  "s1",  "s0",  "z2",  "y00", "y01",
                     "y11", "s00", "s01", "s11", "z3",  "y000", "y001", "y011", "y111"});
  for (size_t i = 0; i < pop.size(); ++i) {
    write_csv_row(
        os, {format_double(pop.v[i]), std::to_string(pop.z1[i]), format_double(pop.y1[i]),
             format_double(pop.y0[i]), std::to_string(pop.s1[i]), std::to_string(pop.s0[i]),
             cell(static_cast<int>(pop.z2[i]), na), cell(pop.y00[i], na), cell(pop.y01[i], na),
             cell(pop.y11[i], na), std::to_string(pop.s00[i]), std::to_string(pop.s01[i]),
             std::to_string(pop.s11[i]), cell(static_cast<int>(pop.z3[i]), na),
             cell(pop.y000[i], na), cell(pop.y001[i], na), cell(pop.y011[i], na),
             cell(pop.y111[i], na)});
  }
}

void write_population_csv_file(const std::string& path, const PopulationTable& pop,
                               const std::string& na) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  write_population_csv(f, pop, na);
}

PopulationTable read_population_csv_file(const std::string& path, const std::string& na) {
  CsvTable t = read_csv_file(path);
  const std::vector<std::string> want = {"v",   "z1",  "y1",  "y0",  "s1",  "s0",
                                         "z2",  "y00", "y01", "y11", "s00", "s01",
                                         "s11", "z3",  "y000", "y001", "y011", "y111"};
  std::vector<int> col(want.size());
  for (size_t j = 0; j < want.size(); ++j) {
    col[j] = t.column(want[j]);
    if (col[j] < 0) throw std::runtime_error("population CSV missing column: " + want[j]);
  }
  PopulationTable pop;
  pop.resize(t.rows.size());
  auto num = [&na](const std::string& s) { return s == na || s.empty() ? kNaN : std::stod(s); };
  auto flag = [&na](const std::string& s) {
    return s == na || s.empty() ? int8_t{-1} : static_cast<int8_t>(std::stoi(s));
  };
  for (size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    pop.v[i] = num(row[col[0]]);
    pop.z1[i] = flag(row[col[1]]);
    pop.y1[i] = num(row[col[2]]);
    pop.y0[i] = num(row[col[3]]);
    pop.s1[i] = flag(row[col[4]]);
    pop.s0[i] = flag(row[col[5]]);
    pop.z2[i] = flag(row[col[6]]);
    pop.y00[i] = num(row[col[7]]);
    pop.y01[i] = num(row[col[8]]);
    pop.y11[i] = num(row[col[9]]);
    pop.s00[i] = flag(row[col[10]]);
    pop.s01[i] = flag(row[col[11]]);
    pop.s11[i] = flag(row[col[12]]);
    pop.z3[i] = flag(row[col[13]]);
    pop.y000[i] = num(row[col[14]]);
    pop.y001[i] = num(row[col[15]]);
    pop.y011[i] = num(row[col[16]]);
    pop.y111[i] = num(row[col[17]]);
  }
  return pop;
}

}  // namespace strata
