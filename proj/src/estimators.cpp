#include "strata/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "strata/dist.hpp"
#include "strata/regress.hpp"

namespace strata {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int wave2_prefix(int reg2) { return reg2 == 2 ? 1 : 0; }       // wave-1 arm of a wave-2 regime
int wave3_prefix(int reg3) { return reg3 <= 1 ? 0 : reg3 - 1; }  // wave-2 regime of a wave-3 one

std::string regime_string(int wave, int reg) {
  static const char* w2[] = {"00", "01", "11"};
  static const char* w3[] = {"000", "001", "011", "111"};
  if (wave == 1) return reg ? "1" : "0";
  if (wave == 2) return w2[reg];
  return w3[reg];
}

}  // namespace

const std::vector<ContrastDef>& dgp_contrasts() {
  static const std::vector<ContrastDef> defs = [] {
    std::vector<ContrastDef> v;
    auto add = [&v](int wave, int a, int b, const std::string& stratum, const std::string& label) {
      ContrastDef d;
      d.wave = wave;
      d.reg_a = a;
      d.reg_b = b;
      d.name = "D_" + regime_string(wave, a) + "_" + regime_string(wave, b);
      d.stratum = stratum;
      d.label = label;
      v.push_back(d);
    };
    add(1, 1, 0, "all", "shock vs none, wave 1");
    add(2, 1, 0, "S0=1", "2y shock vs none, wave 2");
    add(2, 2, 0, "S0=S1=1", "4y shock vs none, wave 2");
    add(2, 2, 1, "S0=S1=1", "4y shock vs 2y shock, wave 2");
    add(3, 1, 0, "S00=1", "2y shock vs none");
    add(3, 2, 0, "S00=S01=1", "4y shock vs none");
    add(3, 3, 0, "S00=S11=1", "6y shock vs none");
    add(3, 2, 1, "S00=S01=1", "4y shock vs 2y shock");
    add(3, 3, 1, "S00=S11=1", "6y shock vs 2y shock");
    add(3, 3, 2, "S01=S11=1", "6y shock vs 4y shock");
    return v;
  }();
  return defs;
}

std::vector<ContrastDef> contrasts_for_waves(int n_waves) {
  std::vector<ContrastDef> out;
  for (const auto& c : dgp_contrasts()) {
    if (c.wave <= n_waves) out.push_back(c);
  }
  return out;
}

CombinedEstimate rubin_combine(const std::vector<double>& deltas,
                               const std::vector<double>& within_vars) {
  const size_t B = deltas.size();
  if (B < 2) throw std::invalid_argument("rubin_combine: need B >= 2 replicates");
  if (within_vars.size() != B) {
    throw std::invalid_argument("rubin_combine: within_vars length mismatch");
  }
  for (double w : within_vars) {
    if (w < 0.0 || !std::isfinite(w)) {
      throw std::invalid_argument("rubin_combine: within variances must be finite and >= 0");
    }
  }
  CombinedEstimate ce;
  ce.B = static_cast<int>(B);
  ce.delta_bar = std::accumulate(deltas.begin(), deltas.end(), 0.0) / B;
  ce.W_bar = std::accumulate(within_vars.begin(), within_vars.end(), 0.0) / B;
  double ss = 0.0;
  for (double d : deltas) ss += (d - ce.delta_bar) * (d - ce.delta_bar);
  ce.D_between = ss / (B - 1);
  ce.T_B = ce.W_bar + (1.0 + 1.0 / B) * ce.D_between;
  double q;
  if (ce.D_between > 0.0) {
    ce.nu = (B - 1) * std::pow(1.0 + ce.W_bar / (ce.D_between * (B + 1)), 2.0);
    ce.nu = std::max(1.0, ce.nu);
    if (ce.nu > 1e6) {
      ce.nu = 1e6;
      q = inv_normal_cdf(0.975);
    } else {
      q = student_t_quantile(0.975, ce.nu);
    }
  } else {
    ce.nu = 1e6;  // formula diverges; normal reference
    q = inv_normal_cdf(0.975);
  }
  const double half = q * std::sqrt(std::max(0.0, ce.T_B));
  ce.ci_low = ce.delta_bar - half;
  ce.ci_high = ce.delta_bar + half;
  return ce;
}

namespace {

// ---------- shared small helpers ----------

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const double h = p * (v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

std::vector<size_t> bootstrap_indices(uint64_t seed, uint64_t tag, size_t n) {
  Rng rng(seed, splitmix64(0xB0075ull ^ tag));
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = static_cast<size_t>(rng.below(n));
  return idx;
}

std::vector<size_t> stratified_bootstrap_indices(uint64_t seed, uint64_t tag,
                                                 const std::vector<int8_t>& stratum) {
  const size_t n = stratum.size();
  std::vector<size_t> by[2];
  for (size_t i = 0; i < n; ++i) by[stratum[i] == 1 ? 1 : 0].push_back(i);
  Rng rng(seed, splitmix64(0xB0057ull ^ tag));
  std::vector<size_t> idx;
  idx.reserve(n);
  for (int s = 0; s < 2; ++s) {
    const auto& pool = by[s];
    for (size_t k = 0; k < pool.size(); ++k) {
      idx.push_back(pool[static_cast<size_t>(rng.below(pool.size()))]);
    }
  }
  return idx;
}

ObservedPanel subset_panel(const ObservedPanel& p, const std::vector<size_t>& idx) {
  ObservedPanel out;
  out.n_waves = p.n_waves;
  out.absorbing_treatment = p.absorbing_treatment;
  out.extra_baseline_names = p.extra_baseline_names;
  const size_t m = idx.size();
  out.v.resize(m);
  if (!p.id.empty()) out.id.resize(m);
  out.extra_baseline.assign(p.extra_baseline.size(), std::vector<double>(m));
  out.z.assign(p.n_waves, std::vector<int8_t>(m));
  out.y.assign(p.n_waves, std::vector<double>(m));
  out.s.assign(p.n_waves, std::vector<int8_t>(m));
  out.r.assign(p.n_waves, std::vector<int8_t>(m));
  for (size_t k = 0; k < m; ++k) {
    const size_t i = idx[k];
    out.v[k] = p.v[i];
    if (!p.id.empty()) out.id[k] = p.id[i];
    for (size_t c = 0; c < p.extra_baseline.size(); ++c) {
      out.extra_baseline[c][k] = p.extra_baseline[c][i];
    }
    for (int t = 0; t < p.n_waves; ++t) {
      out.z[t][k] = p.z[t][i];
      out.y[t][k] = p.y[t][i];
      out.s[t][k] = p.s[t][i];
      out.r[t][k] = p.r[t][i];
    }
  }
  return out;
}

int wave_regime(const ObservedPanel& p, size_t i, int wave) {
  if (wave == 1) return p.z[0][i];
  if (wave == 2) return p.regime2(i);
  return p.regime3(i);
}

// observed, surviving, responding outcome values of a regime arm
std::vector<double> arm_outcomes(const ObservedPanel& p, int wave, int reg) {
  std::vector<double> out;
  for (size_t i = 0; i < p.size(); ++i) {
    if (wave_regime(p, i, wave) != reg) continue;
    if (p.r[wave - 1][i] != 1) continue;
    const double y = p.y[wave - 1][i];
    if (!std::isnan(y)) out.push_back(y);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

// ---------- logistic/linear fits over row subsets ----------

// logistic fit that degrades to the empirical constant when the response
// does not vary (no deaths, saturated cells)
struct ProbModel {
  bool constant = false;
  double const_p = 0.5;
  FitArtifact fit;

  double prob(const Eigen::RowVectorXd& x) const {
    if (constant) return const_p;
    return clamp_prob(expit((x * fit.coef)(0)));
  }
  Eigen::VectorXd probs(const Eigen::MatrixXd& X) const {
    if (constant) return Eigen::VectorXd::Constant(X.rows(), const_p);
    return fit.predict(X);
  }
};

ProbModel fit_prob(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const Eigen::VectorXd* fixed_coef = nullptr) {
  ProbModel m;
  if (fixed_coef) {
    if (fixed_coef->size() != X.cols()) {
      throw std::invalid_argument("fixed coefficient vector has wrong length");
    }
    m.fit.kind = FitKind::logistic;
    m.fit.coef = *fixed_coef;
    m.fit.kept.assign(X.cols(), true);
    return m;
  }
  const double ymin = y.minCoeff(), ymax = y.maxCoeff();
  if (ymin == ymax) {
    m.constant = true;
    m.const_p = ymin;  // exactly 0 or 1; ratios of matching numerators stay 1
    return m;
  }
  WeightedDesign d;
  d.X = X;
  d.y = y;
  m.fit = fit_logistic(d);
  return m;
}

}  // namespace

// ---------- naive ----------

namespace {

std::vector<double> contrast_points(const ObservedPanel& p,
                                    const std::vector<ContrastDef>& contrasts, bool strict) {
  std::vector<double> est(contrasts.size(), kNaN);
  for (size_t k = 0; k < contrasts.size(); ++k) {
    const auto& c = contrasts[k];
    auto a = arm_outcomes(p, c.wave, c.reg_a);
    auto b = arm_outcomes(p, c.wave, c.reg_b);
    if (a.size() < 2 || b.size() < 2) {
      if (strict) {
        throw std::runtime_error("naive_estimate: contrast " + c.name + " has an empty arm (" +
                                 regime_string(c.wave, c.reg_a) + ": " + std::to_string(a.size()) +
                                 " rows, " + regime_string(c.wave, c.reg_b) + ": " +
                                 std::to_string(b.size()) + " rows)");
      }
      return {};
    }
    est[k] = mean_of(a) - mean_of(b);
  }
  return est;
}

// generic percentile bootstrap over full-panel point estimators
template <typename PointFn>
std::vector<EstimateResult> percentile_bootstrap(const ObservedPanel& panel,
                                                 const std::vector<ContrastDef>& contrasts,
                                                 const EstimatorOptions& opts,
                                                 const std::string& method, PointFn point) {
  std::vector<double> center = point(panel, /*strict=*/true);
  const int nb = opts.n_boot;
  std::vector<std::vector<double>> boot(nb);
  std::exception_ptr err;
  int redraws = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : redraws)
  for (int b = 0; b < nb; ++b) {
    if (err) continue;
    try {
      std::vector<double> est;
      for (int attempt = 0;; ++attempt) {
        if (attempt > opts.redraw_cap_factor) {
          throw std::runtime_error(method + ": bootstrap replicate " + std::to_string(b) +
                                   " kept producing empty arms after " +
                                   std::to_string(attempt) + " redraws");
        }
        auto idx = bootstrap_indices(opts.seed, splitmix64(b) ^ splitmix64(attempt * 7919 + 1),
                                     panel.size());
        ObservedPanel pb = subset_panel(panel, idx);
        try {
          est = point(pb, false);
        } catch (const std::runtime_error&) {
          est.clear();  // degenerate resample; redraw
        }
        if (!est.empty()) break;
        ++redraws;
      }
      boot[b] = std::move(est);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  std::vector<EstimateResult> out;
  for (size_t k = 0; k < contrasts.size(); ++k) {
    std::vector<double> draws(nb);
    for (int b = 0; b < nb; ++b) draws[b] = boot[b][k];
    EstimateResult r;
    r.method = method;
    r.contrast = contrasts[k].name;
    r.stratum = contrasts[k].stratum;
    r.estimate = center[k];
    r.ci_low = percentile(draws, 0.025);
    r.ci_high = percentile(draws, 0.975);
    r.n_redraws = redraws;
    out.push_back(r);
  }
  return out;
}

}  // namespace

std::vector<EstimateResult> naive_estimate(const ObservedPanel& panel,
                                           const std::vector<ContrastDef>& contrasts,
                                           const EstimatorOptions& opts) {
  panel.validate();
  return percentile_bootstrap(panel, contrasts, opts, "naive",
                              [&contrasts](const ObservedPanel& p, bool strict) {
                                return contrast_points(p, contrasts, strict);
                              });
}

// ---------- baseline adjusted ----------

namespace {

std::vector<double> adjusted_points(const ObservedPanel& p,
                                    const std::vector<ContrastDef>& contrasts, bool strict) {
  // per wave: survivors-responders regression on regime dummies + baselines,
  // contrast = standardized mean difference over the pooled survivor rows
  std::vector<double> est(contrasts.size(), kNaN);
  const int n_regimes[4] = {0, 2, 3, 4};
  for (int wave = 1; wave <= p.n_waves; ++wave) {
    bool needed = false;
    for (const auto& c : contrasts) needed |= c.wave == wave;
    if (!needed) continue;

    std::vector<size_t> rows;
    std::vector<int> regs;
    for (size_t i = 0; i < p.size(); ++i) {
      const int reg = wave_regime(p, i, wave);
      if (reg < 0 || p.r[wave - 1][i] != 1 || std::isnan(p.y[wave - 1][i])) continue;
      rows.push_back(i);
      regs.push_back(reg);
    }
    const int nreg = n_regimes[wave];
    const size_t p_extra = p.extra_baseline.size();
    const size_t ncol = 1 + (nreg - 1) + 1 + p_extra;
    if (rows.size() < ncol + 2) {
      if (strict) throw std::runtime_error("baseline_adjusted: too few survivors at wave");
      return {};
    }
    Eigen::MatrixXd X(rows.size(), ncol);
    Eigen::VectorXd y(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
      const size_t i = rows[r];
      size_t c = 0;
      X(r, c++) = 1.0;
      for (int g = 1; g < nreg; ++g) X(r, c++) = regs[r] == g ? 1.0 : 0.0;
      X(r, c++) = p.v[i];
      for (size_t e = 0; e < p_extra; ++e) X(r, c++) = p.extra_baseline[e][i];
      y(r) = p.y[wave - 1][i];
    }
    // regimes must all be populated
    std::vector<int> count(nreg, 0);
    for (int g : regs) count[g]++;
    bool empty_arm = false;
    for (const auto& c : contrasts) {
      if (c.wave == wave && (count[c.reg_a] < 2 || count[c.reg_b] < 2)) empty_arm = true;
    }
    if (empty_arm) {
      if (strict) throw std::runtime_error("baseline_adjusted: empty regime arm");
      return {};
    }
    WeightedDesign d;
    d.X = X;
    d.y = y;
    FitArtifact fit = fit_linear(d);

    // standardized means: swap regime dummies, average predictions over rows
    auto standardized = [&](int reg) {
      Eigen::MatrixXd Xs = X;
      for (size_t r = 0; r < rows.size(); ++r) {
        for (int g = 1; g < nreg; ++g) Xs(r, g) = reg == g ? 1.0 : 0.0;
      }
      return fit.predict(Xs).mean();
    };
    std::vector<double> mu(nreg);
    for (int g = 0; g < nreg; ++g) mu[g] = standardized(g);
    for (size_t k = 0; k < contrasts.size(); ++k) {
      if (contrasts[k].wave == wave) est[k] = mu[contrasts[k].reg_a] - mu[contrasts[k].reg_b];
    }
  }
  return est;
}

}  // namespace

std::vector<EstimateResult> baseline_adjusted_estimate(const ObservedPanel& panel,
                                                       const std::vector<ContrastDef>& contrasts,
                                                       const EstimatorOptions& opts) {
  panel.validate();
  return percentile_bootstrap(panel, contrasts, opts, "adjusted",
                              [&contrasts](const ObservedPanel& p, bool strict) {
                                return adjusted_points(p, contrasts, strict);
                              });
}

// ---------- MSM ----------

void WeightSet::check() const {
  for (int t = 0; t < 3; ++t) {
    for (size_t i = 0; i < w_final[t].size(); ++i) {
      const double w = w_final[t][i];
      if (!std::isfinite(w) || w <= 0.0) {
        throw std::runtime_error("non-finite or non-positive weight at wave " +
                                 std::to_string(t + 1) + ", row " + std::to_string(i + 1));
      }
      const double prod = w_treat[t][i] * w_death[t][i] * w_resp[t][i];
      if (std::fabs(prod - w) > 1e-12 * std::max(1.0, std::fabs(w))) {
        throw std::runtime_error("weight components do not multiply to the final weight");
      }
    }
  }
}

WeightSet msm_weights(const ObservedPanel& panel, const MsmOptions& opts) {
  const size_t n = panel.size();
  const int T = panel.n_waves;
  if (T > 3) throw std::invalid_argument("msm_weights: supports up to three waves");
  WeightSet ws;
  for (int t = 0; t < 3; ++t) {
    ws.w_treat[t].assign(n, 1.0);
    ws.w_death[t].assign(n, 1.0);
    ws.w_resp[t].assign(n, 1.0);
    ws.w_final[t].assign(n, 1.0);
    ws.den_treat[t].assign(n, kNaN);
    ws.den_death[t].assign(n, kNaN);
  }

  auto fixed_coef = [&](const std::string& key) -> const Eigen::VectorXd* {
    auto it = opts.fixed.find(key);
    return it == opts.fixed.end() ? nullptr : &it->second;
  };
  auto clamp_count = [&ws](double p) {
    const double c = clamp_prob(p);
    if (c != p) ++ws.n_clamped;
    return c;
  };

  const bool num_paper = opts.numerator == MsmOptions::Numerator::paper;
  const bool num_unstab = opts.numerator == MsmOptions::Numerator::unstabilized;

  // --- wave-1 treatment: den Z1 ~ [1, v]; num marginal ---
  {
    std::vector<size_t> rows(n);
    std::iota(rows.begin(), rows.end(), size_t{0});
    Eigen::MatrixXd Xden(n, 2), Xnum(n, 1);
    Eigen::VectorXd y(n);
    for (size_t i = 0; i < n; ++i) {
      Xden(i, 0) = 1.0;
      Xden(i, 1) = panel.v[i];
      Xnum(i, 0) = 1.0;
      y(i) = panel.z[0][i];
    }
    ProbModel den = fit_prob(Xden, y, fixed_coef("z1_den"));
    ProbModel num = fit_prob(Xnum, y, fixed_coef("z1_num"));
    Eigen::VectorXd pd = den.probs(Xden), pn = num.probs(Xnum);
    for (size_t i = 0; i < n; ++i) {
      const double d = clamp_count(pd(i));
      const double m = clamp_count(pn(i));
      const double fd = panel.z[0][i] == 1 ? d : 1.0 - d;
      const double fm = num_unstab ? 1.0 : (panel.z[0][i] == 1 ? m : 1.0 - m);
      ws.den_treat[0][i] = fd;
      ws.w_treat[0][i] = fm / fd;
    }
  }

  // --- wave-2 treatment among z1=0 survivors: den Z2 ~ [1, y1, v]; num [1, v] ---
  if (T >= 2) {
    std::vector<size_t> rows;
    for (size_t i = 0; i < n; ++i) {
      if (panel.z[0][i] == 0 && panel.s[1][i] == 1 && panel.z[1][i] >= 0 &&
          !std::isnan(panel.y[0][i])) {
        rows.push_back(i);
      }
    }
    if (!rows.empty()) {
      Eigen::MatrixXd Xden(rows.size(), 3), Xnum(rows.size(), num_paper ? 2 : 1);
      Eigen::VectorXd y(rows.size());
      for (size_t r = 0; r < rows.size(); ++r) {
        const size_t i = rows[r];
        Xden(r, 0) = 1.0;
        Xden(r, 1) = panel.y[0][i];
        Xden(r, 2) = panel.v[i];
        Xnum(r, 0) = 1.0;
        if (num_paper) Xnum(r, 1) = panel.v[i];
        y(r) = panel.z[1][i];
      }
      ProbModel den = fit_prob(Xden, y, fixed_coef("z2_den"));
      ProbModel num = fit_prob(Xnum, y, fixed_coef("z2_num"));
      Eigen::VectorXd pd = den.probs(Xden), pn = num.probs(Xnum);
      for (size_t r = 0; r < rows.size(); ++r) {
        const size_t i = rows[r];
        const double d = clamp_count(pd(r));
        const double m = clamp_count(pn(r));
        const double fd = panel.z[1][i] == 1 ? d : 1.0 - d;
        const double fm = num_unstab ? 1.0 : (panel.z[1][i] == 1 ? m : 1.0 - m);
        ws.den_treat[1][i] = fd;
        ws.w_treat[1][i] = fm / fd;
      }
    }
  }

  // --- wave-3 treatment among 00 survivors: den Z3 ~ [1, y2, y1, v]; num [1, v] ---
  if (T >= 3) {
    std::vector<size_t> rows;
    for (size_t i = 0; i < n; ++i) {
      if (panel.regime2(i) == 0 && panel.s[2][i] == 1 && panel.z[2][i] >= 0 &&
          !std::isnan(panel.y[1][i]) && !std::isnan(panel.y[0][i])) {
        rows.push_back(i);
      }
    }
    if (!rows.empty()) {
      Eigen::MatrixXd Xden(rows.size(), 4), Xnum(rows.size(), num_paper ? 2 : 1);
      Eigen::VectorXd y(rows.size());
      for (size_t r = 0; r < rows.size(); ++r) {
        const size_t i = rows[r];
        Xden(r, 0) = 1.0;
        Xden(r, 1) = panel.y[1][i];
        Xden(r, 2) = panel.y[0][i];
        Xden(r, 3) = panel.v[i];
        Xnum(r, 0) = 1.0;
        if (num_paper) Xnum(r, 1) = panel.v[i];
        y(r) = panel.z[2][i];
      }
      ProbModel den = fit_prob(Xden, y, fixed_coef("z3_den"));
      ProbModel num = fit_prob(Xnum, y, fixed_coef("z3_num"));
      Eigen::VectorXd pd = den.probs(Xden), pn = num.probs(Xnum);
      for (size_t r = 0; r < rows.size(); ++r) {
        const size_t i = rows[r];
        const double d = clamp_count(pd(r));
        const double m = clamp_count(pn(r));
        const double fd = panel.z[2][i] == 1 ? d : 1.0 - d;
        const double fm = num_unstab ? 1.0 : (panel.z[2][i] == 1 ? m : 1.0 - m);
        ws.den_treat[2][i] = fd;
        ws.w_treat[2][i] = fm / fd;
      }
    }
  }

  // --- death weights ---
  if (opts.death_weights && T >= 2) {
    // wave 2: den per arm S2 ~ [1, y1, v]; num pooled [1, v]
    for (int arm = 0; arm < 2; ++arm) {
      std::vector<size_t> rows;
      for (size_t i = 0; i < n; ++i) {
        if (panel.z[0][i] == arm && !std::isnan(panel.y[0][i])) rows.push_back(i);
      }
      if (rows.empty()) continue;
      Eigen::MatrixXd X(rows.size(), 3);
      Eigen::VectorXd y(rows.size());
      for (size_t r = 0; r < rows.size(); ++r) {
        const size_t i = rows[r];
        X(r, 0) = 1.0;
        X(r, 1) = panel.y[0][i];
        X(r, 2) = panel.v[i];
        y(r) = panel.s[1][i];
      }
      ProbModel den = fit_prob(X, y, fixed_coef("s2_den_" + std::to_string(arm)));
      Eigen::VectorXd pd = den.probs(X);
      for (size_t r = 0; r < rows.size(); ++r) {
        const size_t i = rows[r];
        if (panel.s[1][i] != 1) continue;  // weights feed survivor outcome means
        ws.den_death[1][i] = clamp_count(pd(r));
      }
    }
    {
      Eigen::MatrixXd Xnum(n, num_paper ? 2 : 1);
      Eigen::VectorXd y(n);
      for (size_t i = 0; i < n; ++i) {
        Xnum(i, 0) = 1.0;
        if (num_paper) Xnum(i, 1) = panel.v[i];
        y(i) = panel.s[1][i];
      }
      ProbModel num = fit_prob(Xnum, y, fixed_coef("s2_num"));
      Eigen::VectorXd pn = num.probs(Xnum);
      for (size_t i = 0; i < n; ++i) {
        if (panel.s[1][i] != 1 || std::isnan(ws.den_death[1][i])) continue;
        const double fm = num_unstab ? 1.0 : clamp_count(pn(i));
        ws.w_death[1][i] = fm / ws.den_death[1][i];
      }
    }
  }
  if (opts.death_weights && T >= 3) {
    // wave 3: den per wave-2 regime S3 ~ [1, y2, v]; num pooled among alive [1, v]
    static const char* keys[3] = {"s3_den_00", "s3_den_01", "s3_den_11"};
    for (int reg = 0; reg < 3; ++reg) {
      std::vector<size_t> rows;
      for (size_t i = 0; i < n; ++i) {
        if (panel.regime2(i) == reg && !std::isnan(panel.y[1][i])) rows.push_back(i);
      }
      if (rows.empty()) continue;
      Eigen::MatrixXd X(rows.size(), 3);
      Eigen::VectorXd y(rows.size());
      for (size_t r = 0; r < rows.size(); ++r) {
        const size_t i = rows[r];
        X(r, 0) = 1.0;
        X(r, 1) = panel.y[1][i];
        X(r, 2) = panel.v[i];
        y(r) = panel.s[2][i];
      }
      ProbModel den = fit_prob(X, y, fixed_coef(keys[reg]));
      Eigen::VectorXd pd = den.probs(X);
      for (size_t r = 0; r < rows.size(); ++r) {
        const size_t i = rows[r];
        if (panel.s[2][i] != 1) continue;
        ws.den_death[2][i] = clamp_count(pd(r));
      }
    }
    {
      std::vector<size_t> rows;
      for (size_t i = 0; i < n; ++i) {
        if (panel.s[1][i] == 1) rows.push_back(i);
      }
      if (!rows.empty()) {
        Eigen::MatrixXd Xnum(rows.size(), num_paper ? 2 : 1);
        Eigen::VectorXd y(rows.size());
        for (size_t r = 0; r < rows.size(); ++r) {
          Xnum(r, 0) = 1.0;
          if (num_paper) Xnum(r, 1) = panel.v[rows[r]];
          y(r) = panel.s[2][rows[r]];
        }
        ProbModel num = fit_prob(Xnum, y, fixed_coef("s3_num"));
        Eigen::VectorXd pn = num.probs(Xnum);
        for (size_t r = 0; r < rows.size(); ++r) {
          const size_t i = rows[r];
          if (panel.s[2][i] != 1 || std::isnan(ws.den_death[2][i])) continue;
          const double fm = num_unstab ? 1.0 : clamp_count(pn(r));
          ws.w_death[2][i] = fm / ws.den_death[2][i];
        }
      }
    }
  }

  // --- response weights (identically 1 when nobody drops out) ---
  if (opts.response_weights) {
    for (int t = 0; t < T; ++t) {
      std::vector<size_t> rows;
      bool any_miss = false;
      for (size_t i = 0; i < n; ++i) {
        if (panel.s[t][i] != 1) continue;
        rows.push_back(i);
        any_miss |= panel.r[t][i] == 0;
      }
      if (!any_miss || rows.empty()) continue;  // w_resp stays exactly 1
      const bool has_lag = t > 0;
      std::vector<size_t> fit_rows;
      for (size_t i : rows) {
        if (!has_lag || !std::isnan(panel.y[t - 1][i])) fit_rows.push_back(i);
      }
      const int pden = has_lag ? 3 : 2;
      Eigen::MatrixXd Xden(fit_rows.size(), pden), Xnum(fit_rows.size(), num_paper ? 2 : 1);
      Eigen::VectorXd y(fit_rows.size());
      for (size_t r = 0; r < fit_rows.size(); ++r) {
        const size_t i = fit_rows[r];
        Xden(r, 0) = 1.0;
        Xden(r, 1) = panel.v[i];
        if (has_lag) Xden(r, 2) = panel.y[t - 1][i];
        Xnum(r, 0) = 1.0;
        if (num_paper) Xnum(r, 1) = panel.v[i];
        y(r) = panel.r[t][i];
      }
      ProbModel den = fit_prob(Xden, y);
      ProbModel num = fit_prob(Xnum, y);
      Eigen::VectorXd pd = den.probs(Xden), pn = num.probs(Xnum);
      for (size_t r = 0; r < fit_rows.size(); ++r) {
        const size_t i = fit_rows[r];
        if (panel.r[t][i] != 1) continue;
        const double fm = num_unstab ? 1.0 : clamp_count(pn(r));
        ws.w_resp[t][i] = fm / clamp_count(pd(r));
      }
    }
  }

  // cumulative products across waves, then totals
  for (int t = 1; t < T && t < 3; ++t) {
    for (size_t i = 0; i < n; ++i) {
      ws.w_treat[t][i] *= ws.w_treat[t - 1][i];
      ws.w_death[t][i] *= ws.w_death[t - 1][i];
      ws.w_resp[t][i] *= ws.w_resp[t - 1][i];
    }
  }
  for (int t = 0; t < 3; ++t) {
    for (size_t i = 0; i < n; ++i) {
      ws.w_final[t][i] = ws.w_treat[t][i] * ws.w_death[t][i] * ws.w_resp[t][i];
    }
  }
  ws.check();
  return ws;
}

PositivityReport check_positivity(const WeightSet& ws, double threshold) {
  PositivityReport rep;
  rep.threshold = threshold;
  rep.n_clamped = ws.n_clamped;
  const size_t n = ws.w_final[0].size();
  std::vector<double> final_w;
  for (size_t i = 0; i < n; ++i) {
    double w = 1.0;
    for (int t = 2; t >= 0; --t) {
      if (!ws.w_final[t].empty()) {
        w = ws.w_final[t][i];
        break;
      }
    }
    final_w.push_back(w);
    rep.max_weight = std::max(rep.max_weight, w);
    if (w > threshold) {
      ++rep.n_beyond_threshold;
      if (rep.flagged_rows.size() < 20) rep.flagged_rows.push_back(i);
    }
  }
  for (int t = 0; t < 3; ++t) {
    for (size_t i = 0; i < n; ++i) {
      if (!std::isnan(ws.den_treat[t][i])) {
        rep.min_den_treat = std::min(rep.min_den_treat, ws.den_treat[t][i]);
        if (ws.den_treat[t][i] <= kProbClamp && rep.flagged_rows.size() < 20) {
          rep.flagged_rows.push_back(i);
        }
      }
      if (!std::isnan(ws.den_death[t][i])) {
        rep.min_den_death = std::min(rep.min_den_death, ws.den_death[t][i]);
      }
    }
  }
  const std::array<double, 5> qs = {0.01, 0.25, 0.50, 0.75, 0.99};
  for (size_t k = 0; k < qs.size(); ++k) rep.weight_quantiles[k] = percentile(final_w, qs[k]);
  return rep;
}

std::string PositivityReport::to_string() const {
  std::ostringstream os;
  os << "positivity report\n"
     << "  min fitted treatment prob: " << min_den_treat << "\n"
     << "  min fitted survival prob:  " << min_den_death << "\n"
     << "  final weights (1/25/50/75/99%): ";
  for (double q : weight_quantiles) os << q << " ";
  os << "\n  max weight: " << max_weight << "\n"
     << "  clamped probabilities: " << n_clamped << "\n"
     << "  weights beyond " << threshold << ": " << n_beyond_threshold << "\n";
  if (!flagged_rows.empty()) {
    os << "  flagged rows:";
    for (size_t i : flagged_rows) os << " " << (i + 1);
    os << "\n";
  }
  return os.str();
}

namespace {

std::vector<double> msm_points(const ObservedPanel& p, const std::vector<ContrastDef>& contrasts,
                               const MsmOptions& mo, bool strict) {
  WeightSet ws = msm_weights(p, mo);
  std::vector<double> est(contrasts.size(), kNaN);
  for (size_t k = 0; k < contrasts.size(); ++k) {
    const auto& c = contrasts[k];
    const auto& w = ws.w_final[c.wave - 1];
    double num_a = 0.0, den_a = 0.0, num_b = 0.0, den_b = 0.0;
    int cnt_a = 0, cnt_b = 0;
    for (size_t i = 0; i < p.size(); ++i) {
      const int reg = wave_regime(p, i, c.wave);
      if (p.r[c.wave - 1][i] != 1 || std::isnan(p.y[c.wave - 1][i])) continue;
      if (reg == c.reg_a) {
        num_a += w[i] * p.y[c.wave - 1][i];
        den_a += w[i];
        ++cnt_a;
      } else if (reg == c.reg_b) {
        num_b += w[i] * p.y[c.wave - 1][i];
        den_b += w[i];
        ++cnt_b;
      }
    }
    if (cnt_a < 2 || cnt_b < 2) {
      if (strict) throw std::runtime_error("msm_estimate: contrast " + c.name + " has an empty weighted arm");
      return {};
    }
    est[k] = num_a / den_a - num_b / den_b;
  }
  return est;
}

}  // namespace

std::vector<EstimateResult> msm_estimate(const ObservedPanel& panel,
                                         const std::vector<ContrastDef>& contrasts,
                                         const EstimatorOptions& opts) {
  panel.validate();
  return percentile_bootstrap(panel, contrasts, opts, "msm",
                              [&contrasts, &opts](const ObservedPanel& p, bool strict) {
                                return msm_points(p, contrasts, opts.msm, strict);
                              });
}

// ---------- shared machinery for the imputation-based estimators ----------

namespace {

struct CompletedWave2 {
  // per subject: completed potential outcomes and survival, NaN/-1 where the
  // regime prefix is dead
  std::array<std::vector<double>, 2> y1;   // per wave-1 arm
  std::array<std::vector<int8_t>, 2> s2;   // survival entering wave 2 per arm
  std::array<std::vector<double>, 2> y2_0; // regimes 00, 01 (prefix 0) and
  std::vector<double> y2_11;               // regime 11 (prefix 1)
};

double weighted_mean(const std::vector<double>& y, const std::vector<double>& w) {
  double s = 0.0, t = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    s += w[i] * y[i];
    t += w[i];
  }
  return s / t;
}

// count-weighted unpaired pooled variance of a stratum mean difference
double pooled_within_variance(const std::vector<double>& ya, const std::vector<double>& yb,
                              const std::vector<double>& cnt) {
  double tot = 0.0, ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < cnt.size(); ++i) {
    tot += cnt[i];
    ma += cnt[i] * ya[i];
    mb += cnt[i] * yb[i];
  }
  ma /= tot;
  mb /= tot;
  double va = 0.0, vb = 0.0;
  for (size_t i = 0; i < cnt.size(); ++i) {
    va += cnt[i] * (ya[i] - ma) * (ya[i] - ma);
    vb += cnt[i] * (yb[i] - mb) * (yb[i] - mb);
  }
  if (tot < 2.0) return 0.0;
  va /= (tot - 1.0);
  vb /= (tot - 1.0);
  return va / tot + vb / tot;
}

struct ReplicateAccumulator {
  std::vector<std::vector<double>> deltas;   // [contrast][replicate]
  std::vector<std::vector<double>> withins;

  explicit ReplicateAccumulator(size_t k) : deltas(k), withins(k) {}
};

}  // namespace

// ---------- PENCOMP ----------

namespace {

struct PencompReplicate {
  std::vector<double> delta;
  std::vector<double> within;
};

// one bootstrap replicate; throws on empty regime cells (caller redraws)
PencompReplicate pencomp_replicate(const ObservedPanel& p,
                                   const std::vector<ContrastDef>& contrasts,
                                   const EstimatorOptions& opts, uint64_t tag) {
  const size_t n = p.size();
  std::vector<size_t> idx = opts.stratify_bootstrap
                                ? stratified_bootstrap_indices(opts.seed, tag, p.z[0])
                                : bootstrap_indices(opts.seed, tag, n);
  ObservedPanel b = subset_panel(p, idx);
  Rng rng(opts.seed, splitmix64(0x9E4C0345ull ^ tag));

  const size_t m = b.size();
  const size_t n_extra = b.extra_baseline.size();

  auto baseline_matrix = [&](const std::vector<size_t>& rows) {
    Eigen::MatrixXd X(rows.size(), 1 + 1 + n_extra);
    for (size_t r = 0; r < rows.size(); ++r) {
      X(r, 0) = 1.0;
      X(r, 1) = b.v[rows[r]];
      for (size_t e = 0; e < n_extra; ++e) X(r, 2 + e) = b.extra_baseline[e][rows[r]];
    }
    return X;
  };

  std::vector<size_t> all(m);
  std::iota(all.begin(), all.end(), size_t{0});

  // step 2: wave-1 propensity
  Eigen::MatrixXd Xb = baseline_matrix(all);
  Eigen::VectorXd z1v(m);
  for (size_t i = 0; i < m; ++i) z1v(i) = b.z[0][i];
  ProbModel pz1 = fit_prob(Xb, z1v);
  Eigen::VectorXd p1 = pz1.probs(Xb);

  // steps 3-4: per-arm spline-of-propensity outcome models, imputation
  std::array<std::vector<double>, 2> y1c;
  for (int arm = 0; arm < 2; ++arm) {
    Eigen::VectorXd prop(m);
    for (size_t i = 0; i < m; ++i) {
      prop(i) = logit(clamp_prob(arm == 1 ? p1(i) : 1.0 - p1(i)));
    }
    std::vector<size_t> cases;
    for (size_t i = 0; i < m; ++i) {
      if (b.z[0][i] == arm && b.r[0][i] == 1 && !std::isnan(b.y[0][i])) cases.push_back(i);
    }
    if (cases.size() < 4 + n_extra) {
      throw std::runtime_error("pencomp: wave-1 arm " + std::to_string(arm) + " too small");
    }
    WeightedDesign d;
    d.X = baseline_matrix(cases);
    d.y.resize(cases.size());
    Eigen::VectorXd prop_cases(cases.size());
    for (size_t r = 0; r < cases.size(); ++r) {
      d.y(r) = b.y[0][cases[r]];
      prop_cases(r) = prop(cases[r]);
    }
    FitArtifact fit;
    try {
      fit = fit_pspline(prop_cases, d);
    } catch (const std::invalid_argument&) {
      // constant propensity (null design): fall back to the parametric part
      fit = fit_linear(d);
    }
    y1c[arm].assign(m, kNaN);
    Eigen::MatrixXd Xall = fit.kind == FitKind::pspline ? pspline_design(fit, prop, Xb) : Xb;
    Eigen::VectorXd drawn = draw_prediction(fit, Xall, rng);
    for (size_t i = 0; i < m; ++i) {
      y1c[arm][i] =
          (b.z[0][i] == arm && b.r[0][i] == 1 && !std::isnan(b.y[0][i])) ? b.y[0][i] : drawn(i);
    }
  }

  // step 5: wave-2 treatment propensity among alive z1=0 subjects
  std::vector<size_t> alive2;
  for (size_t i = 0; i < m; ++i) {
    if (b.s[1][i] == 1) alive2.push_back(i);
  }
  std::vector<size_t> z2rows;
  for (size_t i : alive2) {
    if (b.z[0][i] == 0 && b.z[1][i] >= 0) z2rows.push_back(i);
  }
  if (z2rows.size() < 4) throw std::runtime_error("pencomp: too few untreated wave-2 rows");
  Eigen::MatrixXd Xz2(z2rows.size(), 2 + 1 + n_extra);
  Eigen::VectorXd z2v(z2rows.size());
  for (size_t r = 0; r < z2rows.size(); ++r) {
    const size_t i = z2rows[r];
    Xz2(r, 0) = 1.0;
    Xz2(r, 1) = y1c[0][i];
    Xz2(r, 2) = b.v[i];
    for (size_t e = 0; e < n_extra; ++e) Xz2(r, 3 + e) = b.extra_baseline[e][i];
    z2v(r) = b.z[1][i];
  }
  ProbModel pz2 = fit_prob(Xz2, z2v);

  // cumulative regime propensities for every alive subject
  auto z2_prob = [&](size_t i) {
    Eigen::RowVectorXd x(2 + 1 + n_extra);
    x(0) = 1.0;
    x(1) = y1c[0][i];
    x(2) = b.v[i];
    for (size_t e = 0; e < n_extra; ++e) x(3 + e) = b.extra_baseline[e][i];
    return pz2.prob(x);
  };

  // steps 6-7: per-regime spline models and imputation over alive subjects
  std::array<std::vector<double>, 3> y2c;  // 00, 01, 11
  for (int reg = 0; reg < 3; ++reg) {
    const int prefix = wave2_prefix(reg);
    std::vector<double> prop_all(m, kNaN);
    for (size_t i : alive2) {
      double pr;
      if (reg == 2) {
        pr = p1(i);
      } else {
        const double pz = z2_prob(i);
        pr = (1.0 - p1(i)) * (reg == 1 ? pz : 1.0 - pz);
      }
      prop_all[i] = logit(clamp_prob(pr));
    }
    std::vector<size_t> cases;
    for (size_t i : alive2) {
      if (p.n_waves >= 2 && b.regime2(i) == reg && b.r[1][i] == 1 && !std::isnan(b.y[1][i])) {
        cases.push_back(i);
      }
    }
    if (cases.size() < 5 + n_extra) {
      throw std::runtime_error("pencomp: wave-2 regime " + regime_string(2, reg) + " too small");
    }
    WeightedDesign d;
    d.X.resize(cases.size(), 2 + 1 + n_extra);
    d.y.resize(cases.size());
    Eigen::VectorXd prop_cases(cases.size());
    for (size_t r = 0; r < cases.size(); ++r) {
      const size_t i = cases[r];
      d.X(r, 0) = 1.0;
      d.X(r, 1) = y1c[prefix][i];
      d.X(r, 2) = b.v[i];
      for (size_t e = 0; e < n_extra; ++e) d.X(r, 3 + e) = b.extra_baseline[e][i];
      d.y(r) = b.y[1][i];
      prop_cases(r) = prop_all[i];
    }
    FitArtifact fit;
    try {
      fit = fit_pspline(prop_cases, d);
    } catch (const std::invalid_argument&) {
      fit = fit_linear(d);
    }
    y2c[reg].assign(m, kNaN);
    for (size_t i : alive2) {
      if (b.regime2(i) == reg && b.r[1][i] == 1 && !std::isnan(b.y[1][i])) {
        y2c[reg][i] = b.y[1][i];
        continue;
      }
      Eigen::MatrixXd Xrow(1, 2 + 1 + n_extra);
      Xrow(0, 0) = 1.0;
      Xrow(0, 1) = y1c[prefix][i];
      Xrow(0, 2) = b.v[i];
      for (size_t e = 0; e < n_extra; ++e) Xrow(0, 3 + e) = b.extra_baseline[e][i];
      Eigen::VectorXd pv = Eigen::VectorXd::Constant(1, prop_all[i]);
      Eigen::MatrixXd Xfull = fit.kind == FitKind::pspline ? pspline_design(fit, pv, Xrow) : Xrow;
      y2c[reg][i] = draw_prediction(fit, Xfull, rng)(0);
    }
  }

  // contrasts over the completed bootstrap sample
  PencompReplicate rep;
  for (const auto& c : contrasts) {
    std::vector<double> ya, yb, cnt;
    if (c.wave == 1) {
      for (size_t i = 0; i < m; ++i) {
        ya.push_back(y1c[c.reg_a][i]);
        yb.push_back(y1c[c.reg_b][i]);
        cnt.push_back(1.0);
      }
    } else {
      for (size_t i : alive2) {
        ya.push_back(y2c[c.reg_a][i]);
        yb.push_back(y2c[c.reg_b][i]);
        cnt.push_back(1.0);
      }
    }
    if (ya.size() < 2) throw std::runtime_error("pencomp: empty analysis set for " + c.name);
    double sa = 0.0, sb = 0.0;
    for (size_t i = 0; i < ya.size(); ++i) {
      sa += ya[i];
      sb += yb[i];
    }
    rep.delta.push_back(sa / ya.size() - sb / yb.size());
    rep.within.push_back(pooled_within_variance(ya, yb, cnt));
  }
  return rep;
}

}  // namespace

std::vector<EstimateResult> pencomp_estimate(const ObservedPanel& panel,
                                             const std::vector<ContrastDef>& contrasts,
                                             const EstimatorOptions& opts) {
  panel.validate();
  if (panel.n_waves < 2) throw std::invalid_argument("pencomp_estimate: need a two-period panel");
  for (const auto& c : contrasts) {
    if (c.wave > 2) {
      throw std::invalid_argument("pencomp_estimate covers two periods; contrast " + c.name +
                                  " is at wave " + std::to_string(c.wave));
    }
  }
  const int B = opts.B;
  if (B < 2) throw std::invalid_argument("pencomp_estimate: B must be >= 2");

  ReplicateAccumulator acc(contrasts.size());
  int total_redraws = 0;
  const int cap = opts.redraw_cap_factor * B;
  std::vector<PencompReplicate> reps(B);
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic) reduction(+ : total_redraws)
  for (int b = 0; b < B; ++b) {
    if (err) continue;
    try {
      bool done = false;
      for (int attempt = 0; attempt <= opts.redraw_cap_factor && !done; ++attempt) {
        try {
          reps[b] = pencomp_replicate(panel, contrasts,
                                      opts, splitmix64(b) ^ splitmix64(attempt * 40503 + 11));
          done = true;
        } catch (const std::runtime_error&) {
          ++total_redraws;
          if (total_redraws > cap) throw;
        }
      }
      if (!done) {
        throw std::runtime_error("pencomp_estimate: replicate " + std::to_string(b) +
                                 " failed after redraw cap");
      }
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  for (int b = 0; b < B; ++b) {
    for (size_t k = 0; k < contrasts.size(); ++k) {
      acc.deltas[k].push_back(reps[b].delta[k]);
      acc.withins[k].push_back(reps[b].within[k]);
    }
  }
  std::vector<EstimateResult> out;
  for (size_t k = 0; k < contrasts.size(); ++k) {
    CombinedEstimate ce = rubin_combine(acc.deltas[k], acc.withins[k]);
    EstimateResult r;
    r.method = "pencomp";
    r.contrast = contrasts[k].name;
    r.stratum = contrasts[k].stratum;
    r.estimate = ce.delta_bar;
    r.ci_low = ce.ci_low;
    r.ci_high = ce.ci_high;
    r.W_bar = ce.W_bar;
    r.D_between = ce.D_between;
    r.T_B = ce.T_B;
    r.nu = ce.nu;
    r.B = B;
    r.n_redraws = total_redraws;
    out.push_back(r);
  }
  return out;
}

// ---------- proposed method ----------

namespace {

struct ProposedReplicate {
  std::vector<double> delta;
  std::vector<double> within;
  std::vector<std::array<int8_t, 5>> survival;  // capture hook
};

uint64_t subject_key(const ObservedPanel& p, size_t i) {
  if (i < p.id.size() && !p.id[i].empty()) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : p.id[i]) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ull;
    return h;
  }
  return i;
}

struct BackendFit {
  bool is_bart = false;
  FitArtifact glm;
  BartPosterior bart;
};

// linear-mean backend over explicit design matrices
BackendFit fit_outcome(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const EstimatorOptions& opts, Rng& rng) {
  BackendFit f;
  if (opts.backend == "bart") {
    f.is_bart = true;
    f.bart = bart_fit(X, y, opts.bart, rng);
  } else {
    WeightedDesign d;
    d.X = X;
    d.y = y;
    f.glm = fit_linear(d);
  }
  return f;
}

double outcome_draw(const BackendFit& f, const Eigen::RowVectorXd& x, Rng& rng) {
  if (f.is_bart) {
    const int d = static_cast<int>(rng.below(f.bart.draws.size()));
    Eigen::MatrixXd X(1, x.size());
    X.row(0) = x;
    return f.bart.predictive_draw(X, d, rng)(0);
  }
  return (x * f.glm.coef)(0) + f.glm.residual_sd * rng.normal();
}

struct SurvModel {
  bool is_bart = false;
  ProbModel glm;
  BartPosterior bart;
  bool constant = false;
  double const_p = 1.0;

  double prob(const Eigen::RowVectorXd& x, Rng& rng) const {
    if (constant) return const_p;
    if (is_bart) {
      const int d = static_cast<int>(rng.below(bart.draws.size()));
      Eigen::MatrixXd X(1, x.size());
      X.row(0) = x;
      std::vector<double> row(x.size());
      double f = bart.center;
      for (int j = 0; j < x.size(); ++j) row[j] = x(j);
      for (const auto& t : bart.draws[d].trees) f += t.value(row.data(), bart.config.mia_enabled);
      return normal_cdf(f);
    }
    return glm.prob(x);
  }
};

SurvModel fit_survival(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const EstimatorOptions& opts, Rng& rng) {
  SurvModel m;
  const double ymin = y.minCoeff(), ymax = y.maxCoeff();
  if (ymin == ymax) {
    m.constant = true;
    m.const_p = ymin;
    return m;
  }
  if (opts.backend == "bart") {
    m.is_bart = true;
    m.bart = bart_fit_probit(X, y, opts.bart, rng);
  } else {
    m.glm = fit_prob(X, y);
  }
  return m;
}

ProposedReplicate proposed_replicate(const ObservedPanel& p,
                                     const std::vector<ContrastDef>& contrasts,
                                     const EstimatorOptions& opts, int b, int attempt) {
  const size_t n = p.size();
  const uint64_t tag = splitmix64(static_cast<uint64_t>(b)) ^
                       splitmix64(static_cast<uint64_t>(attempt) * 65537 + 3);

  // canonical subject order (sorted by stable key) so that every fit and
  // reduction runs the same arithmetic regardless of row permutation
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t c) {
    return subject_key(p, a) < subject_key(p, c);
  });

  // Poisson(1) bootstrap keyed by stable subject identity: permutation of
  // rows permutes, not changes, the replicate
  std::vector<double> cnt(n, 0.0);
  std::vector<size_t> rows;  // expanded multiset for model fits
  for (size_t oi = 0; oi < n; ++oi) {
    const size_t i = order[oi];
    const uint64_t key = subject_key(p, i);
    Rng cr(opts.seed, splitmix64(0xC0047ull ^ tag) ^ splitmix64(key));
    // Poisson(1) by inversion
    const double u = cr.uniform();
    double cum = std::exp(-1.0), pk = cum;
    int k = 0;
    while (u > cum && k < 20) {
      ++k;
      pk /= k;
      cum += pk;
    }
    cnt[i] = k;
    for (int c = 0; c < k; ++c) rows.push_back(i);
  }
  if (rows.size() < 20) throw std::runtime_error("proposed: degenerate bootstrap replicate");

  // per-subject imputation streams, keyed so copies share draws
  auto subject_rng = [&](size_t i, uint64_t slot) {
    return Rng(opts.seed, splitmix64(0x1A9B7ull ^ tag) ^ splitmix64(subject_key(p, i)) ^
                              splitmix64(slot * 0x9E37ull + 17));
  };
  Rng fit_rng(opts.seed, splitmix64(0xF17ull ^ tag));

  const size_t n_extra = p.extra_baseline.size();
  const bool simplified = opts.simplified && opts.backend != "pspline_bart";

  auto fill_baseline = [&](Eigen::RowVectorXd& x, size_t pos, size_t i) {
    x(pos) = p.v[i];
    for (size_t e = 0; e < n_extra; ++e) x(pos + 1 + e) = p.extra_baseline[e][i];
  };

  // ----- propensity models (steps 3/7), skipped in the simplified profile -----
  std::array<std::vector<double>, 2> prop1;  // P*_{z1} per target arm
  ProbModel pz1_model;
  if (!simplified) {
    Eigen::MatrixXd X(rows.size(), 2 + n_extra);
    Eigen::VectorXd y(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
      const size_t i = rows[r];
      X(r, 0) = 1.0;
      X(r, 1) = p.v[i];
      for (size_t e = 0; e < n_extra; ++e) X(r, 2 + e) = p.extra_baseline[e][i];
      y(r) = p.z[0][i];
    }
    pz1_model = fit_prob(X, y);
    for (int arm = 0; arm < 2; ++arm) prop1[arm].assign(n, kNaN);
    for (size_t i = 0; i < n; ++i) {
      Eigen::RowVectorXd x(2 + n_extra);
      x(0) = 1.0;
      fill_baseline(x, 1, i);
      const double pr = pz1_model.prob(x);
      prop1[1][i] = clamp_prob(pr);
      prop1[0][i] = clamp_prob(1.0 - pr);
    }
  }

  // ----- wave-1 outcome models + imputation (step 4) -----
  std::array<std::vector<double>, 2> y1c;
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<size_t> cases;
    for (size_t r : rows) {
      if (p.z[0][r] == arm && p.r[0][r] == 1 && !std::isnan(p.y[0][r])) cases.push_back(r);
    }
    const size_t width = 2 + n_extra + (simplified ? 0 : 1);
    if (cases.size() < width + 2) {
      throw std::runtime_error("proposed: wave-1 arm " + std::to_string(arm) + " too small");
    }
    Eigen::MatrixXd X(cases.size(), width);
    Eigen::VectorXd y(cases.size());
    for (size_t r = 0; r < cases.size(); ++r) {
      const size_t i = cases[r];
      size_t c = 0;
      X(r, c++) = 1.0;
      X(r, c++) = p.v[i];
      for (size_t e = 0; e < n_extra; ++e) X(r, c++) = p.extra_baseline[e][i];
      if (!simplified) X(r, c++) = prop1[arm][i];
      y(r) = p.y[0][i];
    }
    BackendFit fit = fit_outcome(X, y, opts, fit_rng);
    y1c[arm].assign(n, kNaN);
    for (size_t i = 0; i < n; ++i) {
      if (p.z[0][i] == arm && p.r[0][i] == 1 && !std::isnan(p.y[0][i])) {
        y1c[arm][i] = p.y[0][i];
      } else {
        Eigen::RowVectorXd x(width);
        size_t c = 0;
        x(c++) = 1.0;
        x(c++) = p.v[i];
        for (size_t e = 0; e < n_extra; ++e) x(c++) = p.extra_baseline[e][i];
        if (!simplified) x(c++) = prop1[arm][i];
        Rng sr = subject_rng(i, 10 + arm);
        y1c[arm][i] = outcome_draw(fit, x, sr);
      }
    }
  }

  // ----- wave-2 survival models + constrained imputation (step 5) -----
  std::array<std::vector<int8_t>, 2> s2c;
  {
    std::array<SurvModel, 2> models;
    for (int arm = 0; arm < 2; ++arm) {
      std::vector<size_t> cases;
      for (size_t r : rows) {
        if (p.z[0][r] == arm && !std::isnan(p.y[0][r])) cases.push_back(r);
      }
      if (cases.size() < 4 + n_extra) {
        throw std::runtime_error("proposed: wave-2 survival arm too small");
      }
      Eigen::MatrixXd X(cases.size(), 3 + n_extra);
      Eigen::VectorXd y(cases.size());
      for (size_t r = 0; r < cases.size(); ++r) {
        const size_t i = cases[r];
        X(r, 0) = 1.0;
        X(r, 1) = p.y[0][i];
        X(r, 2) = p.v[i];
        for (size_t e = 0; e < n_extra; ++e) X(r, 3 + e) = p.extra_baseline[e][i];
        y(r) = p.s[1][i];
      }
      models[arm] = fit_survival(X, y, opts, fit_rng);
    }
    for (int arm = 0; arm < 2; ++arm) s2c[arm].assign(n, 0);
    for (size_t i = 0; i < n; ++i) {
      const int own = p.z[0][i];
      const int other = 1 - own;
      s2c[own][i] = p.s[1][i];
      // monotonicity: S1=1 forces S0=1; S0=0 forces S1=0
      if (own == 1 && p.s[1][i] == 1) {
        s2c[0][i] = 1;
        continue;
      }
      if (own == 0 && p.s[1][i] == 0) {
        s2c[1][i] = 0;
        continue;
      }
      Eigen::RowVectorXd x(3 + n_extra);
      x(0) = 1.0;
      x(1) = y1c[other][i];
      x(2) = p.v[i];
      for (size_t e = 0; e < n_extra; ++e) x(3 + e) = p.extra_baseline[e][i];
      Rng sr = subject_rng(i, 20);
      const double pr = models[other].prob(x, sr);
      s2c[other][i] = sr.bernoulli(pr) ? 1 : 0;
    }
  }

  // ----- cumulative wave-2 propensities (step 7) -----
  std::array<std::vector<double>, 3> prop2;  // per target regime 00/01/11
  if (!simplified) {
    std::vector<size_t> cases;
    for (size_t r : rows) {
      if (p.z[0][r] == 0 && p.s[1][r] == 1 && p.z[1][r] >= 0 && !std::isnan(p.y[0][r])) {
        cases.push_back(r);
      }
    }
    if (cases.size() < 5 + n_extra) throw std::runtime_error("proposed: wave-2 Z cell too small");
    Eigen::MatrixXd X(cases.size(), 3 + n_extra);
    Eigen::VectorXd y(cases.size());
    for (size_t r = 0; r < cases.size(); ++r) {
      const size_t i = cases[r];
      X(r, 0) = 1.0;
      X(r, 1) = p.y[0][i];
      X(r, 2) = p.v[i];
      for (size_t e = 0; e < n_extra; ++e) X(r, 3 + e) = p.extra_baseline[e][i];
      y(r) = p.z[1][i];
    }
    ProbModel pz2 = fit_prob(X, y);
    for (int reg = 0; reg < 3; ++reg) prop2[reg].assign(n, kNaN);
    for (size_t i = 0; i < n; ++i) {
      Eigen::RowVectorXd x(3 + n_extra);
      x(0) = 1.0;
      x(1) = y1c[0][i];
      x(2) = p.v[i];
      for (size_t e = 0; e < n_extra; ++e) x(3 + e) = p.extra_baseline[e][i];
      const double pz = pz2.prob(x);
      prop2[0][i] = clamp_prob(prop1[0][i] * (1.0 - pz));
      prop2[1][i] = clamp_prob(prop1[0][i] * pz);
      prop2[2][i] = prop1[1][i];  // absorbing: P(Z2=1|Z1=1)=1
    }
  }

  // ----- wave-2 outcome models + imputation (step 8 analogue at t=2) -----
  std::array<std::vector<double>, 3> y2c;
  for (int reg = 0; reg < 3; ++reg) {
    const int prefix = wave2_prefix(reg);
    std::vector<size_t> cases;
    for (size_t r : rows) {
      if (p.regime2(r) == reg && p.r[1][r] == 1 && !std::isnan(p.y[1][r]) &&
          !std::isnan(p.y[0][r])) {
        cases.push_back(r);
      }
    }
    const size_t width = 3 + n_extra + (simplified ? 0 : 1);
    if (cases.size() < width + 2) {
      throw std::runtime_error("proposed: wave-2 regime " + regime_string(2, reg) + " too small");
    }
    Eigen::MatrixXd X(cases.size(), width);
    Eigen::VectorXd y(cases.size());
    for (size_t r = 0; r < cases.size(); ++r) {
      const size_t i = cases[r];
      size_t c = 0;
      X(r, c++) = 1.0;
      X(r, c++) = p.y[0][i];
      X(r, c++) = p.v[i];
      for (size_t e = 0; e < n_extra; ++e) X(r, c++) = p.extra_baseline[e][i];
      if (!simplified) X(r, c++) = prop2[reg][i];
      y(r) = p.y[1][i];
    }
    BackendFit fit = fit_outcome(X, y, opts, fit_rng);
    y2c[reg].assign(n, kNaN);
    for (size_t i = 0; i < n; ++i) {
      if (s2c[prefix][i] != 1) continue;  // structurally missing
      if (p.regime2(i) == reg && p.r[1][i] == 1 && !std::isnan(p.y[1][i])) {
        y2c[reg][i] = p.y[1][i];
        continue;
      }
      Eigen::RowVectorXd x(width);
      size_t c = 0;
      x(c++) = 1.0;
      x(c++) = y1c[prefix][i];
      x(c++) = p.v[i];
      for (size_t e = 0; e < n_extra; ++e) x(c++) = p.extra_baseline[e][i];
      if (!simplified) x(c++) = prop2[reg][i];
      Rng sr = subject_rng(i, 30 + reg);
      y2c[reg][i] = outcome_draw(fit, x, sr);
    }
  }

  // ----- wave-3 survival + ordered constrained imputation (step 9) -----
  std::array<std::vector<int8_t>, 3> s3c;
  std::array<std::vector<double>, 4> y3c;
  if (p.n_waves >= 3) {
    std::array<SurvModel, 3> models;
    for (int reg = 0; reg < 3; ++reg) {
      std::vector<size_t> cases;
      for (size_t r : rows) {
        if (p.regime2(r) == reg && !std::isnan(p.y[1][r])) cases.push_back(r);
      }
      if (cases.size() < 4 + n_extra) {
        throw std::runtime_error("proposed: wave-3 survival regime too small");
      }
      Eigen::MatrixXd X(cases.size(), 3 + n_extra);
      Eigen::VectorXd y(cases.size());
      for (size_t r = 0; r < cases.size(); ++r) {
        const size_t i = cases[r];
        X(r, 0) = 1.0;
        X(r, 1) = p.y[1][i];
        X(r, 2) = p.v[i];
        for (size_t e = 0; e < n_extra; ++e) X(r, 3 + e) = p.extra_baseline[e][i];
        y(r) = p.s[2][i];
      }
      models[reg] = fit_survival(X, y, opts, fit_rng);
    }
    for (int reg = 0; reg < 3; ++reg) s3c[reg].assign(n, 0);
    for (size_t i = 0; i < n; ++i) {
      const int own = p.regime2(i);  // -1 when dead at wave 2
      const int8_t obs3 = p.s[2][i];
      // containment: survival ordering S00 >= S01 >= S11 with observed cells
      // fixed; draw the free cells from their models
      int vals[3] = {-1, -1, -1};
      if (own >= 0) vals[own] = obs3;
      for (int reg = 0; reg < 3; ++reg) {
        if (vals[reg] >= 0) continue;
        const int prefix = wave2_prefix(reg);
        if (s2c[prefix][i] != 1) {
          vals[reg] = 0;
          continue;
        }
        // bounds from observed/derived neighbours
        int upper = 1, lower = 0;
        if (reg >= 1 && vals[reg - 1] == 0) upper = 0;
        if (reg == 1 && own == 2 && obs3 == 1) lower = 1;
        if (reg == 0 && own >= 1 && obs3 == 1) lower = 1;
        if (upper == 0) {
          vals[reg] = 0;
        } else if (lower == 1) {
          vals[reg] = 1;
        } else {
          Eigen::RowVectorXd x(3 + n_extra);
          x(0) = 1.0;
          x(1) = y2c[reg][i];
          x(2) = p.v[i];
          for (size_t e = 0; e < n_extra; ++e) x(3 + e) = p.extra_baseline[e][i];
          Rng sr = subject_rng(i, 40 + reg);
          vals[reg] = sr.bernoulli(models[reg].prob(x, sr)) ? 1 : 0;
        }
      }
      // ordering is implied by the bounds; assert it cheaply
      if (vals[1] > vals[0] || vals[2] > vals[1]) {
        throw std::logic_error("proposed: survival imputation violated monotonicity");
      }
      for (int reg = 0; reg < 3; ++reg) s3c[reg][i] = static_cast<int8_t>(vals[reg]);
    }

    // ----- wave-3 propensities (step 9 with step-7 cumulation) -----
    std::array<std::vector<double>, 4> prop3;
    if (!simplified) {
      std::vector<size_t> cases;
      for (size_t r : rows) {
        if (p.regime2(r) == 0 && p.s[2][r] == 1 && p.z[2][r] >= 0 && !std::isnan(p.y[1][r])) {
          cases.push_back(r);
        }
      }
      if (cases.size() < 5 + n_extra) throw std::runtime_error("proposed: wave-3 Z cell too small");
      Eigen::MatrixXd X(cases.size(), 4 + n_extra);
      Eigen::VectorXd y(cases.size());
      for (size_t r = 0; r < cases.size(); ++r) {
        const size_t i = cases[r];
        X(r, 0) = 1.0;
        X(r, 1) = p.y[1][i];
        X(r, 2) = p.y[0][i];
        X(r, 3) = p.v[i];
        for (size_t e = 0; e < n_extra; ++e) X(r, 4 + e) = p.extra_baseline[e][i];
        y(r) = p.z[2][i];
      }
      ProbModel pz3 = fit_prob(X, y);
      for (int q = 0; q < 4; ++q) prop3[q].assign(n, kNaN);
      for (size_t i = 0; i < n; ++i) {
        Eigen::RowVectorXd x(4 + n_extra);
        x(0) = 1.0;
        x(1) = y2c[0][i];
        x(2) = y1c[0][i];
        x(3) = p.v[i];
        for (size_t e = 0; e < n_extra; ++e) x(4 + e) = p.extra_baseline[e][i];
        const double pz = std::isnan(y2c[0][i]) ? 0.5 : pz3.prob(x);
        prop3[0][i] = clamp_prob(prop2[0][i] * (1.0 - pz));
        prop3[1][i] = clamp_prob(prop2[0][i] * pz);
        prop3[2][i] = prop2[1][i];
        prop3[3][i] = prop2[2][i];
      }
    }

    // ----- wave-3 outcome models + imputation -----
    for (int q = 0; q < 4; ++q) {
      const int prefix2 = wave3_prefix(q);   // wave-2 regime
      const int prefix1 = wave2_prefix(prefix2);
      std::vector<size_t> cases;
      for (size_t r : rows) {
        if (p.regime3(r) == q && p.r[2][r] == 1 && !std::isnan(p.y[2][r]) &&
            !std::isnan(p.y[1][r]) && !std::isnan(p.y[0][r])) {
          cases.push_back(r);
        }
      }
      const size_t width = 4 + n_extra + (simplified ? 0 : 1);
      if (cases.size() < width + 2) {
        throw std::runtime_error("proposed: wave-3 regime " + regime_string(3, q) + " too small");
      }
      Eigen::MatrixXd X(cases.size(), width);
      Eigen::VectorXd y(cases.size());
      for (size_t r = 0; r < cases.size(); ++r) {
        const size_t i = cases[r];
        size_t c = 0;
        X(r, c++) = 1.0;
        X(r, c++) = p.y[1][i];
        X(r, c++) = p.y[0][i];
        X(r, c++) = p.v[i];
        for (size_t e = 0; e < n_extra; ++e) X(r, c++) = p.extra_baseline[e][i];
        if (!simplified) X(r, c++) = prop3[q][i];
        y(r) = p.y[2][i];
      }
      BackendFit fit = fit_outcome(X, y, opts, fit_rng);
      y3c[q].assign(n, kNaN);
      for (size_t i = 0; i < n; ++i) {
        if (s3c[prefix2][i] != 1) continue;
        if (p.regime3(i) == q && p.r[2][i] == 1 && !std::isnan(p.y[2][i])) {
          y3c[q][i] = p.y[2][i];
          continue;
        }
        Eigen::RowVectorXd x(width);
        size_t c = 0;
        x(c++) = 1.0;
        x(c++) = y2c[prefix2][i];
        x(c++) = y1c[prefix1][i];
        x(c++) = p.v[i];
        for (size_t e = 0; e < n_extra; ++e) x(c++) = p.extra_baseline[e][i];
        if (!simplified) x(c++) = prop3[q][i];
        Rng sr = subject_rng(i, 50 + q);
        y3c[q][i] = outcome_draw(fit, x, sr);
      }
    }
  }

  // ----- stratum-restricted contrasts over the bootstrap multiset (step 10) -----
  ProposedReplicate rep;
  for (const auto& c : contrasts) {
    std::vector<double> ya, yb, cw;
    for (size_t oi = 0; oi < n; ++oi) {
      const size_t i = order[oi];
      if (cnt[i] <= 0.0) continue;
      double a, bb;
      bool in = false;
      if (c.wave == 1) {
        a = y1c[c.reg_a][i];
        bb = y1c[c.reg_b][i];
        in = true;
      } else if (c.wave == 2) {
        in = s2c[wave2_prefix(c.reg_a)][i] == 1 && s2c[wave2_prefix(c.reg_b)][i] == 1;
        if (in) {
          a = y2c[c.reg_a][i];
          bb = y2c[c.reg_b][i];
        }
      } else {
        in = s3c[wave3_prefix(c.reg_a)][i] == 1 && s3c[wave3_prefix(c.reg_b)][i] == 1;
        if (in) {
          a = y3c[c.reg_a][i];
          bb = y3c[c.reg_b][i];
        }
      }
      if (!in) continue;
      if (std::isnan(a) || std::isnan(bb)) {
        throw std::logic_error("proposed: missing completed outcome inside its stratum");
      }
      ya.push_back(a);
      yb.push_back(bb);
      cw.push_back(cnt[i]);
    }
    double tot = std::accumulate(cw.begin(), cw.end(), 0.0);
    if (ya.empty() || tot < 4.0) {
      throw std::runtime_error("proposed: empty principal stratum for " + c.name);
    }
    rep.delta.push_back(weighted_mean(ya, cw) - weighted_mean(yb, cw));
    rep.within.push_back(pooled_within_variance(ya, yb, cw));
  }

  if (p.n_waves >= 3) {
    rep.survival.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      rep.survival.push_back(
          {s2c[0][i], s2c[1][i], s3c[0][i], s3c[1][i], s3c[2][i]});
    }
  }
  return rep;
}

}  // namespace

std::vector<EstimateResult> proposed_estimate(const ObservedPanel& panel,
                                              const std::vector<ContrastDef>& contrasts,
                                              const EstimatorOptions& opts) {
  panel.validate();
  if (!panel.absorbing_treatment) {
    throw std::invalid_argument("proposed_estimate: panel must have absorbing treatment");
  }
  if (panel.n_waves < 2 || panel.n_waves > 3) {
    throw std::invalid_argument("proposed_estimate: implemented for two- and three-wave panels");
  }
  for (const auto& c : contrasts) {
    if (c.wave > panel.n_waves) {
      throw std::invalid_argument("proposed_estimate: contrast " + c.name +
                                  " needs wave " + std::to_string(c.wave));
    }
  }
  const int B = opts.B;
  if (B < 2) throw std::invalid_argument("proposed_estimate: B must be >= 2");

  std::vector<ProposedReplicate> reps(B);
  int total_redraws = 0;
  const int cap = opts.redraw_cap_factor * B;
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic) reduction(+ : total_redraws)
  for (int b = 0; b < B; ++b) {
    if (err) continue;
    try {
      bool done = false;
      std::string last;
      for (int attempt = 0; attempt <= opts.redraw_cap_factor && !done; ++attempt) {
        try {
          reps[b] = proposed_replicate(panel, contrasts, opts, b, attempt);
          done = true;
        } catch (const std::runtime_error& e) {
          last = e.what();
          ++total_redraws;
          if (total_redraws > cap) throw;
        }
      }
      if (!done) {
        throw std::runtime_error("proposed_estimate: replicate " + std::to_string(b) +
                                 " failed after redraw cap: " + last);
      }
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  if (opts.capture_survival) {
    for (const auto& rep : reps) {
      for (const auto& row : rep.survival) opts.capture_survival->push_back(row);
    }
  }

  std::vector<EstimateResult> out;
  for (size_t k = 0; k < contrasts.size(); ++k) {
    std::vector<double> deltas(B), withins(B);
    for (int b = 0; b < B; ++b) {
      deltas[b] = reps[b].delta[k];
      withins[b] = reps[b].within[k];
    }
    CombinedEstimate ce = rubin_combine(deltas, withins);
    EstimateResult r;
    r.method = "proposed";
    r.contrast = contrasts[k].name;
    r.stratum = contrasts[k].stratum;
    r.estimate = ce.delta_bar;
    r.ci_low = ce.ci_low;
    r.ci_high = ce.ci_high;
    r.W_bar = ce.W_bar;
    r.D_between = ce.D_between;
    r.T_B = ce.T_B;
    r.nu = ce.nu;
    r.B = B;
    r.n_redraws = total_redraws;
    out.push_back(r);
  }
  return out;
}

// ---------- MAR outcome imputation ----------

ObservedPanel impute_missing_outcomes(const ObservedPanel& panel, const ImputeOptions& opts) {
  panel.validate();
  std::vector<size_t> cond_extra;
  bool use_v = false;
  if (opts.conditioning.empty()) {
    use_v = true;
    for (size_t e = 0; e < panel.extra_baseline.size(); ++e) cond_extra.push_back(e);
  } else {
    for (const auto& name : opts.conditioning) {
      if (name == "v") {
        use_v = true;
        continue;
      }
      auto it = std::find(panel.extra_baseline_names.begin(), panel.extra_baseline_names.end(),
                          name);
      if (it == panel.extra_baseline_names.end()) {
        throw std::invalid_argument("impute_missing_outcomes: conditioning variable absent: " +
                                    name);
      }
      cond_extra.push_back(static_cast<size_t>(it - panel.extra_baseline_names.begin()));
    }
  }

  ObservedPanel out = panel;
  Rng rng(opts.seed, 0x13F1ull);
  for (int t = 0; t < panel.n_waves; ++t) {
    std::vector<size_t> fit_rows, fill_rows;
    for (size_t i = 0; i < panel.size(); ++i) {
      if (panel.s[t][i] != 1) continue;  // structural NA stays
      bool lag_ok = true;
      for (int l = 0; l < t; ++l) lag_ok &= !std::isnan(out.y[l][i]);
      if (!lag_ok) continue;
      if (panel.r[t][i] == 1 && !std::isnan(panel.y[t][i])) {
        fit_rows.push_back(i);
      } else {
        fill_rows.push_back(i);
      }
    }
    if (fill_rows.empty()) continue;
    const size_t width = 1 + (use_v ? 1 : 0) + cond_extra.size() + t + (t < panel.n_waves ? 1 : 0);
    if (fit_rows.size() < width + 2) {
      throw std::runtime_error("impute_missing_outcomes: too few respondents at wave " +
                               std::to_string(t + 1));
    }
    auto build = [&](const std::vector<size_t>& rws) {
      Eigen::MatrixXd X(rws.size(), width);
      for (size_t r = 0; r < rws.size(); ++r) {
        const size_t i = rws[r];
        size_t c = 0;
        X(r, c++) = 1.0;
        if (use_v) X(r, c++) = panel.v[i];
        for (size_t e : cond_extra) X(r, c++) = panel.extra_baseline[e][i];
        for (int l = 0; l < t; ++l) X(r, c++) = out.y[l][i];
        X(r, c++) = panel.z[t][i] >= 0 ? panel.z[t][i] : 0.0;  // current treatment state
      }
      return X;
    };
    Eigen::MatrixXd Xfit = build(fit_rows);
    Eigen::VectorXd yfit(fit_rows.size());
    for (size_t r = 0; r < fit_rows.size(); ++r) yfit(r) = panel.y[t][fit_rows[r]];

    if (opts.backend == "bart") {
      BartPosterior post = bart_fit(Xfit, yfit, opts.bart, rng);
      Eigen::MatrixXd Xfill = build(fill_rows);
      const int d = static_cast<int>(rng.below(post.draws.size()));
      Eigen::VectorXd drawn = post.predictive_draw(Xfill, d, rng);
      for (size_t r = 0; r < fill_rows.size(); ++r) {
        out.y[t][fill_rows[r]] = drawn(r);
        out.r[t][fill_rows[r]] = 1;
      }
    } else {
      WeightedDesign d;
      d.X = Xfit;
      d.y = yfit;
      FitArtifact fit = fit_linear(d);
      Eigen::MatrixXd Xfill = build(fill_rows);
      Eigen::VectorXd drawn = draw_prediction(fit, Xfill, rng);
      for (size_t r = 0; r < fill_rows.size(); ++r) {
        out.y[t][fill_rows[r]] = drawn(r);
        out.r[t][fill_rows[r]] = 1;
      }
    }
  }
  return out;
}

}  // namespace strata
