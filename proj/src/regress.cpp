#include "strata/regress.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "strata/dist.hpp"

namespace strata {

double clamp_prob(double p) { return std::min(1.0 - kProbClamp, std::max(kProbClamp, p)); }

void WeightedDesign::validate() const {
  if (X.rows() != y.size()) throw std::invalid_argument("design rows != response length");
  if (w.size() != 0 && w.size() != y.size()) {
    throw std::invalid_argument("weight length != response length");
  }
  if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("design contains NA");
  if (w.size() != 0 && (!w.allFinite() || (w.array() < 0.0).any())) {
    throw std::invalid_argument("weights must be finite and >= 0");
  }
}

namespace {

// rank-revealing pass: which columns survive after dropping aliased ones
std::vector<bool> kept_columns(const Eigen::MatrixXd& X) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  const int rank = static_cast<int>(qr.rank());
  const auto& perm = qr.colsPermutation().indices();
  std::vector<bool> kept(X.cols(), false);
  for (int k = 0; k < rank; ++k) kept[perm[k]] = true;
  return kept;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<bool>& kept) {
  int m = 0;
  for (bool b : kept) m += b;
  Eigen::MatrixXd out(X.rows(), m);
  int j = 0;
  for (int c = 0; c < X.cols(); ++c) {
    if (kept[c]) out.col(j++) = X.col(c);
  }
  return out;
}

Eigen::VectorXd expand_coef(const Eigen::VectorXd& sub, const std::vector<bool>& kept) {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<int>(kept.size()));
  int j = 0;
  for (size_t c = 0; c < kept.size(); ++c) {
    if (kept[c]) full[static_cast<int>(c)] = sub[j++];
  }
  return full;
}

}  // namespace

Eigen::VectorXd FitArtifact::linear_predictor(const Eigen::MatrixXd& X) const {
  if (X.cols() != coef.size()) throw std::invalid_argument("prediction design width mismatch");
  return X * coef;
}

Eigen::VectorXd FitArtifact::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd eta = linear_predictor(X);
  if (kind != FitKind::logistic) return eta;
  for (int i = 0; i < eta.size(); ++i) eta[i] = clamp_prob(expit(eta[i]));
  return eta;
}

FitArtifact fit_linear(const WeightedDesign& d) {
  d.validate();
  const int n = static_cast<int>(d.X.rows());
  Eigen::VectorXd sw = d.w.size() ? Eigen::VectorXd(d.w.array().sqrt())
                                  : Eigen::VectorXd(Eigen::VectorXd::Ones(n));
  Eigen::MatrixXd Xw = sw.asDiagonal() * d.X;
  Eigen::VectorXd yw = sw.asDiagonal() * d.y;

  FitArtifact fit;
  fit.kind = FitKind::linear;
  fit.kept = kept_columns(Xw);
  Eigen::MatrixXd Xk = select_columns(Xw, fit.kept);
  const int rank = static_cast<int>(Xk.cols());
  if (n <= rank) {
    throw std::runtime_error("fit_linear: n <= p after dropping aliased columns (n=" +
                             std::to_string(n) + ", p=" + std::to_string(rank) + ")");
  }
  Eigen::VectorXd sub = Xk.colPivHouseholderQr().solve(yw);
  fit.coef = expand_coef(sub, fit.kept);
  const double rss = (yw - Xk * sub).squaredNorm();
  fit.residual_sd = std::sqrt(std::max(0.0, rss / (n - rank)));
  return fit;
}

Eigen::VectorXd draw_prediction(const FitArtifact& fit, const Eigen::MatrixXd& X, Rng& rng) {
  if (fit.kind == FitKind::logistic) {
    throw std::invalid_argument("draw_prediction: fit kind must be linear or pspline");
  }
  Eigen::VectorXd mu = fit.linear_predictor(X);
  for (int i = 0; i < mu.size(); ++i) mu[i] += fit.residual_sd * rng.normal();
  return mu;
}

FitArtifact fit_logistic(const WeightedDesign& d) {
  d.validate();
  const int n = static_cast<int>(d.X.rows());
  for (int i = 0; i < n; ++i) {
    if (d.y[i] != 0.0 && d.y[i] != 1.0) {
      throw std::invalid_argument("fit_logistic: response must be binary 0/1");
    }
  }
  Eigen::VectorXd w = d.w.size() ? d.w : Eigen::VectorXd::Ones(n);

  FitArtifact fit;
  fit.kind = FitKind::logistic;
  fit.kept = kept_columns(w.array().sqrt().matrix().asDiagonal() * d.X);
  Eigen::MatrixXd X = select_columns(d.X, fit.kept);
  const int p = static_cast<int>(X.cols());

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  auto deviance = [&](const Eigen::VectorXd& b) {
    double dev = 0.0;
    Eigen::VectorXd eta = X * b;
    for (int i = 0; i < n; ++i) {
      const double mu = clamp_prob(expit(eta[i]));
      dev -= 2.0 * w[i] * (d.y[i] * std::log(mu) + (1.0 - d.y[i]) * std::log(1.0 - mu));
    }
    return dev;
  };

  double dev = deviance(beta);
  constexpr int kMaxIter = 100;
  fit.convergence = Convergence::max_iter;
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    fit.n_iter = iter;
    Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd mu(n), ww(n);
    for (int i = 0; i < n; ++i) {
      mu[i] = expit(eta[i]);
      ww[i] = std::max(w[i] * mu[i] * (1.0 - mu[i]), 1e-12);
    }
    Eigen::VectorXd score = X.transpose() * (w.array() * (d.y - mu).array()).matrix();
    if (score.lpNorm<Eigen::Infinity>() < 1e-8) {
      fit.convergence = Convergence::converged;
      break;
    }
    Eigen::MatrixXd H = X.transpose() * ww.asDiagonal() * X;
    Eigen::VectorXd step = H.ldlt().solve(score);
    double scale = 1.0;
    double new_dev = deviance(beta + step);
    int halvings = 0;
    while (new_dev > dev + 1e-10 && halvings < 30) {
      scale *= 0.5;
      new_dev = deviance(beta + scale * step);
      ++halvings;
    }
    beta += scale * step;
    const double rel = std::fabs(dev - new_dev) / (std::fabs(dev) + 0.1);
    dev = new_dev;
    if (rel < 1e-10) {
      fit.convergence = Convergence::converged;
      break;
    }
  }

  // separation: implausibly large coefficient on the predictor's own scale
  for (int j = 0; j < p; ++j) {
    const double mean = X.col(j).mean();
    const double sd = std::sqrt((X.col(j).array() - mean).square().sum() / std::max(1, n - 1));
    if (sd > 0.0 && std::fabs(beta[j]) * sd > 15.0) {
      fit.convergence = Convergence::separated;
      break;
    }
  }
  fit.coef = expand_coef(beta, fit.kept);
  return fit;
}

int default_knot_count(int n) { return std::max(1, std::min(15, n / 20)); }

Eigen::MatrixXd pspline_basis(const Eigen::VectorXd& propensity, int n_knots,
                              Eigen::VectorXd* knots_out) {
  if (n_knots < 1) throw std::invalid_argument("pspline_basis: n_knots must be >= 1");
  if (!propensity.allFinite()) throw std::invalid_argument("pspline_basis: non-finite values");
  const int n = static_cast<int>(propensity.size());
  std::vector<double> sorted(propensity.data(), propensity.data() + n);
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    throw std::invalid_argument("pspline_basis: propensity values are constant");
  }
  Eigen::VectorXd knots(n_knots);
  for (int k = 0; k < n_knots; ++k) {
    // equally spaced interior quantiles, type-7 interpolation
    const double q = static_cast<double>(k + 1) / (n_knots + 1);
    const double h = q * (n - 1);
    const int lo = static_cast<int>(std::floor(h));
    const int hi = std::min(lo + 1, n - 1);
    knots[k] = sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
  }
  if (knots_out) *knots_out = knots;
  return pspline_basis_at(propensity, knots);
}

Eigen::MatrixXd pspline_basis_at(const Eigen::VectorXd& propensity, const Eigen::VectorXd& knots) {
  Eigen::MatrixXd B(propensity.size(), knots.size());
  for (int i = 0; i < propensity.size(); ++i) {
    for (int k = 0; k < knots.size(); ++k) {
      B(i, k) = std::max(0.0, propensity[i] - knots[k]);
    }
  }
  return B;
}

Eigen::MatrixXd pspline_design(const FitArtifact& fit, const Eigen::VectorXd& propensity,
                               const Eigen::MatrixXd& parametric) {
  const int n = static_cast<int>(propensity.size());
  if (parametric.rows() != n) throw std::invalid_argument("pspline_design: row mismatch");
  Eigen::MatrixXd X(n, fit.n_parametric + fit.knots.size());
  X.leftCols(fit.n_parametric - 1) = parametric;
  X.col(fit.n_parametric - 1) = propensity;
  X.rightCols(fit.knots.size()) = pspline_basis_at(propensity, fit.knots);
  return X;
}

FitArtifact fit_pspline(const Eigen::VectorXd& propensity, const WeightedDesign& parametric,
                        int n_knots, double fixed_lambda) {
  parametric.validate();
  const int n = static_cast<int>(propensity.size());
  if (parametric.X.rows() != n) throw std::invalid_argument("fit_pspline: row mismatch");
  if (n_knots <= 0) n_knots = default_knot_count(n);

  Eigen::VectorXd knots;
  Eigen::MatrixXd basis = pspline_basis(propensity, n_knots, &knots);
  const int p_par = static_cast<int>(parametric.X.cols()) + 1;  // + linear propensity
  Eigen::MatrixXd X(n, p_par + n_knots);
  X.leftCols(p_par - 1) = parametric.X;
  X.col(p_par - 1) = propensity;
  X.rightCols(n_knots) = basis;

  Eigen::VectorXd sw = parametric.w.size() ? Eigen::VectorXd(parametric.w.array().sqrt())
                                           : Eigen::VectorXd(Eigen::VectorXd::Ones(n));
  Eigen::MatrixXd Xw = sw.asDiagonal() * X;
  Eigen::VectorXd yw = sw.asDiagonal() * parametric.y;

  std::vector<bool> kept = kept_columns(Xw);
  // never drop spline columns in favor of keeping ridge well-posed; aliasing
  // among spline columns is handled by the penalty itself
  for (int c = p_par; c < X.cols(); ++c) kept[c] = true;
  Eigen::MatrixXd Xk = select_columns(Xw, kept);
  const int p = static_cast<int>(Xk.cols());
  int kept_par = 0;
  for (int c = 0; c < p_par; ++c) kept_par += kept[c];

  Eigen::MatrixXd XtX = Xk.transpose() * Xk;
  Eigen::VectorXd Xty = Xk.transpose() * yw;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(p, p);
  for (int c = kept_par; c < p; ++c) D(c, c) = 1.0;

  auto solve_at = [&](double lambda, double* gcv, Eigen::VectorXd* out) {
    Eigen::MatrixXd A = XtX + lambda * D;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    Eigen::VectorXd b = ldlt.solve(Xty);
    if (gcv) {
      const double rss = (yw - Xk * b).squaredNorm();
      // tr(H) = p - lambda * tr(A^-1 D)
      const double tr_h =
          static_cast<double>(p) - lambda * ldlt.solve(D).trace();
      const double denom = std::max(1e-8, 1.0 - tr_h / n);
      *gcv = rss / (n * denom * denom);
    }
    if (out) *out = b;
  };

  double best_lambda;
  if (fixed_lambda >= 0.0) {
    best_lambda = fixed_lambda;
  } else {
    best_lambda = 1e-6;
    double best_gcv = std::numeric_limits<double>::infinity();
    for (double loglam = -6.0; loglam <= 8.0 + 1e-9; loglam += 0.5) {
      const double lambda = std::pow(10.0, loglam);
      double gcv;
      solve_at(lambda, &gcv, nullptr);
      if (gcv < best_gcv) {
        best_gcv = gcv;
        best_lambda = lambda;
      }
    }
  }

  Eigen::VectorXd sub;
  solve_at(best_lambda, nullptr, &sub);

  FitArtifact fit;
  fit.kind = FitKind::pspline;
  fit.kept = kept;
  fit.coef = expand_coef(sub, kept);
  fit.knots = knots;
  fit.penalty = best_lambda;
  fit.n_parametric = p_par;
  const double rss = (yw - Xk * sub).squaredNorm();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX + best_lambda * D);
  const double edf = static_cast<double>(p) - best_lambda * ldlt.solve(D).trace();
  fit.residual_sd = std::sqrt(std::max(0.0, rss / std::max(1.0, n - edf)));
  return fit;
}

}  // namespace strata
