#pragma once

#include <Eigen/Dense>
#include <vector>

#include "strata/rng.hpp"

namespace strata {

enum class FitKind { linear, logistic, pspline };
enum class Convergence { converged, max_iter, separated };

struct WeightedDesign {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd w;  // empty = unit weights

  void validate() const;  // dimensions agree, no NaN, weights >= 0
};

// probabilities are clamped away from {0,1} before logs or products
constexpr double kProbClamp = 1e-6;
double clamp_prob(double p);

struct FitArtifact {
  FitKind kind = FitKind::linear;
  Eigen::VectorXd coef;     // full length; aliased columns carry 0
  std::vector<bool> kept;   // false = column dropped as aliased
  double residual_sd = 0.0;
  Convergence convergence = Convergence::converged;
  int n_iter = 0;

  // pspline extras: columns are [parametric | propensity | truncated basis]
  Eigen::VectorXd knots;
  double penalty = 0.0;
  int n_parametric = 0;

  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& X) const;
  // mean response: identity for linear/pspline, clamped probabilities for logistic
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

// weighted least squares; aliased columns dropped by pivoted QR;
// residual_sd uses divisor n - rank
FitArtifact fit_linear(const WeightedDesign& d);

// mean prediction plus independent N(0, residual_sd^2) noise per row;
// parameter uncertainty is carried by the callers' bootstrap
Eigen::VectorXd draw_prediction(const FitArtifact& fit, const Eigen::MatrixXd& X, Rng& rng);

// maximum likelihood by iteratively reweighted least squares
FitArtifact fit_logistic(const WeightedDesign& d);

int default_knot_count(int n);  // min(15, n/20), at least 1

// truncated-linear basis [(p - k)+] with knots at equally spaced interior
// sample quantiles of the propensity values
Eigen::MatrixXd pspline_basis(const Eigen::VectorXd& propensity, int n_knots,
                              Eigen::VectorXd* knots_out = nullptr);
Eigen::MatrixXd pspline_basis_at(const Eigen::VectorXd& propensity, const Eigen::VectorXd& knots);

// spline-of-propensity regression: ridge penalty on the spline block only,
// lambda chosen by GCV over a fixed log-spaced grid (or forced via
// fixed_lambda for tests). The parametric block gains a linear propensity
// column automatically.
FitArtifact fit_pspline(const Eigen::VectorXd& propensity, const WeightedDesign& parametric,
                        int n_knots = -1, double fixed_lambda = -1.0);

// design matrix in the layout fit_pspline used: [parametric | prop | basis]
Eigen::MatrixXd pspline_design(const FitArtifact& fit, const Eigen::VectorXd& propensity,
                               const Eigen::MatrixXd& parametric);

}  // namespace strata
