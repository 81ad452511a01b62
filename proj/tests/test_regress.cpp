#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "strata/dist.hpp"
#include "strata/regress.hpp"
#include "strata/rng.hpp"

using namespace strata;

namespace {

Eigen::MatrixXd random_design(int n, int p, uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) X(i, j) = rng.normal();
  }
  return X;
}

}  // namespace

TEST_CASE("ols on a perfect line") {
  WeightedDesign d;
  d.X.resize(3, 2);
  d.X << 1, 1, 1, 2, 1, 3;
  d.y.resize(3);
  d.y << 1, 2, 3;
  FitArtifact fit = fit_linear(d);
  CHECK(fit.coef(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(fit.coef(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.residual_sd == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("ols matches an independent pseudoinverse solve") {
  const int n = 50, p = 3;
  Eigen::MatrixXd X = random_design(n, p, 41);
  Rng rng(42);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = 2.0 + 0.5 * X(i, 1) - 1.5 * X(i, 2) + rng.normal();
  WeightedDesign d;
  d.X = X;
  d.y = y;
  FitArtifact fit = fit_linear(d);

  // oracle: SVD pseudoinverse normal-equations solve, a different route
  Eigen::VectorXd oracle =
      X.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y);
  for (int j = 0; j < p; ++j) {
    CHECK(fit.coef(j) == doctest::Approx(oracle(j)).epsilon(1e-8));
  }
}

TEST_CASE("aliased columns are dropped, fit unchanged") {
  const int n = 40;
  Eigen::MatrixXd X = random_design(n, 3, 5);
  Eigen::MatrixXd Xdup(n, 4);
  Xdup << X, X.col(2);  // duplicate of the last column
  Rng rng(6);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = 1.0 + X(i, 1) + 2.0 * X(i, 2) + 0.1 * rng.normal();

  WeightedDesign d1{X, y, {}};
  WeightedDesign d2{Xdup, y, {}};
  FitArtifact base = fit_linear(d1);
  FitArtifact dup = fit_linear(d2);
  int kept = 0;
  for (bool b : dup.kept) kept += b;
  CHECK(kept == 3);
  Eigen::VectorXd pred_base = base.predict(X);
  Eigen::VectorXd pred_dup = dup.predict(Xdup);
  CHECK((pred_base - pred_dup).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(dup.residual_sd == doctest::Approx(base.residual_sd).epsilon(1e-10));
}

TEST_CASE("n <= p after aliasing errors") {
  WeightedDesign d;
  d.X = Eigen::MatrixXd::Identity(2, 2);
  d.y.resize(2);
  d.y << 1, 2;
  CHECK_THROWS_AS(fit_linear(d), std::runtime_error);

  // aliased wide design still fits once duplicates are dropped
  WeightedDesign d2;
  d2.X.resize(3, 4);
  d2.X << 1, 1, 2, 2, 1, 1, 3, 3, 1, 1, 5, 5;
  d2.y.resize(3);
  d2.y << 1, 2, 3;
  CHECK_NOTHROW(fit_linear(d2));
}

TEST_CASE("equal weights reduce to the unweighted fit") {
  const int n = 60;
  Eigen::MatrixXd X = random_design(n, 3, 15);
  Rng rng(16);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = 1.0 - X(i, 1) + rng.normal();
  WeightedDesign unw{X, y, {}};
  WeightedDesign wtd{X, y, Eigen::VectorXd::Constant(n, 3.7)};
  FitArtifact a = fit_linear(unw), b = fit_linear(wtd);
  CHECK((a.coef - b.coef).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("predictive draws: zero sd exact, sd recovered, seeded") {
  WeightedDesign d;
  d.X = random_design(30, 2, 3);
  d.y = d.X * Eigen::Vector2d(1.0, 2.0);
  FitArtifact fit = fit_linear(d);
  REQUIRE(fit.residual_sd < 1e-10);
  Rng rng(8);
  Eigen::VectorXd draw = draw_prediction(fit, d.X, rng);
  CHECK((draw - d.y).lpNorm<Eigen::Infinity>() < 1e-9);

  fit.residual_sd = 2.5;
  Eigen::MatrixXd one_row = d.X.topRows(1);
  const int m = 10000;
  double sum = 0.0, ss = 0.0;
  Rng rng2(9);
  for (int k = 0; k < m; ++k) {
    const double v = draw_prediction(fit, one_row, rng2)(0);
    sum += v;
    ss += v * v;
  }
  const double sd = std::sqrt(ss / m - (sum / m) * (sum / m));
  CHECK(sd == doctest::Approx(2.5).epsilon(0.05));

  Rng ra(77), rb(77);
  CHECK(draw_prediction(fit, d.X, ra) == draw_prediction(fit, d.X, rb));

  fit.kind = FitKind::logistic;
  Rng rc(1);
  CHECK_THROWS_AS(draw_prediction(fit, d.X, rc), std::invalid_argument);
}

TEST_CASE("logistic intercept-only equals logit of the mean") {
  WeightedDesign d;
  d.X = Eigen::MatrixXd::Ones(10, 1);
  d.y.resize(10);
  d.y << 1, 1, 1, 1, 1, 1, 0, 0, 0, 0;
  FitArtifact fit = fit_logistic(d);
  CHECK(fit.convergence == Convergence::converged);
  CHECK(fit.coef(0) == doctest::Approx(logit(0.6)).epsilon(1e-9));
}

TEST_CASE("logistic matches a coarse-to-fine grid-search mle") {
  const int n = 40;
  Eigen::MatrixXd X = random_design(n, 2, 101);
  Rng rng(102);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = rng.bernoulli(expit(0.4 + 0.9 * X(i, 1))) ? 1.0 : 0.0;
  WeightedDesign d{X, y, {}};
  FitArtifact fit = fit_logistic(d);

  auto loglik = [&](double b0, double b1) {
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      const double eta = b0 + b1 * X(i, 1);
      ll += y(i) * eta - std::log1p(std::exp(eta));
    }
    return ll;
  };
  // independent oracle: shrink a grid around the best cell four times
  double c0 = 0.0, c1 = 0.0, half = 8.0;
  for (int round = 0; round < 14; ++round) {
    double best = -1e300, b0best = c0, b1best = c1;
    for (int a = -10; a <= 10; ++a) {
      for (int b = -10; b <= 10; ++b) {
        const double t0 = c0 + half * a / 10.0, t1 = c1 + half * b / 10.0;
        const double ll = loglik(t0, t1);
        if (ll > best) {
          best = ll;
          b0best = t0;
          b1best = t1;
        }
      }
    }
    c0 = b0best;
    c1 = b1best;
    half /= 5.0;
  }
  CHECK(fit.coef(0) == doctest::Approx(c0).epsilon(1e-4));
  CHECK(fit.coef(1) == doctest::Approx(c1).epsilon(1e-4));
}

TEST_CASE("irls score vanishes and matches a finite-difference gradient") {
  for (uint64_t seed : {11ull, 12ull, 13ull, 14ull}) {
    const int n = 120;
    Eigen::MatrixXd X = random_design(n, 3, seed);
    Rng rng(seed + 1000);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      y(i) = rng.bernoulli(expit(-0.3 + 0.8 * X(i, 1) - 0.5 * X(i, 2))) ? 1.0 : 0.0;
    }
    WeightedDesign d{X, y, {}};
    FitArtifact fit = fit_logistic(d);
    REQUIRE(fit.convergence == Convergence::converged);

    Eigen::VectorXd mu = fit.predict(X);
    Eigen::VectorXd score = X.transpose() * (y - mu);
    CHECK(score.lpNorm<Eigen::Infinity>() < 1e-6);

    auto loglik = [&](const Eigen::VectorXd& b) {
      double ll = 0.0;
      for (int i = 0; i < n; ++i) {
        const double eta = (X.row(i) * b)(0);
        ll += y(i) * eta - std::log1p(std::exp(eta));
      }
      return ll;
    };
    const double h = 1e-5;
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd up = fit.coef, dn = fit.coef;
      up(j) += h;
      dn(j) -= h;
      const double fd = (loglik(up) - loglik(dn)) / (2 * h);
      CHECK(std::fabs(fd - score(j)) < 1e-4 * (1.0 + std::fabs(fd)));
    }
  }
}

TEST_CASE("perfect separation is flagged, probabilities stay interior") {
  const int n = 30;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = i - n / 2.0;
    y(i) = X(i, 1) > 0 ? 1.0 : 0.0;
  }
  WeightedDesign d{X, y, {}};
  FitArtifact fit = fit_logistic(d);
  CHECK(fit.convergence == Convergence::separated);
  Eigen::VectorXd probs = fit.predict(X);
  for (int i = 0; i < n; ++i) {
    CHECK(probs(i) > 0.0);
    CHECK(probs(i) < 1.0);
  }
}

TEST_CASE("non-binary response is rejected") {
  WeightedDesign d;
  d.X = Eigen::MatrixXd::Ones(4, 1);
  d.y.resize(4);
  d.y << 0, 1, 2, 1;
  CHECK_THROWS_AS(fit_logistic(d), std::invalid_argument);
}

TEST_CASE("truncated-linear basis by hand") {
  Eigen::VectorXd prop(5);
  prop << 0.1, 0.3, 0.5, 0.7, 0.9;
  Eigen::VectorXd knots(2);
  knots << 0.3, 0.6;
  Eigen::MatrixXd B = pspline_basis_at(prop, knots);
  CHECK(B(0, 0) == 0.0);                                // below both knots
  CHECK(B(0, 1) == 0.0);
  CHECK(B(1, 0) == 0.0);                                // exactly at the knot
  CHECK(B(2, 0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(B(3, 1) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(B(4, 0) == doctest::Approx(0.6).epsilon(1e-12));

  CHECK_THROWS_AS(pspline_basis(Eigen::VectorXd::Constant(10, 0.4), 3), std::invalid_argument);
  CHECK_THROWS_AS(pspline_basis(prop, 0), std::invalid_argument);
  CHECK(default_knot_count(500) == 15);
  CHECK(default_knot_count(100) == 5);
  CHECK(default_knot_count(10) == 1);
}

TEST_CASE("infinite penalty reduces the spline fit to the linear fit") {
  const int n = 200;
  Rng rng(55);
  Eigen::VectorXd prop(n);
  Eigen::MatrixXd Xpar(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    prop(i) = rng.uniform();
    Xpar(i, 0) = 1.0;
    Xpar(i, 1) = rng.normal();
    y(i) = 0.5 + 2.0 * Xpar(i, 1) + 1.3 * prop(i) + 0.3 * rng.normal();
  }
  WeightedDesign par{Xpar, y, {}};
  FitArtifact sp = fit_pspline(prop, par, 8, /*fixed_lambda=*/1e14);

  Eigen::MatrixXd Xlin(n, 3);
  Xlin << Xpar, prop;
  WeightedDesign lin{Xlin, y, {}};
  FitArtifact plain = fit_linear(lin);

  Eigen::MatrixXd Xfull = pspline_design(sp, prop, Xpar);
  Eigen::VectorXd pred_sp = sp.predict(Xfull);
  Eigen::VectorXd pred_lin = plain.predict(Xlin);
  CHECK((pred_sp - pred_lin).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("spline beats a linear-in-propensity fit on a curved signal") {
  const int n = 500, n_test = 300;
  Rng rng(66);
  auto make = [&](int m, Eigen::VectorXd& prop, Eigen::MatrixXd& Xpar, Eigen::VectorXd& y) {
    prop.resize(m);
    Xpar.resize(m, 2);
    y.resize(m);
    for (int i = 0; i < m; ++i) {
      prop(i) = rng.uniform();
      Xpar(i, 0) = 1.0;
      Xpar(i, 1) = rng.normal();
      y(i) = std::sin(4.0 * prop(i)) + Xpar(i, 1) + 0.3 * rng.normal();
    }
  };
  Eigen::VectorXd prop, yt, prop_te, y_te;
  Eigen::MatrixXd Xp, Xp_te;
  make(n, prop, Xp, yt);
  make(n_test, prop_te, Xp_te, y_te);

  WeightedDesign par{Xp, yt, {}};
  FitArtifact sp = fit_pspline(prop, par);
  Eigen::VectorXd pred_sp = sp.predict(pspline_design(sp, prop_te, Xp_te));

  Eigen::MatrixXd Xlin(n, 3);
  Xlin << Xp, prop;
  WeightedDesign lin{Xlin, yt, {}};
  FitArtifact plain = fit_linear(lin);
  Eigen::MatrixXd Xlin_te(n_test, 3);
  Xlin_te << Xp_te, prop_te;
  Eigen::VectorXd pred_lin = plain.predict(Xlin_te);

  const double rmse_sp = std::sqrt((pred_sp - y_te).squaredNorm() / n_test);
  const double rmse_lin = std::sqrt((pred_lin - y_te).squaredNorm() / n_test);
  CHECK(rmse_sp < rmse_lin);
}

TEST_CASE("gcv recovers a noiseless linear truth") {
  const int n = 300;
  Rng rng(77);
  Eigen::VectorXd prop(n);
  Eigen::MatrixXd Xpar(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    prop(i) = rng.uniform();
    Xpar(i, 0) = 1.0;
    Xpar(i, 1) = rng.normal();
    y(i) = 1.0 - 0.7 * Xpar(i, 1) + 2.0 * prop(i);  // zero noise
  }
  WeightedDesign par{Xpar, y, {}};
  FitArtifact sp = fit_pspline(prop, par);
  Eigen::VectorXd pred = sp.predict(pspline_design(sp, prop, Xpar));
  CHECK((pred - y).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("pspline predictions are invariant to row permutation") {
  const int n = 150;
  Rng rng(88);
  Eigen::VectorXd prop(n);
  Eigen::MatrixXd Xpar(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    prop(i) = rng.uniform();
    Xpar(i, 0) = 1.0;
    Xpar(i, 1) = rng.normal();
    y(i) = std::sin(3 * prop(i)) + Xpar(i, 1) + 0.1 * rng.normal();
  }
  WeightedDesign par{Xpar, y, {}};
  FitArtifact a = fit_pspline(prop, par);

  // reverse the rows
  Eigen::VectorXd prop_r = prop.reverse();
  Eigen::MatrixXd Xpar_r = Xpar.colwise().reverse();
  Eigen::VectorXd y_r = y.reverse();
  WeightedDesign par_r{Xpar_r, y_r, {}};
  FitArtifact b = fit_pspline(prop_r, par_r);

  Eigen::VectorXd pa = a.predict(pspline_design(a, prop, Xpar));
  Eigen::VectorXd pb = b.predict(pspline_design(b, prop, Xpar));
  CHECK((pa - pb).lpNorm<Eigen::Infinity>() < 1e-8);
}
