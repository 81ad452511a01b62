#pragma once

#include <Eigen/Dense>
#include <vector>

#include "strata/rng.hpp"

namespace strata {

struct BartConfig {
  int m = 200;          // number of trees
  int n_burn = 200;
  int n_keep = 200;
  double split_alpha = 0.95;  // depth prior alpha * (1+d)^-beta
  double split_beta = 2.0;
  double k = 2.0;       // leaf prior scale
  double nu = 3.0;      // error variance prior df
  double q = 0.9;       // error variance prior quantile anchor
  bool mia_enabled = true;

  void validate() const;
};

// desk-scale profile used by the test suite; full-size m=200 is the default
BartConfig bart_desk_config();

struct BartNode {
  int var = -1;  // -1 = leaf
  double cut = 0.0;
  bool miss_left = true;  // MIA routing for NA in the split variable
  int left = -1, right = -1;
  double mu = 0.0;  // leaf value, original response scale
};

struct BartTree {
  std::vector<BartNode> nodes;  // node 0 is the root

  int route(const double* row, bool mia) const;
  double value(const double* row, bool mia) const { return nodes[route(row, mia)].mu; }
};

struct BartDraw {
  std::vector<BartTree> trees;
  double sigma = 0.0;  // original scale
};

struct BartPosterior {
  BartConfig config;
  bool probit = false;
  double center = 0.0;  // response offset (probit: latent offset)
  int n_cols = 0;
  bool train_had_na = false;
  std::vector<std::vector<double>> cut_values;  // observed unique values per column
  std::vector<BartDraw> draws;

  // per-draw sum-of-trees evaluation; probit gives Phi(latent) probabilities.
  // rows must match the training schema; NA cells routed by MIA.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& X) const;
  // one posterior-predictive draw per row using kept draw `d`
  Eigen::VectorXd predictive_draw(const Eigen::MatrixXd& X, int d, Rng& rng) const;
};

BartPosterior bart_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const BartConfig& config, Rng& rng);

// Albert-Chib latent augmentation around the same machinery
BartPosterior bart_fit_probit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const BartConfig& config, Rng& rng);

inline Eigen::MatrixXd bart_predict(const BartPosterior& post, const Eigen::MatrixXd& X) {
  return post.predict(X);
}

}  // namespace strata
