#include "strata/bart.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "strata/dist.hpp"

namespace strata {

void BartConfig::validate() const {
  if (m < 1) throw std::invalid_argument("BartConfig: m must be >= 1");
  if (n_keep < 1) throw std::invalid_argument("BartConfig: n_keep must be >= 1");
  if (n_burn < 0) throw std::invalid_argument("BartConfig: n_burn must be >= 0");
  if (!(split_alpha > 0.0 && split_alpha < 1.0)) {
    throw std::invalid_argument("BartConfig: split_alpha must be in (0,1)");
  }
  if (split_beta < 0.0) throw std::invalid_argument("BartConfig: split_beta must be >= 0");
}

BartConfig bart_desk_config() {
  BartConfig c;
  c.m = 50;
  c.n_burn = 200;
  c.n_keep = 200;
  return c;
}

int BartTree::route(const double* row, bool mia) const {
  int cur = 0;
  while (nodes[cur].var >= 0) {
    const BartNode& nd = nodes[cur];
    const double x = row[nd.var];
    bool go_left;
    if (std::isnan(x)) {
      if (!mia) throw std::runtime_error("NA encountered with MIA disabled");
      go_left = nd.miss_left;
    } else {
      go_left = x <= nd.cut;
    }
    cur = go_left ? nd.left : nd.right;
  }
  return cur;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Marsaglia-Tsang gamma(shape,1) sampler
double draw_gamma(double shape, Rng& rng) {
  if (shape < 1.0) {
    const double u = rng.uniform();
    return draw_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = rng.uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

double draw_chisq(double df, Rng& rng) { return 2.0 * draw_gamma(df / 2.0, rng); }

// one-sided truncated standard-normal shifted by mean; positive=true keeps z>0
double draw_truncnorm(double mean, bool positive, Rng& rng) {
  const double a = positive ? -mean : mean;  // lower bound for standardized draw
  if (a < 5.0) {
    const double lo = normal_cdf(a);
    const double u = lo + rng.uniform() * (1.0 - lo);
    const double z = inv_normal_cdf(std::min(u, 1.0 - 1e-16));
    return positive ? mean + z : mean - z;
  }
  // deep tail: exponential rejection (Robert 1995)
  const double lam = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double e = -std::log(rng.uniform()) / lam;
    const double z = a + e;
    const double rho = std::exp(-0.5 * (z - lam) * (z - lam));
    if (rng.uniform() <= rho) return positive ? mean + z : mean - z;
  }
}

constexpr int kMinLeaf = 5;  // smallest child a proposal may create

struct Sampler {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> X;  // contiguous rows
  const BartConfig& cfg;
  int n, p;
  double sigma_mu;
  std::vector<std::vector<double>> cuts;  // observed unique values per column
  std::vector<int> usable;                // columns with at least one cut value

  std::vector<BartTree> trees;
  std::vector<std::vector<int>> leaf_of_row;  // per tree
  Eigen::VectorXd total;                      // current sum-of-trees fit
  double sigma2 = 1.0;

  Sampler(const Eigen::MatrixXd& x, const BartConfig& c) : X(x), cfg(c) {
    n = static_cast<int>(X.rows());
    p = static_cast<int>(X.cols());
    sigma_mu = 0.5 / (c.k * std::sqrt(static_cast<double>(c.m)));
    cuts.resize(p);
    for (int j = 0; j < p; ++j) {
      std::vector<double> vals;
      vals.reserve(n);
      for (int i = 0; i < n; ++i) {
        if (!std::isnan(X(i, j))) vals.push_back(X(i, j));
      }
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      if (vals.size() <= 1) {
        vals.clear();  // constant column: nothing to split on
      } else {
        vals.pop_back();  // cutting at the max sends nothing right
      }
      cuts[j] = std::move(vals);
      if (!cuts[j].empty()) usable.push_back(j);
    }
    if (usable.empty()) throw std::runtime_error("bart_fit: no usable split variable");
    trees.assign(cfg.m, BartTree{{BartNode{}}});
    leaf_of_row.assign(cfg.m, std::vector<int>(n, 0));
    total = Eigen::VectorXd::Zero(n);
  }

  double p_split(int depth) const {
    return cfg.split_alpha * std::pow(1.0 + depth, -cfg.split_beta);
  }

  static int depth_of(const BartTree& t, int node) {
    // root is 0; nodes carry no parent pointer, so walk down
    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [cur, d] = stack.back();
      stack.pop_back();
      if (cur == node) return d;
      const BartNode& nd = t.nodes[cur];
      if (nd.var >= 0) {
        stack.push_back({nd.left, d + 1});
        stack.push_back({nd.right, d + 1});
      }
    }
    return 0;
  }

  // marginal log-likelihood contribution of a leaf holding residual sum s over c rows
  double leaf_loglik(double s, int c) const {
    const double v = sigma2 + c * sigma_mu * sigma_mu;
    return 0.5 * std::log(sigma2 / v) + (sigma_mu * sigma_mu * s * s) / (2.0 * sigma2 * v);
  }

  void refresh_assignment(int j) {
    BartTree& t = trees[j];
    auto& lof = leaf_of_row[j];
    for (int i = 0; i < n; ++i) lof[i] = t.route(X.row(i).data(), cfg.mia_enabled);
  }

  // residual sums/counts per node of tree j for the given partial residuals
  void leaf_stats(int j, const Eigen::VectorXd& resid, std::vector<double>& s,
                  std::vector<int>& c) const {
    const BartTree& t = trees[j];
    s.assign(t.nodes.size(), 0.0);
    c.assign(t.nodes.size(), 0);
    const auto& lof = leaf_of_row[j];
    for (int i = 0; i < n; ++i) {
      s[lof[i]] += resid[i];
      c[lof[i]] += 1;
    }
  }

  std::vector<int> leaves(const BartTree& t) const {
    std::vector<int> out;
    for (size_t k = 0; k < t.nodes.size(); ++k) {
      if (t.nodes[k].var < 0) out.push_back(static_cast<int>(k));
    }
    return out;
  }

  // internal nodes whose both children are leaves
  std::vector<int> prunable(const BartTree& t) const {
    std::vector<int> out;
    for (size_t k = 0; k < t.nodes.size(); ++k) {
      const BartNode& nd = t.nodes[k];
      if (nd.var >= 0 && t.nodes[nd.left].var < 0 && t.nodes[nd.right].var < 0) {
        out.push_back(static_cast<int>(k));
      }
    }
    return out;
  }

  void propose_rule(Rng& rng, int* var, double* cut, bool* miss_left) {
    *var = usable[static_cast<size_t>(rng.below(usable.size()))];
    const auto& cc = cuts[*var];
    *cut = cc[static_cast<size_t>(rng.below(cc.size()))];
    *miss_left = cfg.mia_enabled ? rng.bernoulli(0.5) : true;
  }

  // rows of tree j currently in leaf `leaf` split by (var, cut, miss_left)
  void split_counts(int j, int leaf, int var, double cut, bool miss_left,
                    const Eigen::VectorXd& resid, int* n_l, int* n_r, double* s_l,
                    double* s_r) const {
    *n_l = *n_r = 0;
    *s_l = *s_r = 0.0;
    const auto& lof = leaf_of_row[j];
    for (int i = 0; i < n; ++i) {
      if (lof[i] != leaf) continue;
      const double x = X(i, var);
      const bool left = std::isnan(x) ? miss_left : x <= cut;
      if (left) {
        ++*n_l;
        *s_l += resid[i];
      } else {
        ++*n_r;
        *s_r += resid[i];
      }
    }
  }

  void tree_move(int j, const Eigen::VectorXd& resid, Rng& rng) {
    BartTree& t = trees[j];
    const double u_move = rng.uniform();
    std::vector<double> s;
    std::vector<int> c;
    leaf_stats(j, resid, s, c);

    if (u_move < 0.4) {  // GROW
      auto lv = leaves(t);
      const int leaf = lv[static_cast<size_t>(rng.below(lv.size()))];
      int var;
      double cut;
      bool miss_left;
      propose_rule(rng, &var, &cut, &miss_left);
      int n_l, n_r;
      double s_l, s_r;
      split_counts(j, leaf, var, cut, miss_left, resid, &n_l, &n_r, &s_l, &s_r);
      if (n_l < kMinLeaf || n_r < kMinLeaf) return;
      const int d = depth_of(t, leaf);
      const double log_lik =
          leaf_loglik(s_l, n_l) + leaf_loglik(s_r, n_r) - leaf_loglik(s[leaf], c[leaf]);
      const double log_prior = std::log(p_split(d)) + 2.0 * std::log(1.0 - p_split(d + 1)) -
                               std::log(1.0 - p_split(d));
      const int n_prunable_after = static_cast<int>(prunable(t).size()) + 1 -
                                   [&] {  // splitting a prunable parent's child keeps it internal
                                     // recompute exactly: after grow, prunable set changes; the
                                     // parent of `leaf` stops being prunable if it was
                                     for (size_t k = 0; k < t.nodes.size(); ++k) {
                                       const BartNode& nd = t.nodes[k];
                                       if (nd.var >= 0 && (nd.left == leaf || nd.right == leaf) &&
                                           t.nodes[nd.left].var < 0 && t.nodes[nd.right].var < 0) {
                                         return 1;
                                       }
                                     }
                                     return 0;
                                   }();
      const double log_prop = std::log(0.4) - std::log(static_cast<double>(n_prunable_after)) -
                              (std::log(0.4) - std::log(static_cast<double>(lv.size())));
      if (std::log(rng.uniform()) < log_lik + log_prior + log_prop) {
        const int li = static_cast<int>(t.nodes.size());
        t.nodes.push_back(BartNode{});
        t.nodes.push_back(BartNode{});
        BartNode& nd = t.nodes[leaf];
        nd.var = var;
        nd.cut = cut;
        nd.miss_left = miss_left;
        nd.left = li;
        nd.right = li + 1;
        refresh_assignment(j);
      }
    } else if (u_move < 0.8) {  // PRUNE
      auto pr = prunable(t);
      if (pr.empty()) return;
      const int node = pr[static_cast<size_t>(rng.below(pr.size()))];
      BartNode& nd = t.nodes[node];
      const int d = depth_of(t, node);
      const double log_lik = leaf_loglik(s[node], c[node]) - leaf_loglik(s[nd.left], c[nd.left]) -
                             leaf_loglik(s[nd.right], c[nd.right]);
      const double log_prior = std::log(1.0 - p_split(d)) - std::log(p_split(d)) -
                               2.0 * std::log(1.0 - p_split(d + 1));
      const int n_leaves_after = static_cast<int>(leaves(t).size()) - 1;
      const double log_prop = std::log(0.4) - std::log(static_cast<double>(n_leaves_after)) -
                              (std::log(0.4) - std::log(static_cast<double>(pr.size())));
      if (std::log(rng.uniform()) < log_lik + log_prior + log_prop) {
        // collapse the node, then drop the now-unreachable children
        nd.var = -1;
        nd.left = nd.right = -1;
        BartTree compact;
        std::vector<int> remap(t.nodes.size(), -1);
        std::vector<int> stack{0};
        std::vector<int> order;
        while (!stack.empty()) {
          const int cur = stack.back();
          stack.pop_back();
          order.push_back(cur);
          const BartNode& cn = t.nodes[cur];
          if (cn.var >= 0) {
            stack.push_back(cn.right);
            stack.push_back(cn.left);
          }
        }
        for (int cur : order) {
          remap[cur] = static_cast<int>(compact.nodes.size());
          compact.nodes.push_back(t.nodes[cur]);
        }
        for (auto& cn : compact.nodes) {
          if (cn.var >= 0) {
            cn.left = remap[cn.left];
            cn.right = remap[cn.right];
          }
        }
        t = std::move(compact);
        refresh_assignment(j);
      }
    } else {  // CHANGE rule of a node with two leaf children
      auto pr = prunable(t);
      if (pr.empty()) return;
      const int node = pr[static_cast<size_t>(rng.below(pr.size()))];
      BartNode& nd = t.nodes[node];
      int var;
      double cut;
      bool miss_left;
      propose_rule(rng, &var, &cut, &miss_left);
      // rows reaching `node`: union of its two leaf children
      int n_l = 0, n_r = 0;
      double s_l = 0.0, s_r = 0.0;
      const auto& lof = leaf_of_row[j];
      for (int i = 0; i < n; ++i) {
        if (lof[i] != nd.left && lof[i] != nd.right) continue;
        const double x = X(i, var);
        const bool left = std::isnan(x) ? miss_left : x <= cut;
        if (left) {
          ++n_l;
          s_l += resid[i];
        } else {
          ++n_r;
          s_r += resid[i];
        }
      }
      if (n_l < kMinLeaf || n_r < kMinLeaf) return;
      const double log_lik = leaf_loglik(s_l, n_l) + leaf_loglik(s_r, n_r) -
                             leaf_loglik(s[nd.left], c[nd.left]) -
                             leaf_loglik(s[nd.right], c[nd.right]);
      if (std::log(rng.uniform()) < log_lik) {
        nd.var = var;
        nd.cut = cut;
        nd.miss_left = miss_left;
        refresh_assignment(j);
      }
    }
  }

  void draw_leaf_values(int j, const Eigen::VectorXd& resid, Rng& rng) {
    BartTree& t = trees[j];
    std::vector<double> s;
    std::vector<int> c;
    leaf_stats(j, resid, s, c);
    for (size_t k = 0; k < t.nodes.size(); ++k) {
      BartNode& nd = t.nodes[k];
      if (nd.var >= 0) continue;
      const double prec = c[k] / sigma2 + 1.0 / (sigma_mu * sigma_mu);
      const double mean = (s[k] / sigma2) / prec;
      nd.mu = mean + rng.normal() / std::sqrt(prec);
    }
  }

  // one Gibbs sweep against scaled response ys
  void sweep(const Eigen::VectorXd& ys, Rng& rng, bool draw_sigma, double nu, double lambda) {
    for (int j = 0; j < cfg.m; ++j) {
      // partial residuals without tree j
      Eigen::VectorXd fit_j(n);
      const auto& lof = leaf_of_row[j];
      for (int i = 0; i < n; ++i) fit_j[i] = trees[j].nodes[lof[i]].mu;
      Eigen::VectorXd resid = ys - total + fit_j;
      tree_move(j, resid, rng);
      draw_leaf_values(j, resid, rng);
      const auto& lof2 = leaf_of_row[j];
      for (int i = 0; i < n; ++i) {
        const double new_fit = trees[j].nodes[lof2[i]].mu;
        total[i] += new_fit - fit_j[i];
      }
    }
    if (draw_sigma) {
      const double rss = (ys - total).squaredNorm();
      sigma2 = (nu * lambda + rss) / draw_chisq(nu + n, rng);
    }
  }
};

bool has_na(const Eigen::MatrixXd& X) { return X.hasNaN(); }

}  // namespace

Eigen::MatrixXd BartPosterior::predict(const Eigen::MatrixXd& X) const {
  if (X.cols() != n_cols) {
    throw std::invalid_argument("bart_predict: expected " + std::to_string(n_cols) +
                                " columns, got " + std::to_string(X.cols()));
  }
  if (!config.mia_enabled && X.hasNaN()) {
    throw std::runtime_error("bart_predict: NA in prediction rows with MIA disabled");
  }
  const int nd = static_cast<int>(draws.size());
  const int n = static_cast<int>(X.rows());
  Eigen::MatrixXd out(nd, n);
  // row-major copies so trees can route on contiguous rows
  std::vector<double> row(n_cols);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n_cols; ++j) row[j] = X(i, j);
    for (int d = 0; d < nd; ++d) {
      double f = center;
      for (const auto& t : draws[d].trees) f += t.value(row.data(), config.mia_enabled);
      out(d, i) = probit ? normal_cdf(f) : f;
    }
  }
  return out;
}

Eigen::VectorXd BartPosterior::predict_mean(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd per_draw = predict(X);
  return per_draw.colwise().mean();
}

Eigen::VectorXd BartPosterior::predictive_draw(const Eigen::MatrixXd& X, int d, Rng& rng) const {
  if (d < 0 || d >= static_cast<int>(draws.size())) {
    throw std::invalid_argument("predictive_draw: draw index out of range");
  }
  const int n = static_cast<int>(X.rows());
  Eigen::VectorXd out(n);
  std::vector<double> row(n_cols);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n_cols; ++j) row[j] = X(i, j);
    double f = center;
    for (const auto& t : draws[d].trees) f += t.value(row.data(), config.mia_enabled);
    out[i] = probit ? normal_cdf(f) : f + draws[d].sigma * rng.normal();
  }
  return out;
}

BartPosterior bart_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const BartConfig& config, Rng& rng) {
  config.validate();
  const int n = static_cast<int>(X.rows());
  if (n < 2) throw std::invalid_argument("bart_fit: need at least 2 rows");
  if (y.size() != n) throw std::invalid_argument("bart_fit: response length mismatch");
  if (!config.mia_enabled && has_na(X)) {
    throw std::runtime_error("bart_fit: NA in design with MIA disabled");
  }

  const double ymin = y.minCoeff(), ymax = y.maxCoeff();
  const double center = 0.5 * (ymin + ymax);
  const double scale = ymax > ymin ? ymax - ymin : 1.0;
  Eigen::VectorXd ys = (y.array() - center) / scale;

  double sd = std::sqrt((ys.array() - ys.mean()).square().sum() / std::max(1, n - 1));
  if (!(sd > 0.0)) sd = 1e-9;
  // P(sigma < sd) = q  =>  lambda = sd^2 * qchisq(1-q, nu) / nu   (nu=3, q=0.9)
  const double qchi = 0.5843743741551835;
  const double lambda = sd * sd * qchi / config.nu;

  Sampler smp(X, config);
  smp.sigma2 = sd * sd;

  BartPosterior post;
  post.config = config;
  post.probit = false;
  post.center = center;
  post.n_cols = static_cast<int>(X.cols());
  post.train_had_na = has_na(X);
  post.cut_values = smp.cuts;
  post.draws.reserve(config.n_keep);

  for (int it = 0; it < config.n_burn + config.n_keep; ++it) {
    smp.sweep(ys, rng, /*draw_sigma=*/true, config.nu, lambda);
    if (it >= config.n_burn) {
      BartDraw d;
      d.trees = smp.trees;
      for (auto& t : d.trees) {
        for (auto& nd : t.nodes) {
          if (nd.var < 0) nd.mu *= scale;
        }
      }
      d.sigma = std::sqrt(smp.sigma2) * scale;
      post.draws.push_back(std::move(d));
    }
  }
  return post;
}

BartPosterior bart_fit_probit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const BartConfig& config, Rng& rng) {
  config.validate();
  const int n = static_cast<int>(X.rows());
  if (n < 2) throw std::invalid_argument("bart_fit_probit: need at least 2 rows");
  if (y.size() != n) throw std::invalid_argument("bart_fit_probit: response length mismatch");
  bool any0 = false, any1 = false;
  for (int i = 0; i < n; ++i) {
    if (y[i] == 0.0) {
      any0 = true;
    } else if (y[i] == 1.0) {
      any1 = true;
    } else {
      throw std::invalid_argument("bart_fit_probit: response must be binary 0/1");
    }
  }
  if (!any0 || !any1) {
    throw std::invalid_argument("bart_fit_probit: both classes must be present");
  }
  if (!config.mia_enabled && has_na(X)) {
    throw std::runtime_error("bart_fit_probit: NA in design with MIA disabled");
  }

  const double offset = inv_normal_cdf(std::min(0.999, std::max(0.001, y.mean())));

  BartConfig cfg = config;
  Sampler smp(X, cfg);
  smp.sigma2 = 1.0;                                            // probit: unit variance
  smp.sigma_mu = 3.0 / (cfg.k * std::sqrt(double(cfg.m)));     // latent scale prior

  BartPosterior post;
  post.config = config;
  post.probit = true;
  post.center = offset;
  post.n_cols = static_cast<int>(X.cols());
  post.train_had_na = has_na(X);
  post.cut_values = smp.cuts;
  post.draws.reserve(config.n_keep);

  Eigen::VectorXd latent(n);
  for (int it = 0; it < config.n_burn + config.n_keep; ++it) {
    // latent draw given current fit
    for (int i = 0; i < n; ++i) {
      const double mean = offset + smp.total[i];
      latent[i] = draw_truncnorm(mean, y[i] == 1.0, rng) - offset;
    }
    smp.sweep(latent, rng, /*draw_sigma=*/false, 0.0, 0.0);
    if (it >= config.n_burn) {
      BartDraw d;
      d.trees = smp.trees;
      d.sigma = 1.0;
      post.draws.push_back(std::move(d));
    }
  }
  return post;
}

}  // namespace strata
