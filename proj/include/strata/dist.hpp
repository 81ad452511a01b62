#pragma once

namespace strata {

double inv_normal_cdf(double p);
double normal_cdf(double x);

// upper-tail quantiles used for confidence intervals
double student_t_cdf(double x, double nu);
double student_t_quantile(double p, double nu);

double expit(double x);
double logit(double p);

}  // namespace strata
