#pragma once

#include <span>
#include <vector>

namespace gmr {

/// Recursive pairwise summation; the result depends only on the element order.
double pairwise_sum(std::span<const double> values);
double mean(std::span<const double> values);
/// Unbiased (n-1) sample variance; 0 for fewer than two values.
double sample_variance(std::span<const double> values);
/// (mean of |v|^p)^(1/p) with pairwise summation.
double power_mean(std::span<const double> values, double p);

/// Standard error of a binomial proportion estimated from `trials` draws.
double binomial_standard_error(double fraction, std::size_t trials);

/// Ordinary least-squares slope of y against x.
double least_squares_slope(std::span<const double> x, std::span<const double> y);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test. The p-value uses the asymptotic
/// Kolmogorov distribution with Stephens' small-sample correction.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_survival(double lambda);

}  // namespace gmr
