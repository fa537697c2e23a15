#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace bridgesim {

struct KsResult {
  double statistic = 0.0;
  double critical = 0.0;
  double alpha = 0.01;
  double p_value = 1.0;  // asymptotic Kolmogorov tail at the effective sample size
  std::size_t n = 0;
  bool pass = false;
};

/// c(alpha) with sup|F_n - F| <= c / sqrt(n) at level alpha: 1.628 for 0.01,
/// 1.358 for 0.05, 1.224 for 0.10, sqrt(-log(alpha/2)/2) otherwise.
double ks_coefficient(double alpha);

/// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_sf(double lambda);

/// Critical value of D_n. Below 100 samples throws SampleSizeError; from 100
/// to 999 uses Stephens' finite-sample form c / (sqrt(n) + 0.12 + 0.11/sqrt(n)).
double ks_critical(std::size_t n, double alpha);

/// One-sample test against a continuous CDF.
KsResult ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf,
                       double alpha = 0.01);

/// Two-sample test; the effective size is n m / (n + m).
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b, double alpha = 0.01);

}  // namespace bridgesim
