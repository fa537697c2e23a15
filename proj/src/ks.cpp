#include "bridgesim/ks.hpp"

#include <algorithm>
#include <cmath>

#include "bridgesim/errors.hpp"

namespace bridgesim {

double ks_coefficient(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParamError("KS level must lie in (0, 1)");
  if (std::abs(alpha - 0.01) < 1e-12) return 1.628;
  if (std::abs(alpha - 0.05) < 1e-12) return 1.358;
  if (std::abs(alpha - 0.10) < 1e-12) return 1.224;
  return std::sqrt(-0.5 * std::log(0.5 * alpha));
}

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

double ks_critical(std::size_t n, double alpha) {
  if (n < 100) throw SampleSizeError("KS test needs at least 100 samples");
  const double c = ks_coefficient(alpha);
  const double rn = std::sqrt(static_cast<double>(n));
  if (n < 1000) return c / (rn + 0.12 + 0.11 / rn);
  return c / rn;
}

KsResult ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf,
                       double alpha) {
  KsResult r;
  r.alpha = alpha;
  r.n = sample.size();
  r.critical = ks_critical(r.n, alpha);
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(r.n);
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double F = cdf(sample[i]);
    if (std::isnan(F)) throw NumericsError("reference CDF returned NaN");
    d = std::max({d, (i + 1) / n - F, F - i / n});
  }
  r.statistic = d;
  r.p_value = kolmogorov_sf(d * std::sqrt(n));
  r.pass = d <= r.critical;
  return r;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b, double alpha) {
  if (a.size() < 100 || b.size() < 100) throw SampleSizeError("KS test needs at least 100 samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  KsResult r;
  r.alpha = alpha;
  const double ne = na * nb / (na + nb);
  r.n = static_cast<std::size_t>(ne);
  r.critical = ks_coefficient(alpha) / std::sqrt(ne);
  r.statistic = d;
  r.p_value = kolmogorov_sf(d * std::sqrt(ne));
  r.pass = d <= r.critical;
  return r;
}

}  // namespace bridgesim
