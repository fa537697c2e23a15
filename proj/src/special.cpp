#include "bridgesim/special.hpp"

#include <cmath>
#include <limits>

namespace bridgesim::special {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kAsymptoticThreshold = 60.0;
// Series terms are dropped once below this fraction of the running sum.
constexpr double kSeriesCutoff = 1e-17;

// log of sum_k (-1)^k a_k(nu) / z^k, the Hankel correction to e^z / sqrt(2 pi z).
double log_hankel_series(double nu, double z) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (k * 8.0 * z);
    if (std::abs(next) >= std::abs(term)) break;  // asymptotic series turned
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return std::log(sum);
}

}  // namespace

double log_bessel_i_normalised(double nu, double z) {
  if (z <= 0.0) return -std::lgamma(nu + 1.0);
  if (z > kAsymptoticThreshold) {
    return z - 0.5 * std::log(2.0 * M_PI * z) + log_hankel_series(nu, z) -
           nu * std::log(0.5 * z);
  }
  // Terms t_k = q^k / (k! Gamma(k+nu+1)), q = z^2/4. Peak near k ~ z/2.
  const double log_q = 2.0 * std::log(0.5 * z);
  const double log_t0 = -std::lgamma(nu + 1.0);
  // Find peak index and sum around it relative to the peak value.
  const double disc = nu * nu + 4.0 * std::exp(log_q);
  const int peak = std::max(0, static_cast<int>(std::floor(0.5 * (-nu + std::sqrt(disc)))));
  auto log_term = [&](int k) {
    return k * log_q - std::lgamma(k + 1.0) - std::lgamma(k + nu + 1.0);
  };
  const double log_peak = peak == 0 ? log_t0 : log_term(peak);
  double sum = 1.0;
  // forward from peak using the ratio t_{k+1}/t_k = q / ((k+1)(k+1+nu))
  const double q = std::exp(log_q);
  double t = 1.0;
  for (int k = peak; k < peak + 100000; ++k) {
    t *= q / ((k + 1.0) * (k + 1.0 + nu));
    sum += t;
    if (t < kSeriesCutoff * sum) break;
  }
  t = 1.0;
  for (int k = peak; k > 0; --k) {
    t *= (k * (k + nu)) / q;
    sum += t;
    if (t < kSeriesCutoff * sum) break;
  }
  return log_peak + std::log(sum);
}

double log_bessel_i(double nu, double z) {
  if (z <= 0.0) return nu == 0.0 ? 0.0 : kNegInf;
  if (z > kAsymptoticThreshold) return z - 0.5 * std::log(2.0 * M_PI * z) + log_hankel_series(nu, z);
  return nu * std::log(0.5 * z) + log_bessel_i_normalised(nu, z);
}

double bessel_i_ratio(double nu, double z) {
  if (z <= 0.0) return 0.0;
  return std::exp(log_bessel_i(nu + 1.0, z) - log_bessel_i(nu, z));
}

double normal_cdf(double u) { return 0.5 * std::erfc(-u / M_SQRT2); }

double log_normal_pdf(double u) { return -0.5 * u * u - kLogSqrt2Pi; }

double log_normal_cdf(double u) {
  if (u > -30.0) return std::log(0.5 * std::erfc(-u / M_SQRT2));
  // Mills-ratio asymptotics: Phi(u) = phi(u)/|u| (1 - 1/u^2 + 3/u^4 - 15/u^6 + ...)
  const double inv2 = 1.0 / (u * u);
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 12; ++k) {
    term *= -(2.0 * k - 1.0) * inv2;
    sum += term;
  }
  return log_normal_pdf(u) - std::log(-u) + std::log(sum);
}

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double log_sub_exp(double a, double b) {
  if (b == kNegInf) return a;
  if (b >= a) return kNegInf;
  return a + std::log(-std::expm1(b - a));
}

}  // namespace bridgesim::special
