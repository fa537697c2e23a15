#pragma once

namespace bridgesim::special {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// log I_nu(z) for nu > -1, z >= 0 (returns -inf at z = 0 when nu > 0).
/// Power series summed in log space with relative tail cutoff 1e-14 for
/// moderate z; Hankel asymptotic expansion for large z.
double log_bessel_i(double nu, double z);

/// log of the normalised series sum_k (z^2/4)^k / (k! Gamma(k + nu + 1)),
/// i.e. log(I_nu(z) (z/2)^-nu). Finite at z = 0.
double log_bessel_i_normalised(double nu, double z);

/// I_{nu+1}(z) / I_nu(z), computed without overflow.
double bessel_i_ratio(double nu, double z);

double normal_cdf(double u);
/// log Phi(u), accurate far into the lower tail.
double log_normal_cdf(double u);
/// log(1 - Phi(u)).
inline double log_normal_sf(double u) { return log_normal_cdf(-u); }
double log_normal_pdf(double u);

/// log(exp(a) + exp(b)) for a, b possibly -inf.
double log_add_exp(double a, double b);
/// log(exp(a) - exp(b)) for a >= b.
double log_sub_exp(double a, double b);

}  // namespace bridgesim::special
