#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sevmix/errors.hpp"

namespace sevmix {

inline constexpr std::array<int, 25> kHaltonPrimes = {
    2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41,
    43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97};

inline bool is_prime(int n) {
  if (n < 2) return false;
  for (int d = 2; d * d <= n; ++d)
    if (n % d == 0) return false;
  return true;
}

// Radical inverse of `index` in base `base`. Values lie strictly in (0,1)
// for index >= 1.
inline double halton_element(std::int64_t index, int base) {
  if (index < 1) throw std::invalid_argument("halton_element: index must be >= 1");
  if (base < 2 || !is_prime(base))
    throw std::invalid_argument("halton_element: base must be a prime >= 2");
  double f = 1.0;
  double r = 0.0;
  std::int64_t i = index;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

inline double std_normal_pdf(double z) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double std_normal_cdf(double z) {
  if (!std::isfinite(z)) throw std::invalid_argument("std_normal_cdf: non-finite z");
  return 0.5 * std::erfc(-z * 0.7071067811865475244);
}

// Acklam's rational approximation, polished with two Halley steps against
// the erfc-based CDF.
inline double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("std_normal_quantile: p must be in (0,1)");
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (std::fabs(x) < 37.0) {
    static const double sqrt_2pi = 2.5066282746310005024;
    for (int k = 0; k < 2; ++k) {
      double e = std_normal_cdf(x) - p;
      double u = e * sqrt_2pi * std::exp(0.5 * x * x);
      x -= u / (1.0 + 0.5 * x * u);
    }
  }
  return x;
}

namespace detail {

inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double term = sum;
  for (int n = 0; n < 1000; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

// Regularized lower incomplete gamma P(a, x).
inline double regularized_gamma_p(double a, double x) {
  if (a <= 0.0) throw std::invalid_argument("regularized_gamma_p: a must be positive");
  if (x <= 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_contfrac(a, x);
}

inline double chi_square_cdf(double x, int df) {
  if (df < 1) throw std::invalid_argument("chi_square_cdf: df must be >= 1");
  if (x <= 0.0) return 0.0;
  return regularized_gamma_p(0.5 * df, 0.5 * x);
}

// Value x with P(chi2_df <= x) = confidence. Wilson-Hilferty start, then
// bisection on the monotone CDF.
inline double chi_square_quantile(int df, double confidence) {
  if (df < 1) throw std::invalid_argument("chi_square_quantile: df must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::invalid_argument("chi_square_quantile: confidence must be in (0,1)");
  double z = std_normal_quantile(confidence);
  double t = 1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df));
  double hi = df * t * t * t;
  if (!(hi > 0.0)) hi = 1.0;
  while (chi_square_cdf(hi, df) < confidence) hi *= 2.0;
  double lo = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
    double mid = 0.5 * (lo + hi);
    if (chi_square_cdf(mid, df) < confidence)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Per-observation blocks of standard-normal values derived from Halton
// sequences; dimension d uses the d-th prime. Fully deterministic.
struct DrawMatrix {
  std::size_t n_obs = 0;
  std::size_t n_draws = 0;
  std::size_t n_random = 0;
  std::size_t discard = 0;
  std::vector<double> values;  // [obs][draw][dim]

  double at(std::size_t n, std::size_t r, std::size_t d) const {
    return values[(n * n_draws + r) * n_random + d];
  }
  const double* block(std::size_t n) const {
    return values.data() + n * n_draws * n_random;
  }
};

inline DrawMatrix make_draws(std::size_t n_obs, std::size_t n_draws,
                             std::size_t n_random, std::size_t discard) {
  if (n_obs < 1 || n_draws < 1 || n_random < 1)
    throw std::invalid_argument("make_draws: all counts must be >= 1");
  if (n_random > kHaltonPrimes.size())
    throw std::invalid_argument("make_draws: n_random exceeds supported prime table");
  DrawMatrix dm;
  dm.n_obs = n_obs;
  dm.n_draws = n_draws;
  dm.n_random = n_random;
  dm.discard = discard;
  dm.values.resize(n_obs * n_draws * n_random);
  for (std::size_t d = 0; d < n_random; ++d) {
    const int base = kHaltonPrimes[d];
    for (std::size_t n = 0; n < n_obs; ++n) {
      for (std::size_t r = 0; r < n_draws; ++r) {
        std::int64_t index =
            static_cast<std::int64_t>(discard + n * n_draws + r) + 1;
        double u = halton_element(index, base);
        dm.values[(n * n_draws + r) * n_random + d] = std_normal_quantile(u);
      }
    }
  }
  return dm;
}

}  // namespace sevmix
