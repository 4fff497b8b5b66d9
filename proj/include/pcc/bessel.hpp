#ifndef PCC_BESSEL_HPP
#define PCC_BESSEL_HPP

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace pcc {

namespace detail {

// K1 by its ascending series. Accurate to a few ulps for x <= 2.
inline double bessel_k1_series(double x) {
  const double q = 0.25 * x * x;
  const double log_half_x = std::log(0.5 * x);
  double term = 1.0;      // q^k / (k! (k+1)!)
  double psi_k = -std::numbers::egamma;   // psi(k+1)
  double i1 = 0.0;
  double tail = 0.0;
  for (int k = 0; k < 60; ++k) {
    const double psi_k1 = psi_k + 1.0 / (k + 1);   // psi(k+2)
    i1 += term;
    tail += (psi_k + psi_k1) * term;
    if (term < 1e-18 * i1) break;
    term *= q / ((k + 1.0) * (k + 2.0));
    psi_k = psi_k1;
  }
  i1 *= 0.5 * x;
  return 1.0 / x + log_half_x * i1 - 0.25 * x * tail;
}

// Steed's continued fraction for K0 and K1 (Temme's normalization), x > 2.
inline double bessel_k1_continued_fraction(double x) {
  constexpr double eps = 1e-16;
  constexpr double a1 = 0.25;   // 1/4 - nu^2, nu = 0
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 1; i < 10000; ++i) {
    a -= 2 * i;
    c = -a * c / (i + 1.0);
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < eps) break;
  }
  h *= a1;
  const double k0 = std::sqrt(std::numbers::pi / (2.0 * x)) * std::exp(-x) / s;
  return k0 * (x + 0.5 - h) / x;
}

// Large-argument expansion, truncated once terms drop below double precision.
// The smallest term is about e^{-2x}, so this is exact to rounding for x >= 25.
inline double bessel_k1_asymptotic(double x) {
  double sum = 1.0;
  double term = 1.0;
  for (int k = 1; k < 40; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= (4.0 - odd * odd) / (8.0 * k * x);
    sum += term;
    if (std::abs(term) < 1e-17 * sum) break;
  }
  return std::sqrt(std::numbers::pi / (2.0 * x)) * std::exp(-x) * sum;
}

}  // namespace detail

/// Modified Bessel function of the second kind, order one.
/// Throws std::domain_error for x <= 0 or NaN. Underflows to 0 past x ~ 705.
inline double bessel_k1(double x) {
  if (!(x > 0.0)) throw std::domain_error("bessel_k1: argument must be positive");
  if (std::isinf(x)) return 0.0;
  if (x <= 2.0) return detail::bessel_k1_series(x);
  if (x < 25.0) return detail::bessel_k1_continued_fraction(x);
  return detail::bessel_k1_asymptotic(x);
}

/// Matern (nu = 1) correlation u K1(u) with its limit 1 at u = 0.
inline double matern1_correlation(double u) {
  u = std::abs(u);
  if (u == 0.0) return 1.0;
  if (u > 745.0) return 0.0;
  return u * bessel_k1(u);
}

}  // namespace pcc

#endif  // PCC_BESSEL_HPP
