#pragma once

#include <cmath>
#include <stdexcept>

namespace hcrm {

// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
// Series for x < a + 1, Lentz continued fraction otherwise.
inline double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::domain_error("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  // continued fraction for Q, then P = 1 - Q
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - lg) * h;
}

inline double gamma_q(double a, double x) { return 1.0 - gamma_p(a, x); }

// Exponential integral E1(x) = Gamma(0, x), x > 0.
inline double expint_e1(double x) {
  if (!(x > 0.0)) throw std::domain_error("expint_e1: x must be positive");
  constexpr double euler = 0.57721566490153286060651209;
  if (x <= 1.0) {
    double sum = 0.0, term = 1.0;
    for (int k = 1; k <= 60; ++k) {
      term *= -x / k;
      sum += term / k;
      if (std::abs(term / k) < 1e-18) break;
    }
    return -euler - std::log(x) - sum;
  }
  double b = x + 1.0, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * i;
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x);
}

// Gamma(-d, z) for d in [0, 1), z > 0, via one downward recurrence step.
inline double upper_gamma_neg(double d, double z) {
  if (!(z > 0.0) || d < 0.0 || d >= 1.0) throw std::domain_error("upper_gamma_neg: bad arguments");
  if (d == 0.0) return expint_e1(z);
  const double upper_1md = std::tgamma(1.0 - d) * gamma_q(1.0 - d, z);
  return (std::pow(z, -d) * std::exp(-z) - upper_1md) / d;
}

// Chi-square upper tail probability with df degrees of freedom.
inline double chi_square_pvalue(double statistic, double df) {
  if (statistic <= 0.0) return 1.0;
  return gamma_q(df / 2.0, statistic / 2.0);
}

}  // namespace hcrm
