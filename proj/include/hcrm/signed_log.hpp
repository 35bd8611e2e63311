#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace hcrm {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// Sign plus log-magnitude representation. Derivative chains such as
// psi^(k)(t) alternate in sign and their magnitudes involve Gamma(k - d),
// which overflows a double near k ~ 170, so all pmf arithmetic stays in
// this form.
struct SignedLogValue {
  int sign = 0;
  double log_mag = neg_inf;

  SignedLogValue() = default;
  SignedLogValue(int s, double lm) : sign(s), log_mag(lm) {
    if (sign == 0 || log_mag == neg_inf) {
      sign = 0;
      log_mag = neg_inf;
    }
  }

  static SignedLogValue zero() { return {}; }

  static SignedLogValue from_value(double v) {
    if (v == 0.0) return {};
    return {v > 0.0 ? +1 : -1, std::log(std::abs(v))};
  }

  double value() const { return sign == 0 ? 0.0 : sign * std::exp(log_mag); }
  bool is_zero() const { return sign == 0; }

  SignedLogValue operator-() const { return {-sign, log_mag}; }

  friend SignedLogValue operator*(const SignedLogValue& a, const SignedLogValue& b) {
    if (a.sign == 0 || b.sign == 0) return {};
    return {a.sign * b.sign, a.log_mag + b.log_mag};
  }

  friend SignedLogValue operator/(const SignedLogValue& a, const SignedLogValue& b) {
    if (b.sign == 0) throw std::domain_error("SignedLogValue: division by zero");
    if (a.sign == 0) return {};
    return {a.sign * b.sign, a.log_mag - b.log_mag};
  }
};

inline double log_sum_exp(const std::vector<double>& logs) {
  double m = neg_inf;
  for (double x : logs) m = std::max(m, x);
  if (m == neg_inf) return neg_inf;
  double s = 0.0;
  for (double x : logs) s += std::exp(x - m);
  return m + std::log(s);
}

// Signed log-sum-exp over possibly mixed-sign terms.
inline SignedLogValue signed_log_sum(const std::vector<SignedLogValue>& terms) {
  double m = neg_inf;
  for (const auto& t : terms)
    if (t.sign != 0) m = std::max(m, t.log_mag);
  if (m == neg_inf) return {};
  double s = 0.0;
  for (const auto& t : terms)
    if (t.sign != 0) s += t.sign * std::exp(t.log_mag - m);
  if (s == 0.0) return {};
  return {s > 0.0 ? +1 : -1, m + std::log(std::abs(s))};
}

}  // namespace hcrm
