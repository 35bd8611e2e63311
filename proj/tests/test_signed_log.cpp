#include <doctest.h>

#include <cmath>
#include <vector>

#include "hcrm/signed_log.hpp"

using namespace hcrm;

TEST_CASE("signed log values round-trip through from_value/value") {
  for (double v : {3.5, -0.25, 1e-200, -1e200, 0.0}) {
    const SignedLogValue s = SignedLogValue::from_value(v);
    // exp(log(x)) amplifies the half-ulp log rounding by a factor |log x|
    CHECK(s.value() == doctest::Approx(v).epsilon(1e-12));
  }
  CHECK(SignedLogValue::from_value(0.0).sign == 0);
  CHECK(SignedLogValue::from_value(-2.0).sign == -1);
}

TEST_CASE("multiplication and division track signs and magnitudes") {
  const SignedLogValue a = SignedLogValue::from_value(-3.0);
  const SignedLogValue b = SignedLogValue::from_value(0.5);
  CHECK((a * b).value() == doctest::Approx(-1.5));
  CHECK((a / b).value() == doctest::Approx(-6.0));
  CHECK((-a).value() == doctest::Approx(3.0));
  const SignedLogValue zero = SignedLogValue::from_value(0.0);
  CHECK((a * zero).sign == 0);
}

TEST_CASE("log_sum_exp handles empty lists, spread magnitudes, and -inf") {
  CHECK(log_sum_exp({}) == neg_inf);
  CHECK(log_sum_exp({neg_inf, neg_inf}) == neg_inf);
  CHECK(log_sum_exp({0.0, 0.0}) == doctest::Approx(std::log(2.0)));
  // one term dominates by far more than double precision
  CHECK(log_sum_exp({1000.0, -1000.0}) == doctest::Approx(1000.0));
}

TEST_CASE("signed_log_sum cancels opposite terms") {
  std::vector<SignedLogValue> terms = {SignedLogValue::from_value(5.0),
                                       SignedLogValue::from_value(-3.0),
                                       SignedLogValue::from_value(-2.0)};
  const SignedLogValue s = signed_log_sum(terms);
  CHECK(std::abs(s.value()) < 1e-12);

  terms.push_back(SignedLogValue::from_value(-1.0));
  CHECK(signed_log_sum(terms).value() == doctest::Approx(-1.0));
}
