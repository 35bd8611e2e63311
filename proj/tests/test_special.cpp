#include <doctest.h>

#include <cmath>

#include "hcrm/special.hpp"

using namespace hcrm;

// Reference values computed with 25-digit arbitrary-precision arithmetic.
TEST_CASE("regularized incomplete gamma matches reference values") {
  CHECK(gamma_p(0.7, 0.3) == doctest::Approx(0.4204173688752938661).epsilon(1e-13));
  CHECK(gamma_p(2.5, 3.0) == doctest::Approx(0.6937810815867215991).epsilon(1e-13));
  CHECK(gamma_q(1.0, 2.0) == doctest::Approx(0.1353352832366126919).epsilon(1e-13));
  CHECK(gamma_p(1.0, 0.0) == 0.0);
  CHECK(gamma_p(3.0, 1e8) == doctest::Approx(1.0));
  CHECK_THROWS_AS(gamma_p(-1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(gamma_p(1.0, -1.0), std::domain_error);
}

TEST_CASE("exponential integral E1 matches reference values") {
  CHECK(expint_e1(0.5) == doctest::Approx(0.5597735947761608117).epsilon(1e-13));
  CHECK(expint_e1(3.0) == doctest::Approx(0.0130483810941970374).epsilon(1e-13));
  CHECK_THROWS_AS(expint_e1(0.0), std::domain_error);
}

TEST_CASE("upper incomplete gamma at negative order matches reference values") {
  CHECK(upper_gamma_neg(0.3, 0.8) == doctest::Approx(0.2873990887296264041).epsilon(1e-12));
  CHECK(upper_gamma_neg(0.7, 0.05) == doctest::Approx(8.7067009465674501483).epsilon(1e-12));
  CHECK(upper_gamma_neg(0.5, 2.0) == doctest::Approx(0.0300987571001864663).epsilon(1e-12));
  // d = 0 reduces to E1
  CHECK(upper_gamma_neg(0.0, 1.3) == doctest::Approx(expint_e1(1.3)).epsilon(1e-14));
  CHECK_THROWS_AS(upper_gamma_neg(1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(upper_gamma_neg(0.3, 0.0), std::domain_error);
}

TEST_CASE("chi-square p-values behave sensibly") {
  CHECK(chi_square_pvalue(0.0, 5.0) == 1.0);
  // chi2 with 2 df is Exp(1/2): P(X > x) = e^{-x/2}
  CHECK(chi_square_pvalue(3.0, 2.0) == doctest::Approx(std::exp(-1.5)).epsilon(1e-12));
  CHECK(chi_square_pvalue(100.0, 3.0) < 1e-10);
}
