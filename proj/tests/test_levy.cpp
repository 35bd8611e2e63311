#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "hcrm/levy.hpp"

using namespace hcrm;

namespace {

// Independent oracle: integrate f(z) against the GGP Levy density
// theta e^-z z^(-d-1) / Gamma(1-d) by Simpson's rule after the substitution
// z = e^x, which removes the endpoint singularity.
double levy_integral(double theta, double d, const std::function<double(double)>& f,
                     double power_offset) {
  // lo must be deep enough that the e^{(1-d)x} tail of psi's integrand is
  // negligible even for d near 1
  const double lo = -200.0, hi = 6.0;
  const int n = 80000;  // even
  const double h = (hi - lo) / n;
  auto g = [&](double x) {
    const double z = std::exp(x);
    // z^(-d-1) * z (jacobian) * z^power_offset = e^{x(power_offset - d)}
    return f(z) * std::exp(x * (power_offset - d) - z);
  };
  double s = g(lo) + g(hi);
  for (int i = 1; i < n; ++i) s += g(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return theta * s * h / 3.0 / std::tgamma(1.0 - d);
}

double quad_psi(double theta, double d, double t) {
  return levy_integral(theta, d, [&](double z) { return -std::expm1(-t * z); }, 0.0);
}

// |psi^(k)(t)| = integral of z^k e^{-t z} against the Levy density
double quad_psi_deriv_mag(double theta, double d, int k, double t) {
  return levy_integral(theta, d, [&](double z) { return std::exp(-t * z); },
                       static_cast<double>(k));
}

double fd3(const std::function<double(double)>& f, double t, int k, double h) {
  auto stencil = [&](double s) {
    switch (k) {
      case 1: return (f(t + s) - f(t - s)) / (2.0 * s);
      case 2: return (f(t + s) - 2.0 * f(t) + f(t - s)) / (s * s);
      default:
        return (f(t + 2 * s) - 2.0 * f(t + s) + 2.0 * f(t - s) - f(t - 2 * s)) /
               (2.0 * s * s * s);
    }
  };
  // one Richardson extrapolation level: O(h^2) -> O(h^4)
  return (4.0 * stencil(h / 2.0) - stencil(h)) / 3.0;
}

}  // namespace

TEST_CASE("Laplace exponents match their closed forms") {
  CHECK(psi(LevySpec::gamma(2.0), 1.0) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));
  CHECK(psi(LevySpec::generalized_gamma(0.5, 3.0), 1.0) ==
        doctest::Approx(3.0 * (std::sqrt(2.0) - 1.0) / 0.5).epsilon(1e-14));
  const LevySpec sggp = LevySpec::sum_generalized_gamma({{1.5, 0.2}, {0.5, 0.0}});
  CHECK(psi(sggp, 2.0) ==
        doctest::Approx(1.5 * (std::pow(3.0, 0.2) - 1.0) / 0.2 + 0.5 * std::log(3.0))
            .epsilon(1e-14));
  CHECK(psi(LevySpec::gamma(1.0), 0.0) == 0.0);
  CHECK_THROWS_AS(psi(LevySpec::gamma(1.0), -0.5), std::domain_error);
}

TEST_CASE("Laplace exponent agrees with direct quadrature of the Levy density") {
  for (double d : {0.0, 0.3, 0.7})
    for (double t : {0.5, 1.0, 4.0}) {
      const LevySpec spec = d == 0.0 ? LevySpec::gamma(1.4)
                                     : LevySpec::generalized_gamma(d, 1.4);
      CHECK(psi(spec, t) == doctest::Approx(quad_psi(1.4, d, t)).epsilon(1e-8));
    }
}

TEST_CASE("psi derivatives agree with quadrature and alternate in sign") {
  for (double d : {0.0, 0.3})
    for (int k = 1; k <= 5; ++k)
      for (double t : {0.5, 2.0}) {
        const LevySpec spec = d == 0.0 ? LevySpec::gamma(0.8)
                                       : LevySpec::generalized_gamma(d, 0.8);
        const SignedLogValue v = psi_deriv(spec, k, t);
        CHECK(v.sign == (k % 2 ? +1 : -1));
        CHECK(std::exp(v.log_mag) ==
              doctest::Approx(quad_psi_deriv_mag(0.8, d, k, t)).epsilon(1e-8));
      }
}

TEST_CASE("SGGP derivative is the sum of its components") {
  const LevySpec sggp = LevySpec::sum_generalized_gamma({{1.0, 0.1}, {2.0, 0.6}});
  const LevySpec a = LevySpec::generalized_gamma(0.1, 1.0);
  const LevySpec b = LevySpec::generalized_gamma(0.6, 2.0);
  for (int k = 1; k <= 6; ++k) {
    const double expect =
        std::exp(psi_deriv(a, k, 1.5).log_mag) + std::exp(psi_deriv(b, k, 1.5).log_mag);
    CHECK(std::exp(psi_deriv(sggp, k, 1.5).log_mag) == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("Bernstein sign pattern holds far past double-overflow factorials") {
  const LevySpec spec = LevySpec::generalized_gamma(0.4, 1.0);
  for (int k = 1; k <= 400; ++k) {
    const SignedLogValue v = psi_deriv(spec, k, 1.0);
    CHECK(v.sign == (k % 2 ? +1 : -1));
    CHECK(std::isfinite(v.log_mag));
  }
}

TEST_CASE("gamma-base h derivatives match finite differences of h_eval") {
  const LevySpec base = LevySpec::gamma(1.7);
  auto h = [&](double u) { return h_eval(base, u); };
  for (int k = 1; k <= 3; ++k)
    for (double u : {0.3, 1.0}) {
      const SignedLogValue v = h_deriv(base, k, u);
      CHECK(v.sign == (k % 2 ? -1 : +1));
      const double fd = fd3(h, u, k, 0.01);
      CHECK(v.value() == doctest::Approx(fd).epsilon(1e-5));
    }
  CHECK(h_deriv(base, 0, 0.5).value() == doctest::Approx(h(0.5)).epsilon(1e-14));
}

TEST_CASE("non-gamma h derivatives require a fitted mixture") {
  const LevySpec base = LevySpec::generalized_gamma(0.3, 1.0);
  CHECK_THROWS_AS(h_deriv(base, 2, 0.5), FitNotAvailableError);
}

TEST_CASE("exponential mixture fit reproduces h for a GGP base") {
  const LevySpec base = LevySpec::generalized_gamma(0.3, 1.0);
  const ExpMixture mix = fit_exp_mixture(base, 10, log_grid(20.0, 200), 1e-6);
  CHECK(mix.max_rel_residual() <= 1e-6);
  CHECK(mix.eval(0.0) == doctest::Approx(1.0).epsilon(1e-14));
  // off-grid points
  for (double u : {0.00137, 0.071, 0.93, 4.7, 17.3})
    CHECK(mix.eval(u) == doctest::Approx(h_eval(base, u)).epsilon(1e-5));
  // mixture derivatives vs finite differences of the mixture itself
  auto f = [&](double u) { return mix.eval(u); };
  for (int k = 1; k <= 3; ++k) {
    const SignedLogValue v = mix.deriv(k, 0.8);
    CHECK(v.sign == (k % 2 ? -1 : +1));
    CHECK(v.value() == doctest::Approx(fd3(f, 0.8, k, 0.005)).epsilon(1e-5));
  }
}

TEST_CASE("mixture fitting validates its inputs and reports unreachable tolerances") {
  const LevySpec base = LevySpec::generalized_gamma(0.3, 1.0);
  CHECK_THROWS_AS(fit_exp_mixture(base, 0, log_grid(20.0, 50)), std::invalid_argument);
  CHECK_THROWS_AS(fit_exp_mixture(base, 5, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(fit_exp_mixture(base, 5, {2.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(fit_exp_mixture(base, 5, {-1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(fit_exp_mixture(base, 2, log_grid(20.0, 100), 1e-15), FitError);
}

TEST_CASE("spec validation rejects out-of-range parameters") {
  CHECK_THROWS_AS(LevySpec::gamma(0.0), std::invalid_argument);
  CHECK_THROWS_AS(LevySpec::gamma(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(LevySpec::generalized_gamma(1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(LevySpec::generalized_gamma(-0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(LevySpec::sum_generalized_gamma({}), std::invalid_argument);
  CHECK_THROWS_AS(LevySpec::sum_generalized_gamma({{0.0, 0.2}}), std::invalid_argument);
  CHECK(LevySpec::gamma(1.0).is_gamma_like());
  CHECK(LevySpec::generalized_gamma(0.0, 1.0).is_gamma_like());
  CHECK_FALSE(LevySpec::generalized_gamma(0.2, 1.0).is_gamma_like());
  const LevySpec s = LevySpec::sum_generalized_gamma({{1.0, 0.1}, {2.0, 0.2}});
  CHECK(s.with_term_theta(1, 5.0).terms()[1].theta == 5.0);
  CHECK_THROWS(s.with_term_theta(1, -1.0));
}

TEST_CASE("a GGP with zero discount is bit-identical to the gamma process") {
  const LevySpec g = LevySpec::gamma(1.5);
  const LevySpec z = LevySpec::generalized_gamma(0.0, 1.5);
  for (double t : {0.1, 1.0, 7.5}) CHECK(psi(g, t) == psi(z, t));
  for (int k = 1; k <= 10; ++k) {
    CHECK(psi_deriv(g, k, 1.3).log_mag == psi_deriv(z, k, 1.3).log_mag);
    CHECK(h_deriv(g, k, 0.9).log_mag == h_deriv(z, k, 0.9).log_mag);
  }
}

TEST_CASE("log_grid starts at zero and spans to u_max") {
  const std::vector<double> g = log_grid(10.0, 50);
  CHECK(g.size() == 50);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == doctest::Approx(10.0));
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
  CHECK_THROWS_AS(log_grid(10.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(log_grid(1e-5, 10), std::invalid_argument);
}
