#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcrm/signed_log.hpp"

namespace hcrm {

class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

class FitNotAvailableError : public std::runtime_error {
 public:
  explicit FitNotAvailableError(const std::string& what) : std::runtime_error(what) {}
};

enum class LevyFamily { Gamma, GeneralizedGamma, SumGeneralizedGamma };

struct GgpTerm {
  double theta;     // per-component mass
  double discount;  // d_q in [0, 1)
};

// A Levy intensity family with its mass parameter. Gamma and GGP carry the
// mass theta in `mass`; SGGP keeps the theta_q inside the components and
// mass stays 1.
class LevySpec {
 public:
  static LevySpec gamma(double mass) {
    LevySpec s;
    s.family_ = LevyFamily::Gamma;
    s.mass_ = mass;
    s.validate();
    return s;
  }

  static LevySpec generalized_gamma(double discount, double mass) {
    LevySpec s;
    s.family_ = LevyFamily::GeneralizedGamma;
    s.discount_ = discount;
    s.mass_ = mass;
    s.validate();
    return s;
  }

  static LevySpec sum_generalized_gamma(std::vector<GgpTerm> terms, double mass = 1.0) {
    LevySpec s;
    s.family_ = LevyFamily::SumGeneralizedGamma;
    s.terms_ = std::move(terms);
    s.mass_ = mass;
    s.validate();
    return s;
  }

  LevyFamily family() const { return family_; }
  double mass() const { return mass_; }
  double discount() const { return discount_; }
  const std::vector<GgpTerm>& terms() const { return terms_; }

  LevySpec with_mass(double mass) const {
    LevySpec s = *this;
    s.mass_ = mass;
    s.validate();
    return s;
  }

  LevySpec with_term_theta(std::size_t q, double theta) const {
    LevySpec s = *this;
    s.terms_.at(q).theta = theta;
    s.validate();
    return s;
  }

  // A GGP with d = 0 is the gamma process; the closed-form gamma code paths
  // apply to it as well.
  bool is_gamma_like() const {
    return family_ == LevyFamily::Gamma ||
           (family_ == LevyFamily::GeneralizedGamma && discount_ == 0.0);
  }

 private:
  LevySpec() = default;

  void validate() const {
    if (!(mass_ > 0.0) || !std::isfinite(mass_))
      throw std::invalid_argument("LevySpec: mass must be positive and finite");
    if (family_ == LevyFamily::GeneralizedGamma) {
      if (!(discount_ >= 0.0 && discount_ < 1.0))
        throw std::invalid_argument("LevySpec: discount must lie in [0, 1)");
    }
    if (family_ == LevyFamily::SumGeneralizedGamma) {
      if (terms_.empty())
        throw std::invalid_argument("LevySpec: SGGP needs at least one component");
      for (const auto& t : terms_) {
        if (!(t.theta > 0.0)) throw std::invalid_argument("LevySpec: theta_q must be positive");
        if (!(t.discount >= 0.0 && t.discount < 1.0))
          throw std::invalid_argument("LevySpec: d_q must lie in [0, 1)");
      }
    }
  }

  LevyFamily family_ = LevyFamily::Gamma;
  double mass_ = 1.0;
  double discount_ = 0.0;
  std::vector<GgpTerm> terms_;
};

namespace detail {

// theta * ((1+t)^d - 1) / d, continuous at d = 0 where it is theta*ln(1+t).
inline double ggp_psi(double theta, double d, double t) {
  if (d == 0.0) return theta * std::log1p(t);
  return theta * std::expm1(d * std::log1p(t)) / d;
}

// log | d^k/dt^k of ggp_psi |. Valid for d = 0 (gamma) as well since
// lgamma(1) == 0 exactly, so the gamma and GGP(d=0) paths agree bitwise.
inline double ggp_psi_deriv_logmag(double theta, double d, int k, double t) {
  return std::log(theta) + std::lgamma(k - d) - std::lgamma(1.0 - d) -
         (k - d) * std::log1p(t);
}

}  // namespace detail

// Laplace exponent psi(t), mass included as a multiplicative factor.
inline double psi(const LevySpec& spec, double t) {
  if (t < 0.0) throw std::domain_error("psi: t must be nonnegative");
  switch (spec.family()) {
    case LevyFamily::Gamma:
      return detail::ggp_psi(spec.mass(), 0.0, t);
    case LevyFamily::GeneralizedGamma:
      return detail::ggp_psi(spec.mass(), spec.discount(), t);
    case LevyFamily::SumGeneralizedGamma: {
      double s = 0.0;
      for (const auto& q : spec.terms()) s += detail::ggp_psi(q.theta, q.discount, t);
      return spec.mass() * s;
    }
  }
  throw std::logic_error("psi: unknown family");
}

// k-th derivative of psi at t; sign is (-1)^(k-1).
inline SignedLogValue psi_deriv(const LevySpec& spec, int k, double t) {
  if (k < 1) throw std::domain_error("psi_deriv: k must be >= 1 (use psi for k = 0)");
  if (t < 0.0) throw std::domain_error("psi_deriv: t must be nonnegative");
  const int sign = (k % 2 == 1) ? +1 : -1;
  switch (spec.family()) {
    case LevyFamily::Gamma:
      return {sign, detail::ggp_psi_deriv_logmag(spec.mass(), 0.0, k, t)};
    case LevyFamily::GeneralizedGamma:
      return {sign, detail::ggp_psi_deriv_logmag(spec.mass(), spec.discount(), k, t)};
    case LevyFamily::SumGeneralizedGamma: {
      std::vector<double> logs;
      logs.reserve(spec.terms().size());
      for (const auto& q : spec.terms())
        logs.push_back(detail::ggp_psi_deriv_logmag(spec.mass() * q.theta, q.discount, k, t));
      return {sign, log_sum_exp(logs)};
    }
  }
  throw std::logic_error("psi_deriv: unknown family");
}

// Laplace transform of the base-measure total mass: h(u) = exp(-psi(base, u)).
inline double h_eval(const LevySpec& base, double u) {
  if (u < 0.0) throw std::domain_error("h_eval: u must be nonnegative");
  return std::exp(-psi(base, u));
}

// Fitted positive exponential mixture sum_r w_r exp(-lambda_r u) ~= h(u).
// Its derivatives are closed-form and sign-stable, which is what the sampler
// needs from h^(k) for non-gamma bases.
class ExpMixture {
 public:
  ExpMixture(std::vector<double> weights, std::vector<double> rates, double max_rel_residual)
      : weights_(std::move(weights)), rates_(std::move(rates)),
        max_rel_residual_(max_rel_residual) {
    if (weights_.size() != rates_.size() || weights_.empty())
      throw std::invalid_argument("ExpMixture: mismatched term lists");
    log_w_.reserve(weights_.size());
    for (std::size_t r = 0; r < weights_.size(); ++r) {
      if (!(weights_[r] >= 0.0)) throw std::invalid_argument("ExpMixture: negative weight");
      if (!(rates_[r] > 0.0)) throw std::invalid_argument("ExpMixture: nonpositive rate");
      log_w_.push_back(weights_[r] > 0.0 ? std::log(weights_[r]) : neg_inf);
      log_rate_.push_back(std::log(rates_[r]));
    }
  }

  double eval(double u) const {
    double s = 0.0;
    for (std::size_t r = 0; r < weights_.size(); ++r)
      s += weights_[r] * std::exp(-rates_[r] * u);
    return s;
  }

  // k-th derivative: sum_r w_r (-lambda_r)^k exp(-lambda_r u); sign (-1)^k.
  SignedLogValue deriv(int k, double u) const {
    std::vector<double> logs;
    logs.reserve(weights_.size());
    for (std::size_t r = 0; r < weights_.size(); ++r) {
      if (weights_[r] == 0.0) continue;
      logs.push_back(log_w_[r] + k * log_rate_[r] - rates_[r] * u);
    }
    const int sign = (k % 2 == 0) ? +1 : -1;
    return {sign, log_sum_exp(logs)};
  }

  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& rates() const { return rates_; }
  double max_rel_residual() const { return max_rel_residual_; }

 private:
  std::vector<double> weights_, rates_;
  std::vector<double> log_w_, log_rate_;
  double max_rel_residual_ = 0.0;
};

// k-th derivative of h at u; sign is (-1)^k. Closed form for gamma-like
// bases; other families go through a fitted ExpMixture.
inline SignedLogValue h_deriv(const LevySpec& base, int k, double u,
                              const ExpMixture* mix = nullptr) {
  if (k < 0) throw std::domain_error("h_deriv: k must be nonnegative");
  if (u < 0.0) throw std::domain_error("h_deriv: u must be nonnegative");
  if (base.is_gamma_like()) {
    const double theta = base.mass();
    const int sign = (k % 2 == 0) ? +1 : -1;
    return {sign, std::lgamma(k + theta) - std::lgamma(theta) - (k + theta) * std::log1p(u)};
  }
  if (mix == nullptr)
    throw FitNotAvailableError("h_deriv: non-gamma base requires fit_exp_mixture first");
  return mix->deriv(k, u);
}

namespace detail {

// Lawson-Hanson nonnegative least squares, small problems only.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const Eigen::Index n = A.cols();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(n, false);
  Eigen::VectorXd w = A.transpose() * (b - A * x);
  const double tol = 1e-12 * A.cwiseAbs().maxCoeff() * b.cwiseAbs().maxCoeff();
  for (int outer = 0; outer < 20 * static_cast<int>(n); ++outer) {
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[j] && w[j] > best_w) { best_w = w[j]; best = j; }
    if (best < 0) break;
    passive[best] = true;
    for (int inner = 0; inner < 20 * static_cast<int>(n); ++inner) {
      std::vector<Eigen::Index> idx;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j]) idx.push_back(j);
      Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t c = 0; c < idx.size(); ++c) Ap.col(static_cast<Eigen::Index>(c)) = A.col(idx[c]);
      Eigen::VectorXd z = Ap.colPivHouseholderQr().solve(b);
      bool feasible = true;
      for (Eigen::Index c = 0; c < z.size(); ++c)
        if (z[c] <= 0.0) { feasible = false; break; }
      if (feasible) {
        x.setZero();
        for (std::size_t c = 0; c < idx.size(); ++c) x[idx[c]] = z[static_cast<Eigen::Index>(c)];
        break;
      }
      double alpha = 1.0;
      for (std::size_t c = 0; c < idx.size(); ++c) {
        const double zc = z[static_cast<Eigen::Index>(c)];
        const double xc = x[idx[c]];
        if (zc <= 0.0 && xc != zc) alpha = std::min(alpha, xc / (xc - zc));
      }
      for (std::size_t c = 0; c < idx.size(); ++c) {
        const double zc = z[static_cast<Eigen::Index>(c)];
        x[idx[c]] += alpha * (zc - x[idx[c]]);
        if (x[idx[c]] <= 1e-15) { x[idx[c]] = 0.0; passive[idx[c]] = false; }
      }
    }
    w = A.transpose() * (b - A * x);
  }
  return x;
}

}  // namespace detail

// Nonnegative least-squares fit of a positive exponential mixture to h_eval
// on the grid, minimizing relative error. Rates start log-spaced and are
// refined by a small Levenberg-Marquardt pass on their logs; weights come
// from a final NNLS solve and are renormalized so the mixture is exactly 1
// at u = 0.
inline ExpMixture fit_exp_mixture(const LevySpec& base, int num_terms,
                                  const std::vector<double>& u_grid,
                                  double tolerance = 1e-6,
                                  const std::vector<double>* warm_rates = nullptr) {
  if (num_terms < 1) throw std::invalid_argument("fit_exp_mixture: num_terms must be >= 1");
  if (u_grid.size() < 2)
    throw std::invalid_argument("fit_exp_mixture: degenerate grid (need >= 2 points)");
  for (std::size_t i = 0; i < u_grid.size(); ++i) {
    if (u_grid[i] < 0.0) throw std::invalid_argument("fit_exp_mixture: negative grid point");
    if (i > 0 && u_grid[i] < u_grid[i - 1])
      throw std::invalid_argument("fit_exp_mixture: grid must be sorted");
  }
  const double u_max = u_grid.back();
  if (u_max <= u_grid.front())
    throw std::invalid_argument("fit_exp_mixture: degenerate grid (single point)");

  const Eigen::Index m = static_cast<Eigen::Index>(u_grid.size());
  Eigen::VectorXd u(m), hv(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    u[i] = u_grid[static_cast<std::size_t>(i)];
    hv[i] = h_eval(base, u[i]);
  }

  // Design matrix scaled by 1/h so the least squares targets relative error.
  auto design = [&](const Eigen::VectorXd& log_rates) {
    Eigen::MatrixXd A(m, log_rates.size());
    for (Eigen::Index j = 0; j < log_rates.size(); ++j) {
      const double lam = std::exp(log_rates[j]);
      for (Eigen::Index i = 0; i < m; ++i) A(i, j) = std::exp(-lam * u[i]) / hv[i];
    }
    return A;
  };
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);

  auto residual_ls = [&](const Eigen::VectorXd& log_rates) {
    Eigen::MatrixXd A = design(log_rates);
    Eigen::VectorXd w = A.colPivHouseholderQr().solve(ones);
    return Eigen::VectorXd(A * w - ones);
  };
  // NNLS-projected variant: slower, but immune to the drift where the
  // unconstrained optimum needs negative weights the final nonnegative
  // solve cannot realize. Used only to polish near-miss fits.
  auto residual_nnls = [&](const Eigen::VectorXd& log_rates) {
    Eigen::MatrixXd A = design(log_rates);
    Eigen::VectorXd w = detail::nnls(A, ones);
    return Eigen::VectorXd(A * w - ones);
  };

  // LM on log-rates with the weights projected out at each step.
  auto refine = [&](Eigen::VectorXd x, const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
                    int max_iters) {
    Eigen::VectorXd r = residual(x);
    double cost = r.squaredNorm();
    double mu = 1e-3;
    const Eigen::Index p = x.size();
    for (int it = 0; it < max_iters; ++it) {
      Eigen::MatrixXd J(m, p);
      for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::VectorXd xp = x;
        const double dh = 1e-6;
        xp[j] += dh;
        J.col(j) = (residual(xp) - r) / dh;
      }
      bool improved = false;
      for (int trial = 0; trial < 15; ++trial) {
        Eigen::MatrixXd H = J.transpose() * J;
        H.diagonal().array() += mu;
        Eigen::VectorXd dx = H.ldlt().solve(-J.transpose() * r);
        Eigen::VectorXd xn = x + dx;
        Eigen::VectorXd rn = residual(xn);
        const double cn = rn.squaredNorm();
        if (cn < cost) {
          x = xn;
          r = rn;
          cost = cn;
          mu = std::max(mu * 0.3, 1e-12);
          improved = true;
          if (dx.norm() < 1e-12) return x;
          break;
        }
        mu *= 3.0;
      }
      if (!improved) break;
    }
    return x;
  };

  struct Candidate {
    double residual = std::numeric_limits<double>::infinity();
    std::vector<double> weights, rates;
  } best;

  std::vector<Eigen::VectorXd> inits;
  const double scale = std::log10(20.0 / u_max);
  const std::pair<double, double> starts[] = {{-1.5, 0.8}, {-2.0, 1.0}, {-1.0, 0.5}, {-2.5, 1.5}};
  for (const auto& [lo, hi] : starts) {
    Eigen::VectorXd x(num_terms);
    for (int j = 0; j < num_terms; ++j) {
      const double f = num_terms == 1 ? 0.5 : static_cast<double>(j) / (num_terms - 1);
      x[j] = (lo + f * (hi - lo) + scale) * std::log(10.0);
    }
    inits.push_back(x);
  }
  if (warm_rates && !warm_rates->empty()) {
    // warm start from a previous fit's rates, padded by splitting the
    // widest log gaps until the term count matches
    std::vector<double> lr;
    for (double r : *warm_rates)
      if (r > 0.0) lr.push_back(std::log(r));
    std::sort(lr.begin(), lr.end());
    if (!lr.empty()) {
      while (static_cast<int>(lr.size()) > num_terms) lr.pop_back();
      while (static_cast<int>(lr.size()) < num_terms) {
        if (lr.size() == 1) {
          lr.push_back(lr.back() + std::log(10.0));
        } else {
          std::size_t widest = 1;
          for (std::size_t j = 2; j < lr.size(); ++j)
            if (lr[j] - lr[j - 1] > lr[widest] - lr[widest - 1]) widest = j;
          lr.insert(lr.begin() + static_cast<std::ptrdiff_t>(widest),
                    0.5 * (lr[widest - 1] + lr[widest]));
        }
      }
      Eigen::VectorXd x(num_terms);
      for (int j = 0; j < num_terms; ++j) x[j] = lr[static_cast<std::size_t>(j)];
      inits.insert(inits.begin(), x);
    }
  }
  auto consider = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd A = design(x);
    Eigen::VectorXd w = detail::nnls(A, ones);
    const double total = w.sum();
    if (!(total > 0.0)) return;
    w /= total;
    double max_rel = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      double fit = 0.0;
      for (Eigen::Index j = 0; j < w.size(); ++j) fit += w[j] * std::exp(-std::exp(x[j]) * u[i]);
      max_rel = std::max(max_rel, std::abs(fit - hv[i]) / hv[i]);
    }
    if (max_rel < best.residual) {
      best.residual = max_rel;
      best.weights.assign(w.data(), w.data() + w.size());
      best.rates.clear();
      for (Eigen::Index j = 0; j < x.size(); ++j) best.rates.push_back(std::exp(x[j]));
    }
  };

  for (const Eigen::VectorXd& x0 : inits) consider(refine(x0, residual_ls, 120));

  if (best.residual > tolerance && !best.rates.empty()) {
    // near miss: polish the best candidate against the nonnegative solve
    Eigen::VectorXd x(static_cast<Eigen::Index>(best.rates.size()));
    for (Eigen::Index j = 0; j < x.size(); ++j)
      x[j] = std::log(best.rates[static_cast<std::size_t>(j)]);
    consider(refine(x, residual_nnls, 40));
  }

  if (best.residual > tolerance)
    throw FitError("fit_exp_mixture: residual " + std::to_string(best.residual) +
                   " exceeds tolerance " + std::to_string(tolerance) +
                   " with " + std::to_string(num_terms) + " terms");
  return ExpMixture(best.weights, best.rates, best.residual);
}

// {0} followed by log-spaced points up to u_max; the usual fit grid.
inline std::vector<double> log_grid(double u_max, int n, double u_min = 1e-3) {
  if (n < 2 || u_max <= u_min) throw std::invalid_argument("log_grid: bad arguments");
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(n));
  g.push_back(0.0);
  const double llo = std::log(u_min), lhi = std::log(u_max);
  for (int i = 0; i < n - 1; ++i)
    g.push_back(n == 2 ? u_max : std::exp(llo + (lhi - llo) * i / static_cast<double>(n - 2)));
  return g;
}

}  // namespace hcrm
