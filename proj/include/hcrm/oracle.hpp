#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcrm/levy.hpp"
#include "hcrm/rng.hpp"
#include "hcrm/special.hpp"

namespace hcrm {

class BudgetExhaustedError : public std::runtime_error {
 public:
  BudgetExhaustedError(const std::string& what, double acceptance_rate)
      : std::runtime_error(what), acceptance_rate(acceptance_rate) {}
  double acceptance_rate;
};

// Atoms of a truncated CRM draw, weights descending.
struct WeightedAtoms {
  std::vector<double> weights;
  double epsilon = 0.0;             // configured missing-mass budget
  double missing_mass_bound = 0.0;  // theta * int_0^{z_eps} z rho(dz)
};

namespace detail {

struct GgpComponentView {
  double theta;  // full mass of this component (spec mass folded in)
  double d;
};

inline std::vector<GgpComponentView> components(const LevySpec& spec) {
  switch (spec.family()) {
    case LevyFamily::Gamma:
      return {{spec.mass(), 0.0}};
    case LevyFamily::GeneralizedGamma:
      return {{spec.mass(), spec.discount()}};
    case LevyFamily::SumGeneralizedGamma: {
      std::vector<GgpComponentView> out;
      for (const auto& q : spec.terms()) out.push_back({spec.mass() * q.theta, q.discount});
      return out;
    }
  }
  throw std::logic_error("components: unknown family");
}

// theta * int_0^z s rho(ds) = theta * P(1-d, z) for rho = e^-s s^(-d-1)/Gamma(1-d).
inline double truncated_first_moment(const GgpComponentView& c, double z) {
  return c.theta * gamma_p(1.0 - c.d, z);
}

// theta * rho([z, inf)) = theta * Gamma(-d, z) / Gamma(1-d).
inline double tail_mass(const GgpComponentView& c, double z) {
  return c.theta * upper_gamma_neg(c.d, z) / std::tgamma(1.0 - c.d);
}

// Largest z with theta * int_0^z s rho(ds) <= eps, by bisection.
inline double find_truncation_point(const GgpComponentView& c, double eps) {
  if (truncated_first_moment(c, 1e-300) > eps)
    throw std::runtime_error("find_truncation_point: epsilon too small to resolve");
  double lo = 1e-300, hi = 1.0;
  while (truncated_first_moment(c, hi) <= eps && hi < 1e30) hi *= 2.0;
  if (hi >= 1e30) return hi;  // epsilon so large everything is truncated away
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (truncated_first_moment(c, mid) <= eps)
      lo = mid;
    else
      hi = mid;
    if (hi / lo < 1.0 + 1e-12) break;
  }
  return lo;
}

// One atom weight from the tail-restricted density e^-z z^(-d-1) on
// [z_eps, inf). For z_eps >= 1 a shifted-exponential proposal is fine; below
// 1 the density piles up at z_eps, so the envelope is split into a pure
// power-law piece on [z_eps, 1] (exact inverse CDF) and e^-z above 1.
inline double sample_tail_weight(const GgpComponentView& c, double z_eps, Rng& rng) {
  if (z_eps >= 1.0) {
    for (;;) {
      const double z = z_eps - std::log1p(-rng.uniform01());
      if (std::log(rng.uniform01()) <= (c.d + 1.0) * std::log(z_eps / z)) return z;
    }
  }
  const double m1 = c.d == 0.0 ? -std::log(z_eps)
                               : std::expm1(-c.d * std::log(z_eps)) / c.d;
  const double m2 = std::exp(-1.0);
  for (;;) {
    if (rng.uniform01() * (m1 + m2) < m1) {
      // z^(-d-1) on [z_eps, 1], accept with e^-z
      const double u = rng.uniform01();
      const double z = c.d == 0.0
                           ? std::exp((1.0 - u) * std::log(z_eps))
                           : std::pow(1.0 + u * std::expm1(-c.d * std::log(z_eps)), -1.0 / c.d);
      if (std::log(rng.uniform01()) <= -z) return z;
    } else {
      // e^-z on [1, inf), accept with z^(-d-1)
      const double z = 1.0 - std::log1p(-rng.uniform01());
      if (std::log(rng.uniform01()) <= -(c.d + 1.0) * std::log(z)) return z;
    }
  }
}

}  // namespace detail

// Draws the Poisson process of CRM weights, truncated so the expected
// missing total mass is at most eps.
inline WeightedAtoms sample_crm_weights(const LevySpec& spec, double eps, Rng& rng) {
  if (!(eps > 0.0)) throw std::invalid_argument("sample_crm_weights: eps must be positive");
  WeightedAtoms out;
  out.epsilon = eps;
  const auto comps = detail::components(spec);
  const double eps_each = eps / static_cast<double>(comps.size());
  for (const auto& c : comps) {
    const double z_eps = detail::find_truncation_point(c, eps_each);
    out.missing_mass_bound += detail::truncated_first_moment(c, std::min(z_eps, 1e290));
    const double rate = z_eps >= 1e30 ? 0.0 : detail::tail_mass(c, z_eps);
    const std::int64_t count = rng.poisson(rate);
    for (std::int64_t a = 0; a < count; ++a)
      out.weights.push_back(detail::sample_tail_weight(c, z_eps, rng));
  }
  std::sort(out.weights.begin(), out.weights.end(), std::greater<>());
  return out;
}

// Count matrix of n Poisson processes drawn from one (truncated) CRM:
// entry (i, j) is process i's count at atom j. Columns may be all zero.
inline std::vector<std::vector<std::int64_t>> sample_crm_poisson_counts(const LevySpec& spec,
                                                                        std::size_t n,
                                                                        double eps, Rng& rng) {
  const WeightedAtoms atoms = sample_crm_weights(spec, eps, rng);
  std::vector<std::vector<std::int64_t>> counts(n,
                                                std::vector<std::int64_t>(atoms.weights.size()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < atoms.weights.size(); ++j)
      counts[i][j] = rng.poisson(atoms.weights[j]);
  return counts;
}

// Explicit draw from the two-level hierarchy: base atoms beta_j, per-document
// object masses Gamma(beta_j, 1) (the object measure must be the unit-mass
// gamma process, whose atom law is exact), then Poisson counts.
inline std::vector<std::vector<std::int64_t>> sample_hierarchy(const LevySpec& base,
                                                               const LevySpec& object,
                                                               std::size_t n, double eps,
                                                               Rng& rng) {
  if (!object.is_gamma_like() || object.mass() != 1.0)
    throw std::invalid_argument("sample_hierarchy: object measure must be gamma with unit mass");
  const WeightedAtoms atoms = sample_crm_weights(base, eps, rng);
  std::vector<std::vector<std::int64_t>> counts(n,
                                                std::vector<std::int64_t>(atoms.weights.size()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < atoms.weights.size(); ++j) {
      const double mass = rng.gamma(atoms.weights[j], 1.0);
      counts[i][j] = rng.poisson(mass);
    }
  return counts;
}

// Canonical signature of a count matrix: zero columns dropped, remaining
// columns sorted; comparable across oracle and collapsed samplers.
inline std::vector<std::vector<std::int64_t>> canonical_columns(
    const std::vector<std::vector<std::int64_t>>& counts) {
  if (counts.empty()) return {};
  const std::size_t n = counts.size();
  std::vector<std::vector<std::int64_t>> cols;
  for (std::size_t j = 0; j < counts.front().size(); ++j) {
    std::vector<std::int64_t> col(n);
    std::int64_t tot = 0;
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = counts[i][j];
      tot += col[i];
    }
    if (tot > 0) cols.push_back(std::move(col));
  }
  std::sort(cols.begin(), cols.end());
  return cols;
}

inline std::string canonical_key(const std::vector<std::vector<std::int64_t>>& cols) {
  std::string key;
  for (const auto& col : cols) {
    for (std::int64_t v : col) key += std::to_string(v) + ",";
    key += ";";
  }
  return key.empty() ? "<empty>" : key;
}

// Empirical law over canonical count configurations.
struct ConditionalSamples {
  std::map<std::string, std::int64_t> config_counts;
  std::map<std::int64_t, std::int64_t> distinct_counts;
  std::int64_t accepted = 0;
  std::int64_t attempts = 0;
  double acceptance_rate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempts);
  }
};

inline void record_draw(ConditionalSamples& s, const std::vector<std::vector<std::int64_t>>& counts) {
  const auto cols = canonical_columns(counts);
  ++s.config_counts[canonical_key(cols)];
  ++s.distinct_counts[static_cast<std::int64_t>(cols.size())];
  ++s.accepted;
}

// Rejection sampler conditioning the generative hierarchy on exact document
// sizes, so its law is comparable with the collapsed chain.
inline ConditionalSamples conditional_rejection_sample(const LevySpec& base,
                                                       const LevySpec& object, std::size_t n,
                                                       const std::vector<std::int64_t>& targets,
                                                       double eps, Rng& rng,
                                                       std::int64_t budget,
                                                       std::int64_t max_attempts = 0) {
  if (targets.size() != n)
    throw std::invalid_argument("conditional_rejection_sample: target size mismatch");
  if (budget < 1) throw std::invalid_argument("conditional_rejection_sample: budget must be >= 1");
  if (max_attempts <= 0) max_attempts = budget * 100000;
  ConditionalSamples out;
  while (out.accepted < budget) {
    if (out.attempts >= max_attempts)
      throw BudgetExhaustedError(
          "conditional_rejection_sample: attempt budget exhausted at acceptance rate " +
              std::to_string(out.acceptance_rate()),
          out.acceptance_rate());
    ++out.attempts;
    const auto counts = sample_hierarchy(base, object, n, eps, rng);
    bool match = true;
    for (std::size_t i = 0; i < n && match; ++i) {
      std::int64_t tot = 0;
      for (std::int64_t c : counts[i]) tot += c;
      match = tot == targets[i];
    }
    if (match) record_draw(out, counts);
  }
  return out;
}

struct ComparisonReport {
  double tv_distinct = 0.0;
  double tv_config = 0.0;
  double chi_square = 0.0;
  double chi_square_df = 0.0;
  double p_value = 1.0;
  std::int64_t n_left = 0, n_right = 0;
  bool pass = false;
};

namespace detail {

template <typename K>
inline double total_variation(const std::map<K, std::int64_t>& a,
                              const std::map<K, std::int64_t>& b, std::int64_t na,
                              std::int64_t nb) {
  double tv = 0.0;
  auto get = [](const std::map<K, std::int64_t>& m, const K& k) {
    auto it = m.find(k);
    return it == m.end() ? std::int64_t{0} : it->second;
  };
  std::map<K, bool> keys;
  for (const auto& [k, v] : a) keys[k] = true;
  for (const auto& [k, v] : b) keys[k] = true;
  for (const auto& [k, unused] : keys)
    tv += std::abs(static_cast<double>(get(a, k)) / na - static_cast<double>(get(b, k)) / nb);
  return tv / 2.0;
}

}  // namespace detail

// Compares two conditional sample sets: TV distances on distinct-dish counts
// and joint configurations, plus a two-sample chi-square on configurations.
inline ComparisonReport compare_report(const ConditionalSamples& left,
                                       const ConditionalSamples& right,
                                       double tv_threshold = 0.02,
                                       double p_threshold = 0.01) {
  if (left.accepted == 0 || right.accepted == 0)
    throw std::invalid_argument("compare_report: empty sample set");
  ComparisonReport rep;
  rep.n_left = left.accepted;
  rep.n_right = right.accepted;
  rep.tv_distinct = detail::total_variation(left.distinct_counts, right.distinct_counts,
                                            left.accepted, right.accepted);
  rep.tv_config = detail::total_variation(left.config_counts, right.config_counts, left.accepted,
                                          right.accepted);

  // two-sample chi-square over configurations with expected count >= 5
  std::map<std::string, bool> keys;
  for (const auto& [k, v] : left.config_counts) keys[k] = true;
  for (const auto& [k, v] : right.config_counts) keys[k] = true;
  const double na = static_cast<double>(left.accepted), nb = static_cast<double>(right.accepted);
  int cells = 0;
  for (const auto& [k, unused] : keys) {
    auto cnt = [&](const std::map<std::string, std::int64_t>& m) {
      auto it = m.find(k);
      return it == m.end() ? 0.0 : static_cast<double>(it->second);
    };
    const double o1 = cnt(left.config_counts), o2 = cnt(right.config_counts);
    const double tot = o1 + o2;
    const double e1 = tot * na / (na + nb), e2 = tot * nb / (na + nb);
    if (e1 < 5.0 || e2 < 5.0) continue;
    rep.chi_square += (o1 - e1) * (o1 - e1) / e1 + (o2 - e2) * (o2 - e2) / e2;
    ++cells;
  }
  rep.chi_square_df = std::max(cells - 1, 1);
  rep.p_value = cells > 1 ? chi_square_pvalue(rep.chi_square, rep.chi_square_df) : 1.0;
  rep.pass = rep.tv_config <= tv_threshold && rep.p_value > p_threshold;
  return rep;
}

}  // namespace hcrm
