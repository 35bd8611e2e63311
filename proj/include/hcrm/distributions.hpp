#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "hcrm/levy.hpp"
#include "hcrm/signed_log.hpp"

namespace hcrm {

class InvalidMatrixError : public std::invalid_argument {
 public:
  explicit InvalidMatrixError(const std::string& what) : std::invalid_argument(what) {}
};

class SignAnomalyError : public std::logic_error {
 public:
  explicit SignAnomalyError(const std::string& what) : std::logic_error(what) {}
};

// Feature-count matrix m_ij: one row per point process (document), one
// column per distinct feature. Row/column sums are cached.
class CountMatrix {
 public:
  CountMatrix(std::size_t n_rows, std::size_t n_cols)
      : data_(n_rows, std::vector<std::int64_t>(n_cols, 0)),
        row_sums_(n_rows, 0), col_sums_(n_cols, 0) {
    if (n_rows == 0) throw InvalidMatrixError("CountMatrix: need at least one row");
  }

  explicit CountMatrix(std::vector<std::vector<std::int64_t>> rows) {
    if (rows.empty()) throw InvalidMatrixError("CountMatrix: need at least one row");
    const std::size_t k = rows.front().size();
    for (const auto& r : rows)
      if (r.size() != k) throw InvalidMatrixError("CountMatrix: ragged rows");
    data_ = std::move(rows);
    row_sums_.assign(data_.size(), 0);
    col_sums_.assign(k, 0);
    for (std::size_t i = 0; i < data_.size(); ++i)
      for (std::size_t j = 0; j < k; ++j) {
        if (data_[i][j] < 0) throw InvalidMatrixError("CountMatrix: negative entry");
        row_sums_[i] += data_[i][j];
        col_sums_[j] += data_[i][j];
      }
  }

  std::size_t rows() const { return data_.size(); }
  std::size_t cols() const { return col_sums_.size(); }
  std::int64_t at(std::size_t i, std::size_t j) const { return data_[i][j]; }

  void set(std::size_t i, std::size_t j, std::int64_t v) {
    if (v < 0) throw InvalidMatrixError("CountMatrix: negative entry");
    row_sums_[i] += v - data_[i][j];
    col_sums_[j] += v - data_[i][j];
    data_[i][j] = v;
  }

  std::int64_t row_sum(std::size_t i) const { return row_sums_[i]; }
  std::int64_t col_sum(std::size_t j) const { return col_sums_[j]; }
  std::int64_t total() const {
    return std::accumulate(row_sums_.begin(), row_sums_.end(), std::int64_t{0});
  }

  void require_positive_columns() const {
    for (std::size_t j = 0; j < cols(); ++j)
      if (col_sums_[j] < 1)
        throw InvalidMatrixError("CountMatrix: column " + std::to_string(j) + " sums to zero");
  }

 private:
  std::vector<std::vector<std::int64_t>> data_;
  std::vector<std::int64_t> row_sums_, col_sums_;
};

inline double log_factorial(std::int64_t n) { return std::lgamma(static_cast<double>(n) + 1.0); }

// Log of the CRM-Poisson pmf over count matrices:
//   theta^k e^{-theta psi(t)} / prod_i m_i.! * prod_j |psi^(m_.j)(t)|,
// with the alternating derivative signs cancelled against the matrix-level
// prefactor. spec must carry unit mass (theta is passed explicitly); t is
// the Laplace-exponent argument (n for the flat model, psibar(1)*n at the
// dish level of the hierarchy).
inline double crm_poisson_log_pmf(double theta, const LevySpec& spec, double t,
                                  const CountMatrix& m) {
  if (spec.mass() != 1.0)
    throw std::invalid_argument("crm_poisson_log_pmf: spec must have unit mass");
  if (!(theta > 0.0)) throw std::domain_error("crm_poisson_log_pmf: theta must be positive");
  if (t <= 0.0) throw std::domain_error("crm_poisson_log_pmf: t must be positive");
  m.require_positive_columns();

  const std::size_t k = m.cols();
  double log_p = k * std::log(theta) - theta * psi(spec, t);
  for (std::size_t i = 0; i < m.rows(); ++i) log_p -= log_factorial(m.row_sum(i));
  int deriv_sign_product = 1;
  for (std::size_t j = 0; j < k; ++j) {
    const SignedLogValue d = psi_deriv(spec, static_cast<int>(m.col_sum(j)), t);
    deriv_sign_product *= d.sign;
    log_p += d.log_mag;
  }
  const std::int64_t mtot = m.total();
  const int prefactor = ((mtot - static_cast<std::int64_t>(k)) % 2 == 0) ? +1 : -1;
  if (prefactor * deriv_sign_product != 1)
    throw SignAnomalyError("crm_poisson_log_pmf: sign cancellation failed");
  return log_p;
}

// Poisson log-pmf of the distinct-feature count, rate theta * psi(spec, t).
inline double distinct_count_log_pmf(double theta, const LevySpec& spec, double t,
                                     std::int64_t k) {
  if (k < 0) throw std::domain_error("distinct_count_log_pmf: k must be nonnegative");
  if (theta < 0.0) throw std::domain_error("distinct_count_log_pmf: theta must be nonnegative");
  const double rate = theta * psi(spec, t);
  if (rate == 0.0) return k == 0 ? 0.0 : neg_inf;
  return k * std::log(rate) - rate - log_factorial(k);
}

// Conditional CRM-Poisson: crm_poisson_log_pmf given k distinct features,
// i.e. the pmf divided by the Poisson(k; theta psi(t)) mass. theta cancels,
// so the internal choice theta = 1 is immaterial.
inline double ccrm_poisson_log_pmf(const LevySpec& spec, double t, std::size_t k,
                                   const CountMatrix& m) {
  if (m.cols() != k)
    throw std::invalid_argument("ccrm_poisson_log_pmf: matrix has " + std::to_string(m.cols()) +
                                " columns, expected " + std::to_string(k));
  return crm_poisson_log_pmf(1.0, spec, t, m) - distinct_count_log_pmf(1.0, spec, t,
                                                                       static_cast<std::int64_t>(k));
}

// Log of the per-restaurant table-occupancy marginal:
//   |h^(r)(psibar(1))| * prod_j |psibar^(m_j)(1)| / m.!,
// signs cancelling as in the CRM-Poisson pmf. `mix` backs h for non-gamma
// bases.
inline double restaurant_counts_log_pmf(const LevySpec& base, const LevySpec& object,
                                        const std::vector<std::int64_t>& m_row,
                                        const ExpMixture* mix = nullptr) {
  if (object.mass() != 1.0)
    throw std::invalid_argument("restaurant_counts_log_pmf: object spec must have unit mass");
  const int r = static_cast<int>(m_row.size());
  const double psibar1 = psi(object, 1.0);
  const SignedLogValue h = h_deriv(base, r, psibar1, mix);
  double log_p = h.log_mag;
  int sign = h.sign;
  std::int64_t m_tot = 0;
  for (std::int64_t mj : m_row) {
    if (mj < 1)
      throw InvalidMatrixError("restaurant_counts_log_pmf: every table needs >= 1 customer");
    const SignedLogValue d = psi_deriv(object, static_cast<int>(mj), 1.0);
    sign *= d.sign;
    log_p += d.log_mag;
    m_tot += mj;
  }
  log_p -= log_factorial(m_tot);
  const int prefactor = (m_tot % 2 == 0) ? +1 : -1;
  if (prefactor * sign != 1)
    throw SignAnomalyError("restaurant_counts_log_pmf: sign cancellation failed");
  return log_p;
}

}  // namespace hcrm
