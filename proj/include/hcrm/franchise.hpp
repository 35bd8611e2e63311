#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hcrm/distributions.hpp"
#include "hcrm/levy.hpp"
#include "hcrm/rng.hpp"

namespace hcrm {

class StateCorruptionError : public std::logic_error {
 public:
  explicit StateCorruptionError(const std::string& what) : std::logic_error(what) {}
};

struct SamplerConfig {
  int iterations = 2000;
  int burn_in = 500;
  int thinning = 5;
  std::uint64_t seed = 0;
  double hyper_shape = 4.0;  // gamma prior on each mass parameter
  double hyper_rate = 2.0;
  int mass_grid_size = 200;
  double mass_grid_lo = 1e-3;
  double mass_grid_hi = 20.0;
  bool resample_mass = true;
  bool use_likelihood = true;

  void validate() const {
    if (iterations < 0 || burn_in < 0 || thinning < 1)
      throw std::invalid_argument("SamplerConfig: bad iteration counts");
    if (iterations > 0 && burn_in >= iterations)
      throw std::invalid_argument("SamplerConfig: burn_in must be < iterations");
    if (mass_grid_size < 1 || !(mass_grid_lo > 0.0) || !(mass_grid_hi > mass_grid_lo))
      throw std::invalid_argument("SamplerConfig: bad mass grid");
  }
};

// Complete seating arrangement of the Chinese restaurant franchise.
// Indices are compact: removing a table or dish shifts everything above it
// down, so live tables always have m_ij >= 1 and live dishes r_.k >= 1.
struct FranchiseState {
  // per document: table index of each customer (-1 while unseated)
  std::vector<std::vector<int>> table_of;
  // per document: customers per table (m_ij) and dish per table (D_ij)
  std::vector<std::vector<std::int64_t>> table_count;
  std::vector<std::vector<int>> dish_of_table;
  // per document x dish: tables serving dish k (r_ik); plus global r_.k
  std::vector<std::vector<std::int64_t>> dish_tables;
  std::vector<std::int64_t> global_dish_tables;

  explicit FranchiseState(const std::vector<std::size_t>& doc_sizes) {
    const std::size_t n = doc_sizes.size();
    table_of.resize(n);
    table_count.resize(n);
    dish_of_table.resize(n);
    dish_tables.resize(n);
    for (std::size_t i = 0; i < n; ++i) table_of[i].assign(doc_sizes[i], -1);
  }

  std::size_t num_docs() const { return table_of.size(); }
  std::size_t num_dishes() const { return global_dish_tables.size(); }
  std::size_t num_tables(std::size_t i) const { return table_count[i].size(); }

  std::int64_t total_tables() const {
    std::int64_t t = 0;
    for (const auto& tc : table_count) t += static_cast<std::int64_t>(tc.size());
    return t;
  }

  CountMatrix dish_count_matrix() const {
    std::vector<std::vector<std::int64_t>> rows(num_docs(),
                                                std::vector<std::int64_t>(num_dishes(), 0));
    for (std::size_t i = 0; i < num_docs(); ++i)
      for (std::size_t k = 0; k < num_dishes(); ++k) rows[i][k] = dish_tables[i][k];
    return CountMatrix(std::move(rows));
  }

  void check_invariants() const {
    const std::size_t p = num_dishes();
    std::vector<std::int64_t> global_check(p, 0);
    for (std::size_t i = 0; i < num_docs(); ++i) {
      if (table_count[i].size() != dish_of_table[i].size())
        throw StateCorruptionError("table arrays out of sync");
      std::vector<std::int64_t> m_check(table_count[i].size(), 0);
      std::int64_t seated = 0;
      for (int t : table_of[i]) {
        if (t < 0 || static_cast<std::size_t>(t) >= table_count[i].size())
          throw StateCorruptionError("customer points at a dead table");
        ++m_check[static_cast<std::size_t>(t)];
        ++seated;
      }
      if (seated != static_cast<std::int64_t>(table_of[i].size()))
        throw StateCorruptionError("unseated customer");
      std::vector<std::int64_t> r_check(p, 0);
      for (std::size_t j = 0; j < table_count[i].size(); ++j) {
        if (table_count[i][j] < 1) throw StateCorruptionError("empty live table");
        if (table_count[i][j] != m_check[j]) throw StateCorruptionError("m_ij count drift");
        const int k = dish_of_table[i][j];
        if (k < 0 || static_cast<std::size_t>(k) >= p)
          throw StateCorruptionError("table points at a dead dish");
        ++r_check[static_cast<std::size_t>(k)];
      }
      if (dish_tables[i].size() != p) throw StateCorruptionError("r_ik width drift");
      for (std::size_t k = 0; k < p; ++k) {
        if (dish_tables[i][k] != r_check[k]) throw StateCorruptionError("r_ik count drift");
        global_check[k] += dish_tables[i][k];
      }
    }
    for (std::size_t k = 0; k < p; ++k) {
      if (global_dish_tables[k] != global_check[k]) throw StateCorruptionError("r_.k drift");
      if (global_dish_tables[k] < 1) throw StateCorruptionError("orphan dish");
    }
  }
};

// Precomputed signed-log machinery for one model configuration: the object
// spec is evaluated at t = 1, the base spec at t = psibar(1)*n, and h at
// psibar(1). Ratio tables are cached and grown on demand.
class FranchiseModel {
 public:
  FranchiseModel(LevySpec base, LevySpec object, std::size_t n_docs,
                 int h_fit_terms = 10, double h_fit_tolerance = 1e-6)
      : base_(std::move(base)), object_(std::move(object)), n_docs_(n_docs),
        h_fit_terms_(h_fit_terms), h_fit_tolerance_(h_fit_tolerance) {
    if (object_.mass() != 1.0)
      throw std::invalid_argument("FranchiseModel: object spec must have unit mass");
    if (n_docs_ == 0) throw std::invalid_argument("FranchiseModel: need at least one document");
    psibar1_ = psi(object_, 1.0);
    tnode_ = psibar1_ * static_cast<double>(n_docs_);
    refit_h();
  }

  const LevySpec& base() const { return base_; }
  const LevySpec& object() const { return object_; }
  std::size_t n_docs() const { return n_docs_; }
  double psibar1() const { return psibar1_; }
  double tnode() const { return tnode_; }
  const ExpMixture* h_mixture() const { return h_mix_ ? &*h_mix_ : nullptr; }

  void set_base(LevySpec base) {
    base_ = std::move(base);
    log_psi_.clear();
    log_h_.clear();
    refit_h();
  }

  // log |psibar^(m+1)(1) / psibar^(m)(1)|, the existing-table factor.
  double log_table_ratio(std::int64_t m) const {
    grow(log_psibar_, object_, 1.0, m + 1);
    return log_psibar_[static_cast<std::size_t>(m + 1)] - log_psibar_[static_cast<std::size_t>(m)];
  }

  // log |h^(r+1)/h^(r)(psibar(1))| + log |psibar^(1)(1)|, the new-table factor.
  double log_table_new(std::int64_t r) const {
    grow_h(r + 1);
    grow(log_psibar_, object_, 1.0, 1);
    return log_h_[static_cast<std::size_t>(r + 1)] - log_h_[static_cast<std::size_t>(r)] +
           log_psibar_[1];
  }

  // log |psi^(r+1)(tnode) / psi^(r)(tnode)|, the existing-dish factor.
  double log_dish_ratio(std::int64_t r) const {
    grow(log_psi_, base_, tnode_, r + 1);
    return log_psi_[static_cast<std::size_t>(r + 1)] - log_psi_[static_cast<std::size_t>(r)];
  }

  // log |psi^(1)(tnode)| with the base mass inside, the new-dish factor.
  double log_dish_new() const {
    grow(log_psi_, base_, tnode_, 1);
    return log_psi_[1];
  }

 private:
  void refit_h() {
    if (base_.is_gamma_like()) {
      h_mix_.reset();
      return;
    }
    // The sampler only evaluates h and its derivatives at u = psibar(1).
    // Cap the fit range where h drops below ~e^-15: a 1e-6 relative fit
    // across dozens of decades is unreachable for any small mixture, and
    // those magnitudes never enter a weight.
    double u_max = std::max(20.0, psibar1_ * static_cast<double>(n_docs_ + 1));
    if (psi(base_, u_max) > 15.0) {
      double lo = 0.0, hi = u_max;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (psi(base_, mid) > 15.0 ? hi : lo) = mid;
      }
      u_max = std::max(hi, psibar1_ * static_cast<double>(n_docs_ + 1));
    }
    const std::vector<double> grid = log_grid(u_max, 200);
    // warm-start from the previous fit's rates (mass resampling moves the
    // base in small steps); larger masses steepen h and can need a few
    // extra terms
    const std::vector<double> warm = h_mix_ ? h_mix_->rates() : std::vector<double>{};
    const std::vector<double>* warm_ptr = warm.empty() ? nullptr : &warm;
    for (int extra = 0;; extra += 2) {
      try {
        h_mix_ = fit_exp_mixture(base_, h_fit_terms_ + extra, grid, h_fit_tolerance_, warm_ptr);
        return;
      } catch (const FitError&) {
        if (extra >= 8) break;
      }
    }
    // extreme resampled masses can make the 1e-6 target unreachable; accept
    // a looser best-effort fit there rather than aborting the chain (the
    // mixture is used consistently, so the sampler stays exact for the
    // approximating model)
    h_mix_ = fit_exp_mixture(base_, h_fit_terms_ + 8, grid,
                             std::max(h_fit_tolerance_, 1e-3), warm_ptr);
  }

  static void grow(std::vector<double>& cache, const LevySpec& spec, double t, std::int64_t k) {
    if (cache.empty()) cache.push_back(0.0);  // index 0 unused for psi caches
    while (static_cast<std::int64_t>(cache.size()) <= k)
      cache.push_back(psi_deriv(spec, static_cast<int>(cache.size()), t).log_mag);
  }

  void grow_h(std::int64_t r) const {
    while (static_cast<std::int64_t>(log_h_.size()) <= r)
      log_h_.push_back(h_deriv(base_, static_cast<int>(log_h_.size()), psibar1_,
                               h_mix_ ? &*h_mix_ : nullptr).log_mag);
  }

  LevySpec base_, object_;
  std::size_t n_docs_;
  int h_fit_terms_;
  double h_fit_tolerance_;
  double psibar1_ = 0.0, tnode_ = 0.0;
  std::optional<ExpMixture> h_mix_;
  mutable std::vector<double> log_psibar_, log_psi_, log_h_;
};

// Table weights for the customer currently unseated in document i: one entry
// per existing table plus the new-table entry last.
inline std::vector<double> table_log_weights(const FranchiseState& state,
                                             const FranchiseModel& model, std::size_t i,
                                             const std::vector<double>& per_table_loglik,
                                             double new_table_loglik) {
  const std::size_t r = state.num_tables(i);
  if (per_table_loglik.size() != r)
    throw std::invalid_argument("table_log_weights: likelihood list size mismatch");
  std::vector<double> w;
  w.reserve(r + 1);
  for (std::size_t j = 0; j < r; ++j) {
    if (state.table_count[i][j] < 1)
      throw StateCorruptionError("table_log_weights: empty table left after removal");
    w.push_back(model.log_table_ratio(state.table_count[i][j]) + per_table_loglik[j]);
  }
  w.push_back(model.log_table_new(static_cast<std::int64_t>(r)) + new_table_loglik);
  return w;
}

// Dish weights for a currently dishless table: one entry per existing dish
// plus the new-dish entry last.
inline std::vector<double> dish_log_weights(const FranchiseState& state,
                                            const FranchiseModel& model,
                                            const std::vector<double>& per_dish_loglik,
                                            double new_dish_loglik) {
  const std::size_t p = state.num_dishes();
  if (per_dish_loglik.size() != p)
    throw std::invalid_argument("dish_log_weights: likelihood list size mismatch");
  std::vector<double> w;
  w.reserve(p + 1);
  for (std::size_t k = 0; k < p; ++k) {
    if (state.global_dish_tables[k] < 1)
      throw StateCorruptionError("dish_log_weights: orphan dish left after removal");
    w.push_back(model.log_dish_ratio(state.global_dish_tables[k]) + per_dish_loglik[k]);
  }
  w.push_back(model.log_dish_new() + new_dish_loglik);
  return w;
}

// Observation-model hooks the sweep calls. The default implementation is the
// unit likelihood (prior simulation).
class LikelihoodProvider {
 public:
  virtual ~LikelihoodProvider() = default;
  virtual double token_loglik(int /*dish*/, int /*token*/) const { return 0.0; }
  virtual double token_loglik_new_dish(int /*token*/) const { return 0.0; }
  virtual double block_loglik(int /*dish*/,
                              const std::vector<std::pair<int, int>>& /*word_counts*/) const {
    return 0.0;
  }
  virtual double block_loglik_new_dish(
      const std::vector<std::pair<int, int>>& /*word_counts*/) const {
    return 0.0;
  }
  virtual double corpus_loglik() const { return 0.0; }
  virtual void add_token(int /*dish*/, int /*token*/) {}
  virtual void remove_token(int /*dish*/, int /*token*/) {}
  virtual void add_dish() {}
  virtual void remove_dish(int /*dish*/) {}
};

using UnitLikelihood = LikelihoodProvider;

// One chain: state, model, tokens, rng. Single-threaded by construction.
class GibbsSampler {
 public:
  GibbsSampler(FranchiseModel model, std::vector<std::vector<int>> tokens,
               LikelihoodProvider& likelihood, std::uint64_t seed)
      : model_(std::move(model)), tokens_(std::move(tokens)), lik_(&likelihood),
        state_(doc_sizes(tokens_)), rng_(seed) {
    if (tokens_.size() != model_.n_docs())
      throw std::invalid_argument("GibbsSampler: token list / model size mismatch");
  }

  const FranchiseState& state() const { return state_; }
  const FranchiseModel& model() const { return model_; }
  Rng& rng() { return rng_; }
  int iteration() const { return iteration_; }

  // Sequential incremental seating with the same weight formulas; a
  // deterministic-seeded warm start, not an exact prior draw.
  void init() {
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      for (std::size_t l = 0; l < tokens_[i].size(); ++l) seat_customer(i, l);
  }

  // Steps 1-3 of one Gibbs iteration: every customer's table (new tables get
  // a dish immediately), then every table's dish.
  void sweep() {
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      for (std::size_t l = 0; l < tokens_[i].size(); ++l) {
        unseat_customer(i, l);
        seat_customer(i, l);
      }
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      for (std::size_t j = 0; j < state_.num_tables(i); ++j) resample_dish(i, j);
    ++iteration_;
#ifndef NDEBUG
    state_.check_invariants();
#endif
  }

  // Resamples the base mass parameter(s) from a discretized posterior over a
  // uniform grid; the seating marginal in theta is the dish-level pmf.
  // Returns true if the grid was usable, false if it fell back to the prior.
  bool resample_hyperparams(const SamplerConfig& config) {
    config.validate();
    const CountMatrix r_matrix = state_.dish_count_matrix();
    bool grid_ok = true;
    switch (model_.base().family()) {
      case LevyFamily::Gamma:
      case LevyFamily::GeneralizedGamma: {
        const LevySpec unit = model_.base().with_mass(1.0);
        auto loglik = [&](double theta) {
          return r_matrix.cols() == 0
                     ? -theta * psi(unit, model_.tnode())
                     : crm_poisson_log_pmf(theta, unit, model_.tnode(), r_matrix);
        };
        const double theta = sample_mass_grid(loglik, config, &grid_ok);
        model_.set_base(model_.base().with_mass(theta));
        break;
      }
      case LevyFamily::SumGeneralizedGamma: {
        LevySpec spec = model_.base();
        for (std::size_t q = 0; q < spec.terms().size(); ++q) {
          auto loglik = [&](double theta_q) {
            const LevySpec cand = spec.with_term_theta(q, theta_q);
            if (r_matrix.cols() == 0) return -psi(cand, model_.tnode());
            return crm_poisson_log_pmf(1.0, cand, model_.tnode(), r_matrix);
          };
          bool ok = true;
          const double theta_q = sample_mass_grid(loglik, config, &ok);
          grid_ok = grid_ok && ok;
          spec = spec.with_term_theta(q, theta_q);
        }
        model_.set_base(spec);
        break;
      }
    }
    return grid_ok;
  }

  // Collapsed log-joint of the seating (dish-level pmf times per-restaurant
  // conditionals) plus the observation likelihood; a progress diagnostic.
  double log_joint() const {
    double lp;
    const CountMatrix r_matrix = state_.dish_count_matrix();
    if (r_matrix.cols() == 0) {
      lp = model_.base().family() == LevyFamily::SumGeneralizedGamma
               ? -psi(model_.base(), model_.tnode())
               : -model_.base().mass() * psi(model_.base().with_mass(1.0), model_.tnode());
    } else if (model_.base().family() == LevyFamily::SumGeneralizedGamma) {
      lp = crm_poisson_log_pmf(1.0, model_.base(), model_.tnode(), r_matrix);
    } else {
      lp = crm_poisson_log_pmf(model_.base().mass(), model_.base().with_mass(1.0),
                               model_.tnode(), r_matrix);
    }
    for (std::size_t i = 0; i < state_.num_docs(); ++i) {
      const std::size_t r_i = state_.num_tables(i);
      if (r_i == 0) continue;
      CountMatrix m_i(1, r_i);
      for (std::size_t j = 0; j < r_i; ++j) m_i.set(0, j, state_.table_count[i][j]);
      lp += ccrm_poisson_log_pmf(model_.object(), 1.0, r_i, m_i);
    }
    return lp + lik_->corpus_loglik();
  }

  void save_checkpoint(std::ostream& os) const;
  void load_checkpoint(std::istream& is);

 private:
  static std::vector<std::size_t> doc_sizes(const std::vector<std::vector<int>>& tokens) {
    std::vector<std::size_t> s;
    s.reserve(tokens.size());
    for (const auto& d : tokens) s.push_back(d.size());
    return s;
  }

  double sample_mass_grid(const std::function<double(double)>& loglik,
                          const SamplerConfig& config, bool* grid_ok) {
    const int g = config.mass_grid_size;
    std::vector<double> log_post(static_cast<std::size_t>(g));
    std::vector<double> grid(static_cast<std::size_t>(g));
    for (int s = 0; s < g; ++s) {
      const double theta =
          g == 1 ? config.mass_grid_lo
                 : config.mass_grid_lo +
                       (config.mass_grid_hi - config.mass_grid_lo) * s / (g - 1.0);
      grid[static_cast<std::size_t>(s)] = theta;
      const double prior = (config.hyper_shape - 1.0) * std::log(theta) -
                           config.hyper_rate * theta;
      double ll;
      try {
        ll = loglik(theta);
      } catch (const std::exception&) {
        ll = neg_inf;
      }
      log_post[static_cast<std::size_t>(s)] = prior + ll;
    }
    bool any_finite = false;
    for (double v : log_post) any_finite = any_finite || std::isfinite(v);
    if (!any_finite) {
      *grid_ok = false;
      return rng_.gamma(config.hyper_shape, config.hyper_rate);
    }
    return grid[rng_.categorical_log(log_post)];
  }

  void unseat_customer(std::size_t i, std::size_t l) {
    const int j = state_.table_of[i][l];
    if (j < 0) throw StateCorruptionError("unseat_customer: customer already unseated");
    state_.table_of[i][l] = -1;
    lik_->remove_token(state_.dish_of_table[i][static_cast<std::size_t>(j)], tokens_[i][l]);
    if (--state_.table_count[i][static_cast<std::size_t>(j)] == 0)
      remove_table(i, static_cast<std::size_t>(j));
  }

  void remove_table(std::size_t i, std::size_t j) {
    const int k = state_.dish_of_table[i][j];
    state_.table_count[i].erase(state_.table_count[i].begin() + static_cast<std::ptrdiff_t>(j));
    state_.dish_of_table[i].erase(state_.dish_of_table[i].begin() + static_cast<std::ptrdiff_t>(j));
    for (int& t : state_.table_of[i])
      if (t > static_cast<int>(j)) --t;
    if (--state_.dish_tables[i][static_cast<std::size_t>(k)] < 0)
      throw StateCorruptionError("remove_table: negative r_ik");
    if (--state_.global_dish_tables[static_cast<std::size_t>(k)] == 0)
      remove_dish(static_cast<std::size_t>(k));
  }

  void remove_dish(std::size_t k) {
    state_.global_dish_tables.erase(state_.global_dish_tables.begin() +
                                    static_cast<std::ptrdiff_t>(k));
    for (std::size_t i = 0; i < state_.num_docs(); ++i) {
      state_.dish_tables[i].erase(state_.dish_tables[i].begin() + static_cast<std::ptrdiff_t>(k));
      for (int& d : state_.dish_of_table[i])
        if (d > static_cast<int>(k)) --d;
    }
    lik_->remove_dish(static_cast<int>(k));
  }

  // Prior and posterior dish weights for a single token; reused for both the
  // new-table marginal and the actual dish draw.
  std::pair<std::vector<double>, std::vector<double>> token_dish_weights(int token) const {
    const std::size_t p = state_.num_dishes();
    std::vector<double> prior(p, 0.0), post(p + 1, 0.0);
    for (std::size_t k = 0; k < p; ++k) prior[k] = 0.0;
    std::vector<double> prior_w = dish_log_weights(state_, model_, prior, 0.0);
    for (std::size_t k = 0; k < p; ++k)
      post[k] = prior_w[k] + lik_->token_loglik(static_cast<int>(k), token);
    post[p] = prior_w[p] + lik_->token_loglik_new_dish(token);
    return {std::move(prior_w), std::move(post)};
  }

  void seat_customer(std::size_t i, std::size_t l) {
    const int token = tokens_[i][l];
    const std::size_t r = state_.num_tables(i);
    std::vector<double> per_table(r, 0.0);
    for (std::size_t j = 0; j < r; ++j)
      per_table[j] = lik_->token_loglik(state_.dish_of_table[i][j], token);
    auto [dish_prior, dish_post] = token_dish_weights(token);
    const double new_table_loglik = log_sum_exp(dish_post) - log_sum_exp(dish_prior);
    const std::vector<double> w = table_log_weights(state_, model_, i, per_table, new_table_loglik);
    const std::size_t choice = rng_.categorical_log(w);
    if (choice < r) {
      state_.table_of[i][l] = static_cast<int>(choice);
      ++state_.table_count[i][choice];
      lik_->add_token(state_.dish_of_table[i][choice], token);
    } else {
      // new table; the dish draw uses the weights already computed
      state_.table_count[i].push_back(1);
      const std::size_t dish = rng_.categorical_log(dish_post);
      if (dish == state_.num_dishes()) create_dish();
      state_.dish_of_table[i].push_back(static_cast<int>(dish));
      ++state_.dish_tables[i][dish];
      ++state_.global_dish_tables[dish];
      state_.table_of[i][l] = static_cast<int>(r);
      lik_->add_token(static_cast<int>(dish), token);
    }
  }

  void create_dish() {
    state_.global_dish_tables.push_back(0);
    for (auto& row : state_.dish_tables) row.push_back(0);
    lik_->add_dish();
  }

  std::vector<std::pair<int, int>> table_word_counts(std::size_t i, std::size_t j) const {
    std::vector<std::pair<int, int>> counts;
    for (std::size_t l = 0; l < tokens_[i].size(); ++l) {
      if (state_.table_of[i][l] != static_cast<int>(j)) continue;
      const int w = tokens_[i][l];
      bool found = false;
      for (auto& [word, c] : counts)
        if (word == w) { ++c; found = true; break; }
      if (!found) counts.emplace_back(w, 1);
    }
    return counts;
  }

  void resample_dish(std::size_t i, std::size_t j) {
    const int k0 = state_.dish_of_table[i][j];
    const std::vector<std::pair<int, int>> counts = table_word_counts(i, j);
    for (const auto& [w, c] : counts)
      for (int rep = 0; rep < c; ++rep) lik_->remove_token(k0, w);
    --state_.dish_tables[i][static_cast<std::size_t>(k0)];
    state_.dish_of_table[i][j] = -1;
    if (--state_.global_dish_tables[static_cast<std::size_t>(k0)] == 0)
      remove_dish(static_cast<std::size_t>(k0));

    const std::size_t p = state_.num_dishes();
    std::vector<double> per_dish(p, 0.0);
    for (std::size_t k = 0; k < p; ++k)
      per_dish[k] = lik_->block_loglik(static_cast<int>(k), counts);
    const std::vector<double> w =
        dish_log_weights(state_, model_, per_dish, lik_->block_loglik_new_dish(counts));
    const std::size_t dish = rng_.categorical_log(w);
    if (dish == p) create_dish();
    state_.dish_of_table[i][j] = static_cast<int>(dish);
    ++state_.dish_tables[i][dish];
    ++state_.global_dish_tables[dish];
    for (const auto& [word, c] : counts)
      for (int rep = 0; rep < c; ++rep) lik_->add_token(static_cast<int>(dish), word);
  }

  FranchiseModel model_;
  std::vector<std::vector<int>> tokens_;
  LikelihoodProvider* lik_;
  FranchiseState state_;
  Rng rng_;
  int iteration_ = 0;
};

namespace detail {

inline void write_spec(std::ostream& os, const LevySpec& s) {
  os << std::hexfloat;
  switch (s.family()) {
    case LevyFamily::Gamma:
      os << "gamma " << s.mass();
      break;
    case LevyFamily::GeneralizedGamma:
      os << "ggp " << s.discount() << " " << s.mass();
      break;
    case LevyFamily::SumGeneralizedGamma:
      os << "sggp " << s.terms().size();
      for (const auto& t : s.terms()) os << " " << t.theta << " " << t.discount;
      break;
  }
  os << std::defaultfloat;
}

inline LevySpec read_spec(std::istream& is) {
  std::string fam;
  is >> fam;
  auto rd = [&is]() {
    std::string tok;
    is >> tok;
    return std::strtod(tok.c_str(), nullptr);
  };
  if (fam == "gamma") {
    const double mass = rd();
    return LevySpec::gamma(mass);
  }
  if (fam == "ggp") {
    const double d = rd();
    const double mass = rd();
    return LevySpec::generalized_gamma(d, mass);
  }
  if (fam == "sggp") {
    std::size_t m = 0;
    is >> m;
    std::vector<GgpTerm> terms;
    for (std::size_t q = 0; q < m; ++q) {
      const double theta = rd();
      const double d = rd();
      terms.push_back({theta, d});
    }
    return LevySpec::sum_generalized_gamma(std::move(terms));
  }
  throw std::runtime_error("checkpoint: unknown family '" + fam + "'");
}

}  // namespace detail

inline void GibbsSampler::save_checkpoint(std::ostream& os) const {
  os << "hcrm-checkpoint 1\n";
  os << "base ";
  detail::write_spec(os, model_.base());
  os << "\nobject ";
  detail::write_spec(os, model_.object());
  os << "\niteration " << iteration_ << "\n";
  os << "docs " << state_.num_docs() << "\n";
  for (std::size_t i = 0; i < state_.num_docs(); ++i) {
    os << "T " << state_.table_of[i].size();
    for (int t : state_.table_of[i]) os << " " << t;
    os << "\nD " << state_.dish_of_table[i].size();
    for (int d : state_.dish_of_table[i]) os << " " << d;
    os << "\n";
  }
  os << "rng " << rng_.serialize() << "\n";
}

inline void GibbsSampler::load_checkpoint(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "hcrm-checkpoint" || version != 1)
    throw std::runtime_error("checkpoint: bad header");
  std::string key;
  is >> key;
  if (key != "base") throw std::runtime_error("checkpoint: expected base spec");
  LevySpec base = detail::read_spec(is);
  is >> key;
  if (key != "object") throw std::runtime_error("checkpoint: expected object spec");
  LevySpec object = detail::read_spec(is);
  is >> key >> iteration_;
  if (key != "iteration") throw std::runtime_error("checkpoint: expected iteration");
  std::size_t n = 0;
  is >> key >> n;
  if (key != "docs" || n != state_.num_docs())
    throw std::runtime_error("checkpoint: document count mismatch");
  model_ = FranchiseModel(base, object, n);

  // rebuild seating from T and D assignments
  FranchiseState st(doc_sizes(tokens_));
  std::size_t p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t len = 0;
    is >> key >> len;
    if (key != "T" || len != tokens_[i].size())
      throw std::runtime_error("checkpoint: customer count mismatch");
    st.table_of[i].resize(len);
    int max_table = -1;
    for (std::size_t l = 0; l < len; ++l) {
      is >> st.table_of[i][l];
      max_table = std::max(max_table, st.table_of[i][l]);
    }
    std::size_t ntab = 0;
    is >> key >> ntab;
    if (key != "D" || static_cast<int>(ntab) != max_table + 1)
      throw std::runtime_error("checkpoint: table count mismatch");
    st.dish_of_table[i].resize(ntab);
    st.table_count[i].assign(ntab, 0);
    for (std::size_t j = 0; j < ntab; ++j) {
      is >> st.dish_of_table[i][j];
      p = std::max(p, static_cast<std::size_t>(st.dish_of_table[i][j]) + 1);
    }
    for (int t : st.table_of[i]) ++st.table_count[i][static_cast<std::size_t>(t)];
  }
  st.global_dish_tables.assign(p, 0);
  for (std::size_t i = 0; i < n; ++i) {
    st.dish_tables[i].assign(p, 0);
    for (int d : st.dish_of_table[i]) {
      ++st.dish_tables[i][static_cast<std::size_t>(d)];
      ++st.global_dish_tables[static_cast<std::size_t>(d)];
    }
  }
  std::string rng_line;
  is >> key;
  if (key != "rng") throw std::runtime_error("checkpoint: expected rng state");
  std::getline(is, rng_line);
  state_ = std::move(st);
  state_.check_invariants();
  rng_.deserialize(rng_line);

  // resync the likelihood provider (must be freshly constructed) with the
  // restored seating
  for (std::size_t k = 0; k < state_.num_dishes(); ++k) lik_->add_dish();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < tokens_[i].size(); ++l) {
      const int j = state_.table_of[i][l];
      lik_->add_token(state_.dish_of_table[i][static_cast<std::size_t>(j)], tokens_[i][l]);
    }
}

}  // namespace hcrm
