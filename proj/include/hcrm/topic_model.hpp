#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hcrm/franchise.hpp"

namespace hcrm {

// Per-dish word-count table backing the collapsed symmetric-Dirichlet
// categorical likelihood.
class TopicWordStats {
 public:
  TopicWordStats(int vocab_size, double eta = 0.5) : W_(vocab_size), eta_(eta) {
    if (vocab_size < 1) throw std::invalid_argument("TopicWordStats: empty vocabulary");
    if (!(eta > 0.0)) throw std::invalid_argument("TopicWordStats: eta must be positive");
  }

  int vocab_size() const { return W_; }
  double eta() const { return eta_; }
  std::size_t num_dishes() const { return n_kw_.size(); }

  std::int64_t count(int dish, int word) const { return n_kw_.at(check_dish(dish))[check_word(word)]; }
  std::int64_t dish_total(int dish) const { return n_k_.at(check_dish(dish)); }

  void add_dish() {
    n_kw_.emplace_back(W_, 0);
    n_k_.push_back(0);
  }

  // Mirrors the franchise's index compaction: erase and shift.
  void remove_dish(int dish) {
    const std::size_t k = check_dish(dish);
    if (n_k_[k] != 0)
      throw std::logic_error("TopicWordStats: removing a dish with live counts");
    n_kw_.erase(n_kw_.begin() + static_cast<std::ptrdiff_t>(k));
    n_k_.erase(n_k_.begin() + static_cast<std::ptrdiff_t>(k));
  }

  void add(int dish, int word) {
    ++n_kw_[check_dish(dish)][check_word(word)];
    ++n_k_[static_cast<std::size_t>(dish)];
  }

  void remove(int dish, int word) {
    auto& c = n_kw_[check_dish(dish)][check_word(word)];
    if (c < 1) throw std::logic_error("TopicWordStats: removing an absent count");
    --c;
    --n_k_[static_cast<std::size_t>(dish)];
  }

  // Collapsed predictive log((n_kw + eta) / (n_k. + W eta)); a new dish has
  // the symmetric predictive log(1/W).
  double word_log_predictive(int dish, int word) const {
    const std::size_t k = check_dish(dish);
    const std::size_t w = check_word(word);
    return std::log((n_kw_[k][w] + eta_) / (n_k_[k] + W_ * eta_));
  }

  double word_log_predictive_new(int word) const {
    check_word(word);
    return -std::log(static_cast<double>(W_));
  }

  // Dirichlet-multinomial predictive of a word-count block under one dish.
  double block_log_predictive(int dish, const std::vector<std::pair<int, int>>& counts) const {
    const std::size_t k = check_dish(dish);
    double lp = 0.0;
    std::int64_t total = 0;
    for (const auto& [w, c] : counts) {
      const std::int64_t base = n_kw_[k][check_word(w)];
      for (int r = 0; r < c; ++r) lp += std::log(base + r + eta_);
      total += c;
    }
    for (std::int64_t r = 0; r < total; ++r) lp -= std::log(n_k_[k] + r + W_ * eta_);
    return lp;
  }

  double block_log_predictive_new(const std::vector<std::pair<int, int>>& counts) const {
    double lp = 0.0;
    std::int64_t total = 0;
    for (const auto& [w, c] : counts) {
      check_word(w);
      for (int r = 0; r < c; ++r) lp += std::log(r + eta_);
      total += c;
    }
    for (std::int64_t r = 0; r < total; ++r) lp -= std::log(r + W_ * eta_);
    return lp;
  }

  // Collapsed log-likelihood of all assigned words (Dirichlet-multinomial
  // per dish); used for the progress log.
  double corpus_log_likelihood() const {
    double lp = 0.0;
    for (std::size_t k = 0; k < n_kw_.size(); ++k) {
      lp += std::lgamma(W_ * eta_) - std::lgamma(n_k_[k] + W_ * eta_);
      for (int w = 0; w < W_; ++w)
        lp += std::lgamma(n_kw_[k][static_cast<std::size_t>(w)] + eta_) - std::lgamma(eta_);
    }
    return lp;
  }

  const std::vector<std::int64_t>& row(int dish) const { return n_kw_.at(check_dish(dish)); }

 private:
  std::size_t check_dish(int dish) const {
    if (dish < 0 || static_cast<std::size_t>(dish) >= n_kw_.size())
      throw std::out_of_range("TopicWordStats: unknown dish " + std::to_string(dish));
    return static_cast<std::size_t>(dish);
  }
  std::size_t check_word(int word) const {
    if (word < 0 || word >= W_)
      throw std::out_of_range("TopicWordStats: word index out of range");
    return static_cast<std::size_t>(word);
  }

  int W_;
  double eta_;
  std::vector<std::vector<std::int64_t>> n_kw_;
  std::vector<std::int64_t> n_k_;
};

// LikelihoodProvider wiring the franchise sweep to TopicWordStats.
class TopicLikelihood : public LikelihoodProvider {
 public:
  TopicLikelihood(int vocab_size, double eta = 0.5) : stats_(vocab_size, eta) {}

  const TopicWordStats& stats() const { return stats_; }

  double token_loglik(int dish, int token) const override {
    return stats_.word_log_predictive(dish, token);
  }
  double token_loglik_new_dish(int token) const override {
    return stats_.word_log_predictive_new(token);
  }
  double block_loglik(int dish, const std::vector<std::pair<int, int>>& counts) const override {
    return stats_.block_log_predictive(dish, counts);
  }
  double block_loglik_new_dish(const std::vector<std::pair<int, int>>& counts) const override {
    return stats_.block_log_predictive_new(counts);
  }
  double corpus_loglik() const override { return stats_.corpus_log_likelihood(); }
  void add_token(int dish, int token) override { stats_.add(dish, token); }
  void remove_token(int dish, int token) override { stats_.remove(dish, token); }
  void add_dish() override { stats_.add_dish(); }
  void remove_dish(int dish) override { stats_.remove_dish(dish); }

 private:
  TopicWordStats stats_;
};

// One retained MCMC sample, reduced to the count statistics the summary
// needs: per-document tokens on each dish and per-dish word counts.
struct SampleStats {
  std::vector<std::vector<std::int64_t>> doc_dish_tokens;  // c_dk
  std::vector<std::vector<std::int64_t>> dish_word;        // n_kw
};

inline SampleStats collect_sample_stats(const FranchiseState& state,
                                        const std::vector<std::vector<int>>& tokens,
                                        int vocab_size) {
  SampleStats s;
  const std::size_t n = state.num_docs();
  const std::size_t p = state.num_dishes();
  s.doc_dish_tokens.assign(n, std::vector<std::int64_t>(p, 0));
  s.dish_word.assign(p, std::vector<std::int64_t>(static_cast<std::size_t>(vocab_size), 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < tokens[i].size(); ++l) {
      const int j = state.table_of[i][l];
      const int k = state.dish_of_table[i][static_cast<std::size_t>(j)];
      ++s.doc_dish_tokens[i][static_cast<std::size_t>(k)];
      ++s.dish_word[static_cast<std::size_t>(k)][static_cast<std::size_t>(tokens[i][l])];
    }
  return s;
}

// Posterior summary: row-stochastic beta (documents x topics) and tau
// (topics x words). Topics from different samples are stacked side by side
// with beta scaled by 1/S, so sum_k beta tau equals the across-sample mean
// of per-sample predictives without any topic alignment.
struct PosteriorSummary {
  std::vector<std::vector<double>> beta;  // n_docs x K
  std::vector<std::vector<double>> tau;   // K x W
  std::size_t num_topics() const { return tau.size(); }
};

inline PosteriorSummary accumulate_summary(const std::vector<SampleStats>& samples,
                                           double eta = 0.5, double eps_beta = 1e-9) {
  if (samples.empty()) throw std::invalid_argument("accumulate_summary: no samples");
  const std::size_t S = samples.size();
  const std::size_t n = samples.front().doc_dish_tokens.size();
  PosteriorSummary out;
  out.beta.assign(n, {});
  for (const auto& s : samples) {
    if (s.doc_dish_tokens.size() != n)
      throw std::invalid_argument("accumulate_summary: inconsistent document counts");
    const std::size_t p = s.dish_word.size();
    const std::size_t W = p == 0 ? 0 : s.dish_word.front().size();
    for (std::size_t k = 0; k < p; ++k) {
      std::vector<double> tau_row(W);
      double tot = 0.0;
      for (std::size_t w = 0; w < W; ++w) {
        tau_row[w] = s.dish_word[k][w] + eta;
        tot += tau_row[w];
      }
      for (double& v : tau_row) v /= tot;
      out.tau.push_back(std::move(tau_row));
    }
    for (std::size_t d = 0; d < n; ++d) {
      double tot = 0.0;
      for (std::size_t k = 0; k < p; ++k) tot += s.doc_dish_tokens[d][k] + eps_beta;
      for (std::size_t k = 0; k < p; ++k)
        out.beta[d].push_back((s.doc_dish_tokens[d][k] + eps_beta) / (tot * S));
    }
  }
  return out;
}

struct TestToken {
  int doc;
  int word;
};

// exp of the negative mean log predictive probability of the test tokens.
inline double perplexity(const std::vector<TestToken>& test_tokens,
                         const PosteriorSummary& summary) {
  if (test_tokens.empty()) throw std::invalid_argument("perplexity: no test tokens");
  double sum_log = 0.0;
  for (const auto& tok : test_tokens) {
    if (tok.doc < 0 || static_cast<std::size_t>(tok.doc) >= summary.beta.size())
      throw std::out_of_range("perplexity: test token references unknown document");
    double p = 0.0;
    const auto& beta_row = summary.beta[static_cast<std::size_t>(tok.doc)];
    for (std::size_t k = 0; k < beta_row.size(); ++k) {
      const auto& tau_row = summary.tau[k];
      if (tok.word < 0 || static_cast<std::size_t>(tok.word) >= tau_row.size())
        throw std::out_of_range("perplexity: test token word out of range");
      p += beta_row[k] * tau_row[static_cast<std::size_t>(tok.word)];
    }
    if (!(p > 0.0)) throw std::domain_error("perplexity: zero-probability test token");
    sum_log += std::log(p);
  }
  return std::exp(-sum_log / static_cast<double>(test_tokens.size()));
}

}  // namespace hcrm
