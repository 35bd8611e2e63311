#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcrm/data_io.hpp"
#include "hcrm/distributions.hpp"
#include "hcrm/franchise.hpp"
#include "hcrm/levy.hpp"
#include "hcrm/oracle.hpp"
#include "hcrm/rng.hpp"
#include "hcrm/topic_model.hpp"

namespace hcrm {

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// printf-based float formatting so run outputs are byte-stable across reruns.
inline std::string fmt_g(double v, int digits = 17) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

// Resolved run configuration: flat key=value text file, flags override keys.
struct RunConfig {
  std::string base_family = "gamma";  // gamma | ggp | sggp
  double theta = 1.0;
  double discount = 0.0;
  std::vector<GgpTerm> sggp_components;
  std::string object_family = "gamma";  // only gamma supported

  std::string docword_path;
  std::string vocab_path;
  double p_train = 1.0;
  double eta = 0.5;

  SamplerConfig sampler;
  int checkpoint_every = 500;
  int progress_every = 10;
  int top_words = 10;
  std::string out_dir;

  void set(const std::string& key, const std::string& value) {
    auto to_d = [&](const std::string& v) {
      std::size_t pos = 0;
      double x = 0.0;
      try {
        x = std::stod(v, &pos);
      } catch (const std::exception&) {
        pos = std::string::npos;
      }
      if (pos != v.size()) throw ConfigError("config: bad number for " + key + ": " + v);
      return x;
    };
    auto to_i = [&](const std::string& v) { return static_cast<int>(to_d(v)); };
    if (key == "base") base_family = value;
    else if (key == "theta") theta = to_d(value);
    else if (key == "d") discount = to_d(value);
    else if (key == "sggp_components") sggp_components = parse_components(value);
    else if (key == "object") object_family = value;
    else if (key == "docword") docword_path = value;
    else if (key == "vocab") vocab_path = value;
    else if (key == "p_train") p_train = to_d(value);
    else if (key == "eta") eta = to_d(value);
    else if (key == "seed") sampler.seed = static_cast<std::uint64_t>(to_d(value));
    else if (key == "iterations") sampler.iterations = to_i(value);
    else if (key == "burn_in") sampler.burn_in = to_i(value);
    else if (key == "thin") sampler.thinning = to_i(value);
    else if (key == "resample_mass") sampler.resample_mass = to_i(value) != 0;
    else if (key == "checkpoint_every") checkpoint_every = to_i(value);
    else if (key == "progress_every") progress_every = to_i(value);
    else if (key == "top_words") top_words = to_i(value);
    else if (key == "out") out_dir = value;
    else throw ConfigError("config: unknown key '" + key + "'");
  }

  static std::vector<GgpTerm> parse_components(const std::string& s) {
    std::vector<GgpTerm> terms;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ',')) {
      const std::size_t colon = item.find(':');
      if (colon == std::string::npos)
        throw ConfigError("config: sggp component must be theta:d, got '" + item + "'");
      terms.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    }
    if (terms.empty()) throw ConfigError("config: empty sggp component list");
    return terms;
  }

  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::size_t a = line.find_first_not_of(" \t\r");
      if (a == std::string::npos) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
      auto trim = [](std::string s) {
        const std::size_t b = s.find_first_not_of(" \t\r");
        const std::size_t e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  LevySpec base_spec() const {
    if (base_family == "gamma") return LevySpec::gamma(theta);
    if (base_family == "ggp") return LevySpec::generalized_gamma(discount, theta);
    if (base_family == "sggp") {
      if (sggp_components.empty())
        throw ConfigError("config: base=sggp requires sggp_components");
      return LevySpec::sum_generalized_gamma(sggp_components);
    }
    throw ConfigError("config: unknown base family '" + base_family + "'");
  }

  LevySpec object_spec() const {
    if (object_family != "gamma")
      throw ConfigError("config: only object=gamma is supported");
    return LevySpec::gamma(1.0);
  }

  // Fully resolved echo; reloading it reproduces this config.
  void echo(std::ostream& os) const {
    os << "base = " << base_family << "\n";
    os << "theta = " << fmt_g(theta) << "\n";
    os << "d = " << fmt_g(discount) << "\n";
    if (!sggp_components.empty()) {
      os << "sggp_components = ";
      for (std::size_t q = 0; q < sggp_components.size(); ++q)
        os << (q ? "," : "") << fmt_g(sggp_components[q].theta) << ":"
           << fmt_g(sggp_components[q].discount);
      os << "\n";
    }
    os << "object = " << object_family << "\n";
    if (!docword_path.empty()) os << "docword = " << docword_path << "\n";
    if (!vocab_path.empty()) os << "vocab = " << vocab_path << "\n";
    os << "p_train = " << fmt_g(p_train) << "\n";
    os << "eta = " << fmt_g(eta) << "\n";
    os << "seed = " << sampler.seed << "\n";
    os << "iterations = " << sampler.iterations << "\n";
    os << "burn_in = " << sampler.burn_in << "\n";
    os << "thin = " << sampler.thinning << "\n";
    os << "resample_mass = " << (sampler.resample_mass ? 1 : 0) << "\n";
    os << "checkpoint_every = " << checkpoint_every << "\n";
    os << "progress_every = " << progress_every << "\n";
    os << "top_words = " << top_words << "\n";
    if (!out_dir.empty()) os << "out = " << out_dir << "\n";
  }
};

struct FitResult {
  std::vector<SampleStats> samples;
  PosteriorSummary summary;
  std::size_t final_dishes = 0;
  std::size_t mode_dishes = 0;
};

// Core fit loop over an already-split corpus; writes outputs when out_dir is
// set. Everything emitted is a deterministic function of the config.
inline FitResult run_fit(const RunConfig& cfg, const Corpus& corpus,
                         std::ostream* progress = nullptr) {
  cfg.sampler.validate();
  const Corpus train = train_subset(corpus);
  std::vector<std::vector<int>> tokens = train.docs;

  TopicLikelihood topic_lik(corpus.W, cfg.eta);
  UnitLikelihood unit_lik;
  LikelihoodProvider& lik =
      cfg.sampler.use_likelihood ? static_cast<LikelihoodProvider&>(topic_lik) : unit_lik;
  FranchiseModel model(cfg.base_spec(), cfg.object_spec(), tokens.size());
  GibbsSampler sampler(std::move(model), tokens, lik, cfg.sampler.seed);

  const bool writing = !cfg.out_dir.empty();
  std::ofstream progress_file;
  if (writing) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream echo_os(cfg.out_dir + "/config.txt");
    cfg.echo(echo_os);
    progress_file.open(cfg.out_dir + "/progress.jsonl");
  }
  auto checkpoint = [&]() {
    if (!writing) return;
    std::ofstream os(cfg.out_dir + "/checkpoint.txt");
    sampler.save_checkpoint(os);
  };
  auto record_progress = [&](int it) {
    std::ostringstream line;
    line << "{\"iteration\":" << it << ",\"dishes\":" << sampler.state().num_dishes()
         << ",\"tables\":" << sampler.state().total_tables()
         << ",\"log_joint\":" << fmt_g(sampler.log_joint()) << "}";
    if (writing) progress_file << line.str() << "\n";
    if (progress) *progress << line.str() << "\n";
  };

  sampler.init();
  FitResult result;
  if (cfg.sampler.iterations == 0) {
    checkpoint();
    result.final_dishes = sampler.state().num_dishes();
    return result;
  }

  std::map<std::size_t, int> dish_histogram;
  for (int it = 1; it <= cfg.sampler.iterations; ++it) {
    sampler.sweep();
    if (cfg.sampler.resample_mass) sampler.resample_hyperparams(cfg.sampler);
    if (it == 1 || it == cfg.sampler.iterations || it % cfg.progress_every == 0)
      record_progress(it);
    if (it > cfg.sampler.burn_in && (it - cfg.sampler.burn_in) % cfg.sampler.thinning == 0) {
      result.samples.push_back(collect_sample_stats(sampler.state(), train.docs, corpus.W));
      ++dish_histogram[sampler.state().num_dishes()];
    }
    if (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) checkpoint();
  }
  checkpoint();
  result.final_dishes = sampler.state().num_dishes();
  int best = 0;
  for (const auto& [p, c] : dish_histogram)
    if (c > best) { best = c; result.mode_dishes = p; }
  if (result.samples.empty())
    throw std::runtime_error("run_fit: no samples retained (check burn_in/thin)");
  result.summary = accumulate_summary(result.samples, cfg.eta);

  if (writing) {
    std::ofstream beta_os(cfg.out_dir + "/beta.csv");
    for (const auto& row : result.summary.beta) {
      for (std::size_t k = 0; k < row.size(); ++k) beta_os << (k ? "," : "") << fmt_g(row[k]);
      beta_os << "\n";
    }
    std::ofstream tau_os(cfg.out_dir + "/tau.csv");
    for (const auto& row : result.summary.tau) {
      for (std::size_t w = 0; w < row.size(); ++w) tau_os << (w ? "," : "") << fmt_g(row[w]);
      tau_os << "\n";
    }
    // top words per dish of the final retained sample
    std::ofstream top_os(cfg.out_dir + "/top_words.txt");
    const SampleStats& last = result.samples.back();
    for (std::size_t k = 0; k < last.dish_word.size(); ++k) {
      std::vector<int> order(last.dish_word[k].size());
      for (std::size_t w = 0; w < order.size(); ++w) order[w] = static_cast<int>(w);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return last.dish_word[k][static_cast<std::size_t>(a)] >
               last.dish_word[k][static_cast<std::size_t>(b)];
      });
      top_os << "topic " << k << ":";
      for (int r = 0; r < cfg.top_words && r < static_cast<int>(order.size()); ++r) {
        const int w = order[static_cast<std::size_t>(r)];
        top_os << " "
               << (static_cast<std::size_t>(w) < corpus.vocab.size()
                       ? corpus.vocab[static_cast<std::size_t>(w)]
                       : "w" + std::to_string(w));
      }
      top_os << "\n";
    }
  }
  return result;
}

inline std::vector<TestToken> test_tokens_of(const Corpus& corpus) {
  std::vector<TestToken> out;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i)
    for (std::size_t l = 0; l < corpus.docs[i].size(); ++l)
      if (!corpus.train_flag[i][l])
        out.push_back({static_cast<int>(i), corpus.docs[i][l]});
  return out;
}

// Smoothed global unigram perplexity on the test tokens; the baseline every
// fitted model should beat.
inline double unigram_perplexity(const Corpus& corpus, double eta) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(corpus.W), 0);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i)
    for (std::size_t l = 0; l < corpus.docs[i].size(); ++l)
      if (corpus.train_flag[i][l]) {
        ++counts[static_cast<std::size_t>(corpus.docs[i][l])];
        ++total;
      }
  double sum_log = 0.0;
  std::int64_t n_test = 0;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i)
    for (std::size_t l = 0; l < corpus.docs[i].size(); ++l)
      if (!corpus.train_flag[i][l]) {
        const auto c = counts[static_cast<std::size_t>(corpus.docs[i][l])];
        sum_log += std::log((c + eta) / (total + corpus.W * eta));
        ++n_test;
      }
  if (n_test == 0) throw std::runtime_error("unigram_perplexity: no test tokens");
  return std::exp(-sum_log / static_cast<double>(n_test));
}

// Fits at each requested training fraction and emits perplexity.csv rows
// (p_train, model, perplexity) for the fitted model and the unigram baseline.
inline void run_eval(const RunConfig& cfg, const Corpus& full_corpus,
                     const std::vector<double>& p_grid, std::ostream& csv) {
  csv << "p_train,model,perplexity\n";
  for (double p : p_grid) {
    Corpus corpus = full_corpus;
    split_train_test(corpus, p, cfg.sampler.seed);
    RunConfig fit_cfg = cfg;
    fit_cfg.p_train = p;
    fit_cfg.out_dir.clear();
    const FitResult fit = run_fit(fit_cfg, corpus);
    const double model_ppx = perplexity(test_tokens_of(corpus), fit.summary);
    csv << fmt_g(p, 6) << "," << cfg.base_family << "," << fmt_g(model_ppx, 10) << "\n";
    csv << fmt_g(p, 6) << ",unigram," << fmt_g(unigram_perplexity(corpus, cfg.eta), 10) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 12345;
  int ratio_states = 500;
  std::int64_t laplace_draws = 100000;
  std::int64_t prop1_draws = 100000;
  std::int64_t eq5_budget = 50000;
  double truncation_eps = 1e-6;
  // power-law (GGP) tails make the atom count blow up as eps shrinks; the
  // Laplace check's acceptance band includes the t * eps bias bound, so a
  // larger budget there costs accuracy it already accounts for
  double laplace_eps = 1e-3;
  // test hook: flips the reported sign of psi derivatives inside the
  // Bernstein check, to prove the check can fail
  bool fault_flip_psi_sign = false;
};

namespace detail {

// k-th derivative (k <= 3) by central differences with two Richardson
// extrapolation levels.
inline double fd_deriv(const std::function<double(double)>& f, double t, int k) {
  auto stencil = [&](double h) {
    switch (k) {
      case 1: return (f(t + h) - f(t - h)) / (2.0 * h);
      case 2: return (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
      case 3:
        return (f(t + 2.0 * h) - 2.0 * f(t + h) + 2.0 * f(t - h) - f(t - 2.0 * h)) /
               (2.0 * h * h * h);
      default: throw std::invalid_argument("fd_deriv: k must be 1..3");
    }
  };
  const double h0 = 0.02 * (1.0 + t);
  const double d1 = stencil(h0), d2 = stencil(h0 / 2.0), d3 = stencil(h0 / 4.0);
  const double r1 = (4.0 * d2 - d1) / 3.0;
  const double r2 = (4.0 * d3 - d2) / 3.0;
  return (16.0 * r2 - r1) / 15.0;
}

inline std::vector<std::pair<std::string, LevySpec>> check_families() {
  return {{"gamma", LevySpec::gamma(1.3)},
          {"ggp(d=0.1)", LevySpec::generalized_gamma(0.1, 1.0)},
          {"ggp(d=0.3)", LevySpec::generalized_gamma(0.3, 2.0)},
          {"sggp", LevySpec::sum_generalized_gamma({{1.0, 0.2}, {0.5, 0.6}})}};
}

inline std::vector<double> normalized(const std::vector<double>& log_w) {
  double m = neg_inf;
  for (double w : log_w) m = std::max(m, w);
  double z = 0.0;
  std::vector<double> p(log_w.size());
  for (std::size_t i = 0; i < log_w.size(); ++i) z += (p[i] = std::exp(log_w[i] - m));
  for (double& v : p) v /= z;
  return p;
}

inline double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), 1e-300));
  return worst;
}

}  // namespace detail

// psi^(k) against Richardson finite differences, k <= 3, t in {0.1, 1, 5}.
inline CheckResult check_derivatives() {
  CheckResult res{"derivatives", true, ""};
  double worst = 0.0;
  for (const auto& [name, spec] : detail::check_families())
    for (int k = 1; k <= 3; ++k)
      for (double t : {0.1, 1.0, 5.0}) {
        const double exact = psi_deriv(spec, k, t).value();
        const double fd = detail::fd_deriv([&](double x) { return psi(spec, x); }, t, k);
        const double rel = std::abs(fd - exact) / std::abs(exact);
        worst = std::max(worst, rel);
        if (rel > 1e-6) {
          res.pass = false;
          res.detail += name + " k=" + std::to_string(k) + " t=" + fmt_g(t, 3) +
                        " rel_err=" + fmt_g(rel, 3) + "; ";
        }
      }
  if (res.pass) res.detail = "max rel err " + fmt_g(worst, 3);
  return res;
}

// Alternating derivative signs: psi^(k) carries (-1)^(k-1), h^(k) carries
// (-1)^k, for k <= 8.
inline CheckResult check_bernstein_signs(bool fault_flip = false) {
  CheckResult res{"bernstein-signs", true, ""};
  for (const auto& [name, spec] : detail::check_families())
    for (int k = 1; k <= 8; ++k) {
      int sign = psi_deriv(spec, k, 0.7).sign;
      if (fault_flip) sign = -sign;
      if (sign != (k % 2 == 1 ? +1 : -1)) {
        res.pass = false;
        res.detail += "psi sign wrong: " + name + " k=" + std::to_string(k) + "; ";
      }
    }
  const LevySpec gamma_base = LevySpec::gamma(2.0);
  for (int k = 0; k <= 8; ++k)
    if (h_deriv(gamma_base, k, 0.7).sign != (k % 2 == 0 ? +1 : -1)) {
      res.pass = false;
      res.detail += "h sign wrong at k=" + std::to_string(k) + "; ";
    }
  if (res.pass) res.detail = "all signs alternate through k=8";
  return res;
}

// Exponentiated Gibbs weights against single-increment pmf ratios, compared
// as normalized probability vectors (common factors cancel).
inline CheckResult check_ratio_identity(int n_states, std::uint64_t seed) {
  CheckResult res{"ratio-identity", true, ""};
  Rng rng(seed);
  const LevySpec object = LevySpec::gamma(1.0);
  double worst = 0.0;
  for (const auto& [name, base] : detail::check_families()) {
    const std::size_t n_docs = 3;
    FranchiseModel model(base, object, n_docs);
    for (int s = 0; s < n_states; ++s) {
      // table move: random restaurant occupancy m_row
      const std::size_t r = 1 + rng.raw() % 5;
      std::vector<std::int64_t> m_row(r);
      for (auto& m : m_row) m = 1 + static_cast<std::int64_t>(rng.raw() % 5);
      std::vector<double> gibbs, pmf;
      const double base_lp = restaurant_counts_log_pmf(base, object, m_row, model.h_mixture());
      for (std::size_t j = 0; j < r; ++j) {
        gibbs.push_back(model.log_table_ratio(m_row[j]));
        std::vector<std::int64_t> inc = m_row;
        ++inc[j];
        pmf.push_back(restaurant_counts_log_pmf(base, object, inc, model.h_mixture()) - base_lp);
      }
      gibbs.push_back(model.log_table_new(static_cast<std::int64_t>(r)));
      std::vector<std::int64_t> with_new = m_row;
      with_new.push_back(1);
      pmf.push_back(restaurant_counts_log_pmf(base, object, with_new, model.h_mixture()) - base_lp);
      worst = std::max(worst,
                       detail::max_rel_diff(detail::normalized(gibbs), detail::normalized(pmf)));

      // dish move: random table-count matrix r_ik, one restaurant gains a table
      const std::size_t p = 1 + rng.raw() % 4;
      CountMatrix rmat(n_docs, p);
      for (std::size_t k = 0; k < p; ++k) {
        // ensure each dish has at least one table somewhere
        rmat.set(rng.raw() % n_docs, k, 1 + static_cast<std::int64_t>(rng.raw() % 2));
        for (std::size_t i = 0; i < n_docs; ++i)
          if (rng.uniform01() < 0.5)
            rmat.set(i, k, rmat.at(i, k) + static_cast<std::int64_t>(rng.raw() % 3));
      }
      const std::size_t doc = rng.raw() % n_docs;
      auto dish_lp = [&](const CountMatrix& m) {
        if (base.family() == LevyFamily::SumGeneralizedGamma)
          return crm_poisson_log_pmf(1.0, base, model.tnode(), m);
        return crm_poisson_log_pmf(base.mass(), base.with_mass(1.0), model.tnode(), m);
      };
      const double dish_base_lp = dish_lp(rmat);
      std::vector<double> dgibbs, dpmf;
      for (std::size_t k = 0; k < p; ++k) {
        dgibbs.push_back(model.log_dish_ratio(rmat.col_sum(k)));
        CountMatrix inc = rmat;
        inc.set(doc, k, inc.at(doc, k) + 1);
        dpmf.push_back(dish_lp(inc) - dish_base_lp);
      }
      dgibbs.push_back(model.log_dish_new());
      {
        CountMatrix inc(n_docs, p + 1);
        for (std::size_t i = 0; i < n_docs; ++i)
          for (std::size_t k = 0; k < p; ++k) inc.set(i, k, rmat.at(i, k));
        inc.set(doc, p, 1);
        dpmf.push_back(dish_lp(inc) - dish_base_lp);
      }
      worst = std::max(worst,
                       detail::max_rel_diff(detail::normalized(dgibbs), detail::normalized(dpmf)));
    }
  }
  res.pass = worst <= 1e-10;
  res.detail = "max rel diff " + fmt_g(worst, 3);
  return res;
}

// Truncated-oracle mean of e^{-t Lambda(S)} against exp(-psi(t)), within
// 3 s.e. plus the truncation bias bound t * eps.
inline CheckResult check_laplace_functional(const LevySpec& spec, std::int64_t draws,
                                            double eps, std::uint64_t seed) {
  CheckResult res{"laplace-functional", true, ""};
  Rng rng(seed);
  const std::vector<double> ts = {0.5, 1.0, 2.0};
  std::vector<double> sum(ts.size(), 0.0), sumsq(ts.size(), 0.0);
  for (std::int64_t i = 0; i < draws; ++i) {
    const WeightedAtoms atoms = sample_crm_weights(spec, eps, rng);
    double total = 0.0;
    for (double w : atoms.weights) total += w;
    for (std::size_t j = 0; j < ts.size(); ++j) {
      const double v = std::exp(-ts[j] * total);
      sum[j] += v;
      sumsq[j] += v * v;
    }
  }
  for (std::size_t j = 0; j < ts.size(); ++j) {
    const double mean = sum[j] / static_cast<double>(draws);
    const double var = std::max(sumsq[j] / static_cast<double>(draws) - mean * mean, 0.0);
    const double se = std::sqrt(var / static_cast<double>(draws));
    const double target = std::exp(-psi(spec, ts[j]));
    const double allow = 3.0 * se + ts[j] * eps;
    const double diff = std::abs(mean - target);
    res.detail += "t=" + fmt_g(ts[j], 3) + " diff=" + fmt_g(diff, 3) +
                  " allow=" + fmt_g(allow, 3) + "; ";
    if (diff > allow) res.pass = false;
  }
  return res;
}

// Distinct-feature count of the oracle against Poisson(theta psi(n)):
// chi-square with tail bins merged to expected count >= 5.
inline CheckResult check_distinct_count(double theta, std::size_t n, std::int64_t draws,
                                        double eps, std::uint64_t seed) {
  CheckResult res{"distinct-count", true, ""};
  Rng rng(seed);
  const LevySpec spec = LevySpec::gamma(theta);
  std::map<std::int64_t, std::int64_t> hist;
  for (std::int64_t i = 0; i < draws; ++i) {
    const auto counts = sample_crm_poisson_counts(spec, n, eps, rng);
    std::int64_t distinct = 0;
    for (std::size_t j = 0; j < counts.front().size(); ++j) {
      std::int64_t tot = 0;
      for (std::size_t d = 0; d < n; ++d) tot += counts[d][j];
      if (tot > 0) ++distinct;
    }
    ++hist[distinct];
  }
  const double rate = theta * psi(spec.with_mass(1.0), static_cast<double>(n));
  double chi = 0.0;
  int cells = 0;
  double acc_obs = 0.0, acc_exp = 0.0;
  std::int64_t max_k = hist.rbegin()->first;
  for (std::int64_t k = 0; k <= max_k + 1; ++k) {
    const double e =
        static_cast<double>(draws) *
        (k <= max_k ? std::exp(k * std::log(rate) - rate - log_factorial(k))
                    : 1.0 - gamma_q(static_cast<double>(max_k + 1), rate));
    const auto it = hist.find(k);
    acc_obs += it == hist.end() ? 0.0 : static_cast<double>(it->second);
    acc_exp += e;
    const bool last = k == max_k + 1;
    if (acc_exp >= 5.0 || last) {
      chi += (acc_obs - acc_exp) * (acc_obs - acc_exp) / std::max(acc_exp, 1e-12);
      ++cells;
      acc_obs = acc_exp = 0.0;
    }
  }
  const double p = cells > 1 ? chi_square_pvalue(chi, cells - 1) : 1.0;
  res.pass = p > 0.01;
  res.detail = "chi2=" + fmt_g(chi, 4) + " df=" + std::to_string(cells - 1) +
               " p=" + fmt_g(p, 4);
  return res;
}

// Gamma-Gamma, theta=1, two documents of one token each: enumerated
// collapsed P(shared dish) and conditional pmf against the rejection oracle.
inline CheckResult check_conditional_exactness(std::int64_t budget, double eps,
                                               std::uint64_t seed) {
  CheckResult res{"conditional-exactness", true, ""};
  const LevySpec base = LevySpec::gamma(1.0);
  const LevySpec object = LevySpec::gamma(1.0);
  const std::size_t n = 2;
  const double tnode = psi(object, 1.0) * static_cast<double>(n);

  // enumeration: only two dish configurations are possible
  const CountMatrix shared(std::vector<std::vector<std::int64_t>>{{1}, {1}});
  const CountMatrix split(std::vector<std::vector<std::int64_t>>{{1, 0}, {0, 1}});
  const double lp_shared = crm_poisson_log_pmf(base.mass(), base.with_mass(1.0), tnode, shared);
  const double lp_split = crm_poisson_log_pmf(base.mass(), base.with_mass(1.0), tnode, split);
  const double p_shared = 1.0 / (1.0 + std::exp(lp_split - lp_shared));

  Rng rng(seed);
  ConditionalSamples oracle =
      conditional_rejection_sample(base, object, n, {1, 1}, eps, rng, budget);
  const auto it = oracle.distinct_counts.find(1);
  const double oracle_shared =
      (it == oracle.distinct_counts.end() ? 0.0 : static_cast<double>(it->second)) /
      static_cast<double>(oracle.accepted);
  const double se = std::sqrt(p_shared * (1.0 - p_shared) / static_cast<double>(oracle.accepted));
  const double diff = std::abs(oracle_shared - p_shared);
  if (diff > 3.0 * se) res.pass = false;

  // TV between the exponentiated conditional pmf and oracle config frequencies
  const double tv = std::abs(p_shared - oracle_shared);  // two-config distribution
  if (tv > 0.02) res.pass = false;
  res.detail = "P(shared)=" + fmt_g(p_shared, 6) + " oracle=" + fmt_g(oracle_shared, 6) +
               " (3se=" + fmt_g(3.0 * se, 3) + ") tv=" + fmt_g(tv, 3) +
               " acc_rate=" + fmt_g(oracle.acceptance_rate(), 3);
  return res;
}

inline std::vector<CheckResult> run_verify(const VerifyOptions& opt) {
  std::vector<CheckResult> checks;
  checks.push_back(check_derivatives());
  checks.push_back(check_bernstein_signs(opt.fault_flip_psi_sign));
  checks.push_back(check_ratio_identity(opt.ratio_states, opt.seed));
  checks.push_back(check_laplace_functional(LevySpec::generalized_gamma(0.3, 1.0),
                                            opt.laplace_draws, opt.laplace_eps, opt.seed + 1));
  checks.push_back(
      check_distinct_count(1.0, 3, opt.prop1_draws, opt.truncation_eps, opt.seed + 2));
  checks.push_back(check_conditional_exactness(opt.eq5_budget, opt.truncation_eps, opt.seed + 3));
  return checks;
}

// Printed log-pmf with 15 significant digits, for the pmf subcommand.
inline std::string run_pmf(const std::string& kind, const LevySpec& spec, double theta, double t,
                           const std::vector<std::vector<std::int64_t>>& rows) {
  const CountMatrix m(rows);
  double lp;
  if (kind == "crm")
    lp = crm_poisson_log_pmf(theta, spec, t, m);
  else if (kind == "ccrm")
    lp = ccrm_poisson_log_pmf(spec, t, m.cols(), m);
  else if (kind == "restaurant") {
    if (m.rows() != 1)
      throw std::invalid_argument("run_pmf: restaurant pmf takes a single-row matrix");
    std::vector<std::int64_t> m_row;
    for (std::size_t j = 0; j < m.cols(); ++j) m_row.push_back(m.at(0, j));
    lp = restaurant_counts_log_pmf(spec, LevySpec::gamma(1.0), m_row);
  } else {
    throw std::invalid_argument("run_pmf: kind must be crm, ccrm, or restaurant");
  }
  return fmt_g(lp, 15);
}

}  // namespace hcrm
