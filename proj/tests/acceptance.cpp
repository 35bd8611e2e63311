// Acceptance gate: one pass/fail line per criterion, exit 0 iff all pass.
// argv[1] is the path to the hcrm CLI binary (used by the determinism check).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hcrm/runner.hpp"

using namespace hcrm;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  bool pass;
  std::string detail;
};

std::vector<double> normalize(const std::vector<double>& log_w) {
  double m = neg_inf;
  for (double w : log_w) m = std::max(m, w);
  std::vector<double> p(log_w.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(log_w[i] - m));
  for (double& v : p) v /= z;
  return p;
}

// 1: gamma-gamma table and dish probabilities match the closed-form
// fractions m_ij / (m + (theta+r)/(1+ln 2)) and r_k/(sum r + theta).
Criterion criterion1() {
  const double theta = 1.7;
  FranchiseModel model(LevySpec::gamma(theta), LevySpec::gamma(1.0), 3);
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t r = 1 + rng.raw() % 6;
    std::vector<std::int64_t> m(r);
    double m_sum = 0.0;
    for (auto& mj : m)
      m_sum += static_cast<double>(mj = 1 + static_cast<std::int64_t>(rng.raw() % 6));
    std::vector<double> w;
    for (std::int64_t mj : m) w.push_back(model.log_table_ratio(mj));
    w.push_back(model.log_table_new(static_cast<std::int64_t>(r)));
    const std::vector<double> p = normalize(w);
    const double new_mass = (theta + static_cast<double>(r)) / (1.0 + std::log(2.0));
    for (std::size_t j = 0; j < r; ++j)
      worst = std::max(worst, std::abs(p[j] - static_cast<double>(m[j]) / (m_sum + new_mass)));
    worst = std::max(worst, std::abs(p[r] - new_mass / (m_sum + new_mass)));

    const std::size_t pdim = 1 + rng.raw() % 5;
    std::vector<std::int64_t> rk(pdim);
    double r_sum = 0.0;
    for (auto& v : rk)
      r_sum += static_cast<double>(v = 1 + static_cast<std::int64_t>(rng.raw() % 6));
    std::vector<double> dw;
    for (std::int64_t v : rk) dw.push_back(model.log_dish_ratio(v));
    dw.push_back(model.log_dish_new());
    const std::vector<double> dp = normalize(dw);
    for (std::size_t k = 0; k < pdim; ++k)
      worst = std::max(worst, std::abs(dp[k] - static_cast<double>(rk[k]) / (r_sum + theta)));
    worst = std::max(worst, std::abs(dp[pdim] - theta / (r_sum + theta)));
  }
  return {worst <= 1e-12, "max abs dev " + fmt_g(worst, 3) + " over 1000 states"};
}

// 2: discounted-object table weights carry (m - d) numerators and the
// ln_d(2) = (2^d - 1)/d constant.
Criterion criterion2() {
  double worst = 0.0;
  for (double d : {0.1, 0.2, 0.3, 0.4}) {
    const double theta = 2.0;
    FranchiseModel model(LevySpec::gamma(theta), LevySpec::generalized_gamma(d, 1.0), 2);
    const double ln_d_2 = std::expm1(d * std::log(2.0)) / d;
    worst = std::max(worst, std::abs(model.psibar1() - ln_d_2));
    for (std::int64_t m = 1; m <= 12; ++m)
      worst = std::max(worst, std::abs(std::exp(model.log_table_ratio(m)) -
                                       (static_cast<double>(m) - d) / 2.0));
    for (std::int64_t r = 0; r <= 6; ++r) {
      const double expected =
          (theta + static_cast<double>(r)) / (1.0 + ln_d_2) * std::pow(2.0, d - 1.0);
      worst = std::max(worst, std::abs(std::exp(model.log_table_new(r)) - expected));
    }
  }
  return {worst <= 1e-12, "max abs dev " + fmt_g(worst, 3) + " for d in {.1,.2,.3,.4}"};
}

Criterion from_check(const CheckResult& c) { return {c.pass, c.detail}; }

// 8: synthetic-corpus perplexity beats the unigram baseline in >= 9/10 seeds.
Criterion criterion8() {
  const SynthCorpus synth = synth_corpus(3, 10, 50, 40, 0.3, 0.8, 2024);
  int good_seeds = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    bool seed_ok = true;
    for (double p_train : {0.3, 0.5, 0.7}) {
      Corpus corpus = synth.corpus;
      split_train_test(corpus, p_train, seed);
      RunConfig cfg;
      cfg.sampler.iterations = 2000;
      cfg.sampler.burn_in = 500;
      cfg.sampler.thinning = 5;
      cfg.sampler.seed = seed;
      const FitResult fit = run_fit(cfg, corpus);
      const double model_ppx = perplexity(test_tokens_of(corpus), fit.summary);
      const double base_ppx = unigram_perplexity(corpus, cfg.eta);
      if (model_ppx > base_ppx) {
        seed_ok = false;
        detail += "seed " + std::to_string(seed) + " p=" + fmt_g(p_train, 2) + " model " +
                  fmt_g(model_ppx, 5) + " > unigram " + fmt_g(base_ppx, 5) + "; ";
      }
    }
    if (seed_ok) ++good_seeds;
  }
  return {good_seeds >= 9, std::to_string(good_seeds) + "/10 seeds beat the baseline. " + detail};
}

// 9: a GGP base with d = 0 runs bit-identically to the gamma base.
Criterion criterion9() {
  const SynthCorpus synth = synth_corpus(3, 8, 10, 15, 0.4, 0.8, 55);
  const std::vector<std::vector<int>>& tokens = synth.corpus.docs;
  SamplerConfig cfg;
  cfg.seed = 314;
  TopicLikelihood lik_a(8), lik_b(8);
  GibbsSampler a(FranchiseModel(LevySpec::gamma(1.5), LevySpec::gamma(1.0), tokens.size()),
                 tokens, lik_a, cfg.seed);
  GibbsSampler b(FranchiseModel(LevySpec::generalized_gamma(0.0, 1.5), LevySpec::gamma(1.0),
                                tokens.size()),
                 tokens, lik_b, cfg.seed);
  a.init();
  b.init();
  auto seating_lines = [](const GibbsSampler& s) {
    std::ostringstream os;
    s.save_checkpoint(os);
    // drop the family-name header lines; the seating, iteration, and rng
    // lines must match bitwise
    std::string out, line;
    std::istringstream is(os.str());
    while (std::getline(is, line))
      if (line.rfind("base ", 0) != 0 && line.rfind("object ", 0) != 0) out += line + "\n";
    return out;
  };
  for (int it = 0; it < 100; ++it) {
    a.sweep();
    b.sweep();
    a.resample_hyperparams(cfg);
    b.resample_hyperparams(cfg);
    if (seating_lines(a) != seating_lines(b))
      return {false, "chains diverged at iteration " + std::to_string(it + 1)};
    if (a.model().base().mass() != b.model().base().mass())
      return {false, "mass resampling diverged at iteration " + std::to_string(it + 1)};
    const double ja = a.log_joint(), jb = b.log_joint();
    if (ja != jb) return {false, "log joints differ: " + fmt_g(ja) + " vs " + fmt_g(jb)};
  }
  return {true, "100 iterations bit-identical (seating, rng, masses, log-joint)"};
}

// 10: a CLI fit rerun from its echoed config reproduces outputs byte-for-byte.
Criterion criterion10(const std::string& cli) {
  const fs::path work = fs::temp_directory_path() / "hcrm_acceptance_determinism";
  fs::remove_all(work);
  fs::create_directories(work);
  const SynthCorpus synth = synth_corpus(3, 10, 12, 20, 0.4, 0.8, 7);
  const fs::path docword = work / "docword.txt";
  {
    std::ofstream os(docword);
    serialize_uci_bow(synth.corpus, os);
  }
  const fs::path out1 = work / "run1", out2 = work / "run2";
  const std::string fit1 = cli + " fit --docword " + docword.string() +
                           " --p-train 0.7 --seed 9 --iterations 60 --burn-in 20 --thin 4" +
                           " --out " + out1.string() + " > /dev/null";
  if (std::system(fit1.c_str()) != 0) return {false, "first CLI fit failed"};
  const std::string fit2 = cli + " fit --config " + (out1 / "config.txt").string() +
                           " --out " + out2.string() + " > /dev/null";
  if (std::system(fit2.c_str()) != 0) return {false, "rerun from echoed config failed"};
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };
  for (const char* name :
       {"progress.jsonl", "checkpoint.txt", "beta.csv", "tau.csv", "top_words.txt"}) {
    if (!fs::exists(out2 / name)) return {false, std::string("missing output ") + name};
    if (slurp(out1 / name) != slurp(out2 / name))
      return {false, std::string("outputs differ: ") + name};
  }
  return {true, "all fit outputs byte-identical across the rerun"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Criterion()>>> criteria = {
      {"1 gamma-gamma closed-form seating probabilities", criterion1},
      {"2 discounted-object closed-form table weights", criterion2},
      {"3 derivative correctness and Bernstein signs",
       [] {
         const CheckResult d = check_derivatives();
         const CheckResult b = check_bernstein_signs();
         return Criterion{d.pass && b.pass, d.detail + "; " + b.detail};
       }},
      {"4 Gibbs weights equal pmf increment ratios",
       [] { return from_check(check_ratio_identity(500, 2025)); }},
      {"5 Laplace functional of the truncated oracle",
       [] {
         return from_check(check_laplace_functional(LevySpec::generalized_gamma(0.3, 1.0),
                                                    100000, 1e-3, 2026));
       }},
      {"6 distinct-feature count is Poisson(theta psi(n))",
       [] { return from_check(check_distinct_count(1.0, 3, 100000, 1e-6, 2027)); }},
      {"7 collapsed enumeration matches the rejection oracle",
       [] { return from_check(check_conditional_exactness(50000, 1e-6, 2028)); }},
      {"8 synthetic-corpus perplexity beats the unigram baseline", criterion8},
      {"9 zero-discount GGP chains are bit-identical to gamma chains", criterion9},
      {"10 fit outputs are byte-identical when rerun from the echoed config",
       [&] {
         if (cli.empty()) return Criterion{false, "CLI path not supplied"};
         return criterion10(cli);
       }},
  };

  bool all_pass = true;
  for (const auto& [name, fn] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Criterion c{false, "unhandled exception"};
    try {
      c = fn();
    } catch (const std::exception& e) {
      c.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (c.pass ? "PASS" : "FAIL") << " criterion " << name << " [" << fmt_g(secs, 3)
              << "s]: " << c.detail << "\n";
    all_pass = all_pass && c.pass;
  }
  return all_pass ? 0 : 1;
}
