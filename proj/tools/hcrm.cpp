#include <CLI11.hpp>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hcrm/runner.hpp"

namespace {

struct ModelFlags {
  std::string config_path;
  std::string base, object, sggp_components, docword, vocab, out;
  double theta = 0.0, d = 0.0, p_train = 0.0, eta = 0.0;
  std::uint64_t seed = 0;
  int iterations = 0, burn_in = 0, thin = 0;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--config", f.config_path, "key=value config file");
  cmd->add_option("--base", f.base, "base family: gamma | ggp | sggp");
  cmd->add_option("--object", f.object, "object family (gamma)");
  cmd->add_option("--theta", f.theta, "base mass parameter");
  cmd->add_option("--d", f.d, "GGP discount");
  cmd->add_option("--sggp-components", f.sggp_components, "theta1:d1,theta2:d2,...");
  cmd->add_option("--docword", f.docword, "UCI bag-of-words docword file");
  cmd->add_option("--vocab", f.vocab, "vocabulary file, one word per line");
  cmd->add_option("--p-train", f.p_train, "per-token training probability");
  cmd->add_option("--eta", f.eta, "topic Dirichlet smoothing");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--iterations", f.iterations, "Gibbs iterations");
  cmd->add_option("--burn-in", f.burn_in, "burn-in iterations");
  cmd->add_option("--thin", f.thin, "thinning interval");
  cmd->add_option("--out", f.out, "output directory");
}

hcrm::RunConfig resolve(const CLI::App* cmd, const ModelFlags& f) {
  hcrm::RunConfig cfg;
  if (!f.config_path.empty()) cfg.load_file(f.config_path);
  auto given = [&](const std::string& name) { return cmd->count(name) > 0; };
  if (given("--base")) cfg.set("base", f.base);
  if (given("--object")) cfg.set("object", f.object);
  if (given("--theta")) cfg.theta = f.theta;
  if (given("--d")) cfg.discount = f.d;
  if (given("--sggp-components")) cfg.set("sggp_components", f.sggp_components);
  if (given("--docword")) cfg.docword_path = f.docword;
  if (given("--vocab")) cfg.vocab_path = f.vocab;
  if (given("--p-train")) cfg.p_train = f.p_train;
  if (given("--eta")) cfg.eta = f.eta;
  if (given("--seed")) cfg.sampler.seed = f.seed;
  if (given("--iterations")) cfg.sampler.iterations = f.iterations;
  if (given("--burn-in")) cfg.sampler.burn_in = f.burn_in;
  if (given("--thin")) cfg.sampler.thinning = f.thin;
  if (given("--out")) cfg.out_dir = f.out;
  return cfg;
}

hcrm::Corpus load_corpus(const hcrm::RunConfig& cfg) {
  if (cfg.docword_path.empty())
    throw hcrm::ConfigError("no corpus: set docword= in the config or pass --docword");
  return hcrm::load_uci_bow_files(cfg.docword_path, cfg.vocab_path);
}

// "1 0; 0 1" -> rows of counts; "" -> a single zero-column row
std::vector<std::vector<std::int64_t>> parse_matrix(const std::string& text) {
  std::vector<std::vector<std::int64_t>> rows;
  std::string s = text;
  for (char& c : s)
    if (c == ',' || c == '[' || c == ']') c = ' ';
  std::istringstream is(s);
  std::string row_text;
  while (std::getline(is, row_text, ';')) {
    std::istringstream rs(row_text);
    std::vector<std::int64_t> row;
    std::int64_t v = 0;
    while (rs >> v) row.push_back(v);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) rows.push_back({});
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical CRM topic modeling: collapsed Gibbs sampling with "
               "gamma / generalized-gamma / sum-of-generalized-gamma base measures"};
  app.require_subcommand(1);

  ModelFlags fit_flags, eval_flags;
  CLI::App* fit = app.add_subcommand("fit", "run one Gibbs chain and write summaries");
  add_model_flags(fit, fit_flags);

  CLI::App* eval = app.add_subcommand("eval", "perplexity across training fractions");
  add_model_flags(eval, eval_flags);
  std::vector<double> p_grid{0.3, 0.4, 0.5, 0.6, 0.7};
  eval->add_option("--p-grid", p_grid, "training fractions to evaluate");

  CLI::App* verify = app.add_subcommand("verify", "run the verification suite");
  hcrm::VerifyOptions vopt;
  verify->add_option("--seed", vopt.seed, "verification RNG seed");
  verify->add_option("--ratio-states", vopt.ratio_states, "random states per family");
  verify->add_option("--laplace-draws", vopt.laplace_draws, "Laplace functional draws");
  verify->add_option("--prop1-draws", vopt.prop1_draws, "distinct-count draws");
  verify->add_option("--eq5-budget", vopt.eq5_budget, "accepted rejection-sampler draws");
  verify->add_option("--truncation-eps", vopt.truncation_eps, "oracle truncation budget");
  verify->add_flag("--fault-flip-sign", vopt.fault_flip_psi_sign,
                   "test hook: flip psi derivative signs to force a failure");
  bool quick = false;
  verify->add_flag("--quick", quick, "reduced Monte Carlo budgets");

  CLI::App* pmf = app.add_subcommand("pmf", "print a log-pmf value");
  std::string pmf_kind = "crm", pmf_matrix, pmf_base = "gamma", pmf_sggp;
  double pmf_theta = 1.0, pmf_d = 0.0, pmf_t = -1.0;
  pmf->add_option("--kind", pmf_kind, "crm | ccrm | restaurant");
  pmf->add_option("--matrix", pmf_matrix, "count matrix, rows ';'-separated: \"1 0; 0 1\"");
  pmf->add_option("--base", pmf_base, "gamma | ggp | sggp");
  pmf->add_option("--theta", pmf_theta, "mass parameter");
  pmf->add_option("--d", pmf_d, "GGP discount");
  pmf->add_option("--sggp-components", pmf_sggp, "theta1:d1,...");
  pmf->add_option("--t", pmf_t, "Laplace argument (default: number of rows)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) {
      const hcrm::RunConfig cfg = resolve(fit, fit_flags);
      hcrm::Corpus corpus = load_corpus(cfg);
      hcrm::split_train_test(corpus, cfg.p_train, cfg.sampler.seed);
      hcrm::run_fit(cfg, corpus, &std::cout);
      return 0;
    }
    if (eval->parsed()) {
      const hcrm::RunConfig cfg = resolve(eval, eval_flags);
      const hcrm::Corpus corpus = load_corpus(cfg);
      if (cfg.out_dir.empty()) {
        hcrm::run_eval(cfg, corpus, p_grid, std::cout);
      } else {
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream csv(cfg.out_dir + "/perplexity.csv");
        hcrm::run_eval(cfg, corpus, p_grid, csv);
      }
      return 0;
    }
    if (verify->parsed()) {
      if (quick) {
        vopt.ratio_states = 50;
        vopt.laplace_draws = 10000;
        vopt.prop1_draws = 10000;
        vopt.eq5_budget = 2000;
      }
      bool all_pass = true;
      for (const hcrm::CheckResult& c : hcrm::run_verify(vopt)) {
        std::cout << (c.pass ? "PASS" : "FAIL") << " " << c.name << ": " << c.detail << "\n";
        all_pass = all_pass && c.pass;
      }
      return all_pass ? 0 : 1;
    }
    if (pmf->parsed()) {
      hcrm::LevySpec spec = hcrm::LevySpec::gamma(1.0);
      if (pmf_base == "ggp") spec = hcrm::LevySpec::generalized_gamma(pmf_d, 1.0);
      else if (pmf_base == "sggp")
        spec = hcrm::LevySpec::sum_generalized_gamma(hcrm::RunConfig::parse_components(pmf_sggp));
      else if (pmf_base != "gamma")
        throw hcrm::ConfigError("pmf: unknown base family " + pmf_base);
      const auto rows = parse_matrix(pmf_matrix);
      const double t = pmf_t > 0.0 ? pmf_t : static_cast<double>(rows.size());
      std::cout << hcrm::run_pmf(pmf_kind, spec, pmf_theta, t, rows) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
