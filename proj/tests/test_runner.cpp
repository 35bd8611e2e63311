#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hcrm/runner.hpp"

using namespace hcrm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config files parse, echo, and round-trip") {
  const fs::path dir = fresh_dir("hcrm_cfg_test");
  {
    std::ofstream os(dir / "run.cfg");
    os << "# comment\nbase = ggp\nd = 0.25\ntheta = 1.5\nseed = 99\n"
       << "iterations = 50\nburn_in = 10\nthin = 2\np_train = 0.6\n";
  }
  RunConfig cfg;
  cfg.load_file((dir / "run.cfg").string());
  CHECK(cfg.base_family == "ggp");
  CHECK(cfg.discount == 0.25);
  CHECK(cfg.theta == 1.5);
  CHECK(cfg.sampler.seed == 99);
  CHECK(cfg.sampler.iterations == 50);
  CHECK(cfg.p_train == 0.6);

  std::ostringstream echo1;
  cfg.echo(echo1);
  {
    std::ofstream os(dir / "echo.cfg");
    os << echo1.str();
  }
  RunConfig reloaded;
  reloaded.load_file((dir / "echo.cfg").string());
  std::ostringstream echo2;
  reloaded.echo(echo2);
  CHECK(echo1.str() == echo2.str());

  CHECK_THROWS_AS(cfg.set("bogus", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.set("theta", "abc"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_components("0.5"), ConfigError);
  CHECK(RunConfig::parse_components("0.5:0.1,1.5:0.3").size() == 2);
  RunConfig sggp;
  sggp.base_family = "sggp";
  CHECK_THROWS_AS(sggp.base_spec(), ConfigError);
  RunConfig bad_obj;
  bad_obj.object_family = "ggp";
  CHECK_THROWS_AS(bad_obj.object_spec(), ConfigError);
}

TEST_CASE("zero-iteration fits write only the initial checkpoint") {
  const SynthCorpus synth = synth_corpus(2, 6, 4, 8, 0.5, 1.0, 3);
  RunConfig cfg;
  cfg.sampler.iterations = 0;
  cfg.sampler.seed = 5;
  cfg.out_dir = fresh_dir("hcrm_fit_zero").string();
  run_fit(cfg, synth.corpus);
  CHECK(fs::exists(fs::path(cfg.out_dir) / "checkpoint.txt"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "config.txt"));
  CHECK_FALSE(fs::exists(fs::path(cfg.out_dir) / "beta.csv"));
}

TEST_CASE("rerunning a fit from its echoed config reproduces outputs byte-identically") {
  const SynthCorpus synth = synth_corpus(2, 8, 6, 12, 0.5, 1.0, 21);
  RunConfig cfg;
  cfg.sampler.iterations = 40;
  cfg.sampler.burn_in = 10;
  cfg.sampler.thinning = 3;
  cfg.sampler.seed = 77;
  cfg.p_train = 0.8;
  cfg.out_dir = fresh_dir("hcrm_fit_a").string();

  Corpus corpus = synth.corpus;
  split_train_test(corpus, cfg.p_train, cfg.sampler.seed);
  run_fit(cfg, corpus);

  RunConfig cfg2;
  cfg2.load_file(cfg.out_dir + "/config.txt");
  cfg2.out_dir = fresh_dir("hcrm_fit_b").string();
  Corpus corpus2 = synth.corpus;
  split_train_test(corpus2, cfg2.p_train, cfg2.sampler.seed);
  run_fit(cfg2, corpus2);

  for (const char* name : {"progress.jsonl", "checkpoint.txt", "beta.csv", "tau.csv",
                           "top_words.txt"})
    CHECK(slurp(fs::path(cfg.out_dir) / name) == slurp(fs::path(cfg2.out_dir) / name));
}

TEST_CASE("evaluation beats the unigram baseline on an easy synthetic corpus") {
  const SynthCorpus synth = synth_corpus(2, 6, 20, 30, 0.3, 0.5, 11);
  RunConfig cfg;
  cfg.sampler.iterations = 150;
  cfg.sampler.burn_in = 50;
  cfg.sampler.thinning = 5;
  cfg.sampler.seed = 2;
  std::ostringstream csv;
  run_eval(cfg, synth.corpus, {0.5}, csv);
  std::istringstream lines(csv.str());
  std::string header, model_line, unigram_line;
  std::getline(lines, header);
  std::getline(lines, model_line);
  std::getline(lines, unigram_line);
  CHECK(header == "p_train,model,perplexity");
  auto ppx_of = [](const std::string& line) {
    const std::size_t comma = line.rfind(',');
    return std::stod(line.substr(comma + 1));
  };
  CHECK(model_line.find(",gamma,") != std::string::npos);
  CHECK(unigram_line.find(",unigram,") != std::string::npos);
  CHECK(ppx_of(model_line) <= ppx_of(unigram_line));

  // identical config, identical bytes
  std::ostringstream csv2;
  run_eval(cfg, synth.corpus, {0.5}, csv2);
  CHECK(csv.str() == csv2.str());
}

TEST_CASE("pmf strings carry 15 significant digits") {
  CHECK(run_pmf("crm", LevySpec::gamma(1.0), 1.0, 1.0, {{1}}) == "-1.38629436111989");
  CHECK(run_pmf("crm", LevySpec::gamma(1.0), 1.0, 2.0, {{}}) ==
        fmt_g(-psi(LevySpec::gamma(1.0), 2.0), 15));
  CHECK_THROWS(run_pmf("crm", LevySpec::gamma(1.0), 1.0, 1.0, {{0}, {0}}));
  CHECK_THROWS_AS(run_pmf("restaurant", LevySpec::gamma(1.0), 1.0, 1.0, {{1}, {1}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_pmf("nope", LevySpec::gamma(1.0), 1.0, 1.0, {{1}}),
                  std::invalid_argument);
}

TEST_CASE("the sign-flip fault hook makes the Bernstein check fail") {
  CHECK(check_bernstein_signs(false).pass);
  CHECK_FALSE(check_bernstein_signs(true).pass);
}

TEST_CASE("quick verification checks pass at reduced budgets") {
  CHECK(check_derivatives().pass);
  CHECK(check_ratio_identity(20, 3).pass);
  CHECK(check_laplace_functional(LevySpec::gamma(1.0), 5000, 1e-6, 4).pass);
}
