#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcrm/rng.hpp"

namespace hcrm {

class CorpusFormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bag-of-words corpus with tokens expanded one entry per occurrence (the
// sampler seats a table per token). train_flag mirrors docs after a split.
struct Corpus {
  int W = 0;
  std::vector<std::string> vocab;             // may be empty if no vocab file
  std::vector<std::vector<int>> docs;         // token word indices, 0-based
  std::vector<std::vector<bool>> train_flag;  // same shape as docs

  std::size_t num_docs() const { return docs.size(); }
  std::int64_t num_tokens() const {
    std::int64_t n = 0;
    for (const auto& d : docs) n += static_cast<std::int64_t>(d.size());
    return n;
  }
};

// UCI bag-of-words: header lines D, W, NNZ, then NNZ lines "docID wordID
// count" with 1-based ids.
inline Corpus load_uci_bow(std::istream& docword, std::istream* vocab_stream = nullptr) {
  Corpus c;
  std::int64_t D = 0, NNZ = 0;
  long long w_ll = 0;
  if (!(docword >> D >> w_ll >> NNZ) || D < 0 || w_ll < 1 || NNZ < 0)
    throw CorpusFormatError("load_uci_bow: malformed header (expected D, W, NNZ)");
  c.W = static_cast<int>(w_ll);
  c.docs.assign(static_cast<std::size_t>(D), {});
  std::int64_t doc_id = 0, word_id = 0, count = 0, seen = 0;
  while (docword >> doc_id >> word_id >> count) {
    ++seen;
    if (seen > NNZ) throw CorpusFormatError("load_uci_bow: more triples than NNZ declares");
    if (doc_id < 1 || doc_id > D)
      throw CorpusFormatError("load_uci_bow: docID out of range at triple " + std::to_string(seen));
    if (word_id < 1 || word_id > c.W)
      throw CorpusFormatError("load_uci_bow: wordID out of range at triple " + std::to_string(seen));
    if (count < 1)
      throw CorpusFormatError("load_uci_bow: nonpositive count at triple " + std::to_string(seen));
    auto& doc = c.docs[static_cast<std::size_t>(doc_id - 1)];
    for (std::int64_t r = 0; r < count; ++r) doc.push_back(static_cast<int>(word_id - 1));
  }
  if (seen != NNZ)
    throw CorpusFormatError("load_uci_bow: NNZ declares " + std::to_string(NNZ) + " triples, found " +
                            std::to_string(seen));
  if (vocab_stream) {
    std::string line;
    while (std::getline(*vocab_stream, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      c.vocab.push_back(line);
    }
  }
  c.train_flag.clear();
  for (const auto& d : c.docs) c.train_flag.emplace_back(d.size(), true);
  return c;
}

inline Corpus load_uci_bow_files(const std::string& docword_path, const std::string& vocab_path = "") {
  std::ifstream dw(docword_path);
  if (!dw) throw CorpusFormatError("load_uci_bow: cannot open " + docword_path);
  if (vocab_path.empty()) return load_uci_bow(dw);
  std::ifstream vs(vocab_path);
  if (!vs) throw CorpusFormatError("load_uci_bow: cannot open " + vocab_path);
  return load_uci_bow(dw, &vs);
}

// Re-serializes a corpus as UCI triples (sorted by doc then word).
inline void serialize_uci_bow(const Corpus& c, std::ostream& out) {
  std::vector<std::string> triples;
  std::int64_t nnz = 0;
  std::ostringstream body;
  for (std::size_t i = 0; i < c.docs.size(); ++i) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(c.W), 0);
    for (int w : c.docs[i]) ++counts[static_cast<std::size_t>(w)];
    for (int w = 0; w < c.W; ++w)
      if (counts[static_cast<std::size_t>(w)] > 0) {
        body << (i + 1) << " " << (w + 1) << " " << counts[static_cast<std::size_t>(w)] << "\n";
        ++nnz;
      }
  }
  out << c.docs.size() << "\n" << c.W << "\n" << nnz << "\n" << body.str();
}

// Independent train/test coin per token, deterministic under the seed.
inline void split_train_test(Corpus& c, double p_train, std::uint64_t seed) {
  if (!(p_train >= 0.0 && p_train <= 1.0))
    throw std::invalid_argument("split_train_test: p_train must lie in [0, 1]");
  Rng rng(seed);
  c.train_flag.clear();
  for (const auto& d : c.docs) {
    std::vector<bool> flags(d.size());
    for (std::size_t l = 0; l < d.size(); ++l) flags[l] = rng.uniform01() < p_train;
    c.train_flag.push_back(std::move(flags));
  }
}

inline Corpus train_subset(const Corpus& c) {
  Corpus out;
  out.W = c.W;
  out.vocab = c.vocab;
  for (std::size_t i = 0; i < c.docs.size(); ++i) {
    std::vector<int> doc;
    for (std::size_t l = 0; l < c.docs[i].size(); ++l)
      if (c.train_flag[i][l]) doc.push_back(c.docs[i][l]);
    out.docs.push_back(std::move(doc));
    out.train_flag.emplace_back(out.docs.back().size(), true);
  }
  return out;
}

struct SynthCorpus {
  Corpus corpus;
  std::vector<std::vector<double>> tau;    // K x W ground truth topics
  std::vector<std::vector<double>> theta;  // doc x K mixture weights
};

// Dirichlet-mixture generator for acceptance fixtures.
inline SynthCorpus synth_corpus(int K, int W, int n_docs, int doc_len, double alpha_topic,
                                double alpha_doc, std::uint64_t seed) {
  if (K < 1 || W < K || n_docs < 0 || doc_len < 0)
    throw std::invalid_argument("synth_corpus: need 1 <= K <= W and nonnegative sizes");
  Rng rng(seed);
  auto dirichlet = [&](int dim, double alpha) {
    std::vector<double> x(static_cast<std::size_t>(dim));
    double tot = 0.0;
    for (double& v : x) {
      v = rng.gamma(alpha, 1.0);
      tot += v;
    }
    for (double& v : x) v /= tot;
    return x;
  };
  SynthCorpus out;
  out.corpus.W = W;
  for (int k = 0; k < K; ++k) out.tau.push_back(dirichlet(W, alpha_topic));
  auto draw_categorical = [&](const std::vector<double>& p) {
    const double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
  };
  for (int d = 0; d < n_docs; ++d) {
    const auto weights = dirichlet(K, alpha_doc);
    std::vector<int> doc(static_cast<std::size_t>(doc_len));
    for (int l = 0; l < doc_len; ++l) {
      const int k = draw_categorical(weights);
      doc[static_cast<std::size_t>(l)] = draw_categorical(out.tau[static_cast<std::size_t>(k)]);
    }
    out.theta.push_back(weights);
    out.corpus.docs.push_back(std::move(doc));
    out.corpus.train_flag.emplace_back(static_cast<std::size_t>(doc_len), true);
  }
  return out;
}

}  // namespace hcrm
