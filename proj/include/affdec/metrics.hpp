#pragma once

// Automatic response metrics: perplexity, corpus BLEU, the three
// bag-of-words embedding similarities and DIST-n.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "affdec/model.hpp"
#include "affdec/tokenizer.hpp"

namespace affdec {

using Tokens = std::vector<std::string>;

// ---- perplexity --------------------------------------------------------------

enum class PplTokens { listener, all };

// exp(mean next-token NLL). `listener` counts only targets inside listener
// utterances (their words and EOU). Throws if no target qualifies.
double perplexity(const TransformerParams& params, const ModelConfig& config,
                  const std::vector<LinearizedSession>& sessions,
                  PplTokens which = PplTokens::listener);

// ---- BLEU --------------------------------------------------------------------

enum class BleuSmoothing { none, add1 };

BleuSmoothing parse_bleu_smoothing(std::string_view s);

struct BleuResult {
  double score = 0.0;
  std::vector<double> precisions;  // per n, after smoothing
  double brevity_penalty = 0.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

// Corpus-level BLEU with clipped n-gram counts. add1 adds one to numerator
// and denominator of every n >= 2 precision.
BleuResult bleu_detail(const std::vector<Tokens>& hyps,
                       const std::vector<Tokens>& refs, int max_n = 4,
                       BleuSmoothing smoothing = BleuSmoothing::add1);

double bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
            int max_n = 4, BleuSmoothing smoothing = BleuSmoothing::add1);

// ---- embedding similarities ----------------------------------------------------

class WordVectors {
 public:
  WordVectors() = default;
  explicit WordVectors(std::size_t dim) : dim_(dim) {}

  // "token v1 v2 ... vd" per line.
  static WordVectors load(const std::string& path);
  static WordVectors read(std::istream& in);

  void add(const std::string& token, std::vector<double> vec);
  const std::vector<double>* find(const std::string& token) const;
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

struct EvalPair {
  Tokens hypothesis;
  Tokens reference;
};

enum class GreedyDirection { both, hyp2ref };

GreedyDirection parse_greedy_direction(std::string_view s);

// Each returns nullopt when either side has no in-vocabulary token (or a
// cosine is taken against a zero vector).
std::optional<double> bow_average(const EvalPair& pair, const WordVectors& wv);
std::optional<double> bow_greedy(const EvalPair& pair, const WordVectors& wv,
                                 GreedyDirection direction = GreedyDirection::both);
std::optional<double> bow_extreme(const EvalPair& pair, const WordVectors& wv);

std::optional<double> cosine(const std::vector<double>& a,
                             const std::vector<double>& b);

// ---- diversity -----------------------------------------------------------------

// |distinct n-grams| / |n-gram occurrences| over the whole corpus.
std::optional<double> dist_n(const std::vector<Tokens>& outputs, int n);

// ---- corpus report ---------------------------------------------------------------

struct MetricReport {
  double bleu = 0.0;
  std::optional<double> bow_g, bow_a, bow_e;  // means over defined pairs
  std::optional<double> dist1, dist2;
  std::size_t n_pairs = 0;
  std::size_t n_undefined_bow = 0;
};

struct MetricOptions {
  BleuSmoothing smoothing = BleuSmoothing::add1;
  GreedyDirection greedy_direction = GreedyDirection::both;
};

MetricReport evaluate_corpus(const std::vector<Tokens>& hyps,
                             const std::vector<Tokens>& refs,
                             const WordVectors& vectors,
                             const MetricOptions& options = {});

// Rounds to three decimals, the reporting precision of the score table.
double round3(double v);

}  // namespace affdec
