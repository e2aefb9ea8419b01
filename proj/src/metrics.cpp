#include "affdec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace affdec {

// ---- perplexity --------------------------------------------------------------

double perplexity(const TransformerParams& params, const ModelConfig& config,
                  const std::vector<LinearizedSession>& sessions,
                  PplTokens which) {
  NoGradGuard no_grad;
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& lin : sessions) {
    const std::size_t T = lin.size();
    std::vector<int> targets(T, 0);
    std::vector<std::uint8_t> mask(T, 0);
    std::size_t here = 0;
    for (std::size_t t = 0; t + 1 < T; ++t) {
      const bool ok =
          lin.loss_mask[t + 1] &&
          (which == PplTokens::all ||
           lin.state_ids[t + 1] == state_id(Role::listener));
      if (!ok) continue;
      targets[t] = lin.token_ids[t + 1];
      mask[t] = 1;
      ++here;
    }
    if (here == 0) continue;
    const Tensor logits = forward(lin, lin.emotion, params, config);
    nll += cross_entropy(logits, targets, mask, Reduction::sum).item();
    count += here;
  }
  if (count == 0)
    throw std::invalid_argument("perplexity: no tokens to score");
  return std::exp(nll / static_cast<double>(count));
}

// ---- BLEU ----------------------------------------------------------------------

BleuSmoothing parse_bleu_smoothing(std::string_view s) {
  if (s == "none") return BleuSmoothing::none;
  if (s == "add1") return BleuSmoothing::add1;
  throw std::invalid_argument("unknown BLEU smoothing \"" + std::string(s) +
                              "\" (expected none or add1)");
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Tokens& toks, std::size_t n) {
  NgramCounts counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[Tokens(toks.begin() + static_cast<std::ptrdiff_t>(i),
                    toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

BleuResult bleu_detail(const std::vector<Tokens>& hyps,
                       const std::vector<Tokens>& refs, int max_n,
                       BleuSmoothing smoothing) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument("bleu: hypothesis and reference counts differ");
  if (hyps.empty()) throw std::invalid_argument("bleu: empty corpus");
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");

  BleuResult r;
  std::vector<std::size_t> matches(static_cast<std::size_t>(max_n), 0);
  std::vector<std::size_t> totals(static_cast<std::size_t>(max_n), 0);
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    r.hyp_length += hyps[i].size();
    r.ref_length += refs[i].size();
    for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n) {
      const auto h = count_ngrams(hyps[i], n);
      const auto g = count_ngrams(refs[i], n);
      for (const auto& [gram, c] : h) {
        totals[n - 1] += c;
        const auto it = g.find(gram);
        if (it != g.end()) matches[n - 1] += std::min(c, it->second);
      }
    }
  }

  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n) {
    double p = 0.0;
    const auto m = static_cast<double>(matches[n - 1]);
    const auto t = static_cast<double>(totals[n - 1]);
    if (n >= 2 && smoothing == BleuSmoothing::add1) {
      p = (m + 1.0) / (t + 1.0);
    } else if (t > 0) {
      p = m / t;
    }
    r.precisions.push_back(p);
    if (p <= 0.0) zero = true;
    else log_sum += std::log(p);
  }
  if (r.hyp_length == 0) {
    r.brevity_penalty = 0.0;
  } else if (r.hyp_length > r.ref_length) {
    r.brevity_penalty = 1.0;
  } else {
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.ref_length) /
                                           static_cast<double>(r.hyp_length));
  }
  r.score = zero ? 0.0
                 : r.brevity_penalty * std::exp(log_sum / static_cast<double>(max_n));
  return r;
}

double bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
            int max_n, BleuSmoothing smoothing) {
  return bleu_detail(hyps, refs, max_n, smoothing).score;
}

// ---- word vectors ----------------------------------------------------------------

void WordVectors::add(const std::string& token, std::vector<double> vec) {
  if (vec.empty()) throw std::invalid_argument("WordVectors: empty vector");
  if (dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_)
    throw std::invalid_argument("WordVectors: vector for \"" + token +
                                "\" has dimension " + std::to_string(vec.size()) +
                                ", expected " + std::to_string(dim_));
  vectors_[token] = std::move(vec);
}

const std::vector<double>* WordVectors::find(const std::string& token) const {
  const auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

WordVectors WordVectors::read(std::istream& in) {
  WordVectors wv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> vec;
    std::string field;
    while (ss >> field) {
      try {
        vec.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw std::runtime_error("word vectors line " + std::to_string(lineno) +
                                 ": bad number \"" + field + "\"");
      }
    }
    if (vec.empty())
      throw std::runtime_error("word vectors line " + std::to_string(lineno) +
                               ": no values");
    wv.add(token, std::move(vec));
  }
  if (wv.size() == 0) throw std::runtime_error("word vectors: no entries");
  return wv;
}

WordVectors WordVectors::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word vectors " + path);
  return read(in);
}

GreedyDirection parse_greedy_direction(std::string_view s) {
  if (s == "both") return GreedyDirection::both;
  if (s == "hyp2ref") return GreedyDirection::hyp2ref;
  throw std::invalid_argument("unknown greedy direction \"" + std::string(s) +
                              "\" (expected both or hyp2ref)");
}

std::optional<double> cosine(const std::vector<double>& a,
                             const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

std::vector<const std::vector<double>*> lookup(const Tokens& toks,
                                               const WordVectors& wv) {
  std::vector<const std::vector<double>*> out;
  for (const auto& t : toks)
    if (const auto* v = wv.find(t)) out.push_back(v);
  return out;
}

double directed_greedy(const std::vector<const std::vector<double>*>& from,
                       const std::vector<const std::vector<double>*>& to) {
  double total = 0.0;
  for (const auto* a : from) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto* b : to) best = std::max(best, cosine(*a, *b).value_or(0.0));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

std::vector<double> extrema(const std::vector<const std::vector<double>*>& vs,
                            std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  for (std::size_t d = 0; d < dim; ++d) {
    for (const auto* v : vs) {
      const double x = (*v)[d];
      const double ax = std::abs(x), ab = std::abs(out[d]);
      if (ax > ab || (ax == ab && x > out[d])) out[d] = x;
    }
  }
  return out;
}

}  // namespace

std::optional<double> bow_average(const EvalPair& pair, const WordVectors& wv) {
  const auto h = lookup(pair.hypothesis, wv);
  const auto r = lookup(pair.reference, wv);
  if (h.empty() || r.empty()) return std::nullopt;
  auto mean = [&](const auto& vs) {
    std::vector<double> m(wv.dim(), 0.0);
    for (const auto* v : vs)
      for (std::size_t d = 0; d < m.size(); ++d) m[d] += (*v)[d];
    for (double& x : m) x /= static_cast<double>(vs.size());
    return m;
  };
  return cosine(mean(h), mean(r));
}

std::optional<double> bow_greedy(const EvalPair& pair, const WordVectors& wv,
                                 GreedyDirection direction) {
  const auto h = lookup(pair.hypothesis, wv);
  const auto r = lookup(pair.reference, wv);
  if (h.empty() || r.empty()) return std::nullopt;
  const double forward = directed_greedy(h, r);
  if (direction == GreedyDirection::hyp2ref) return forward;
  return 0.5 * (forward + directed_greedy(r, h));
}

std::optional<double> bow_extreme(const EvalPair& pair, const WordVectors& wv) {
  const auto h = lookup(pair.hypothesis, wv);
  const auto r = lookup(pair.reference, wv);
  if (h.empty() || r.empty()) return std::nullopt;
  return cosine(extrema(h, wv.dim()), extrema(r, wv.dim()));
}

// ---- DIST-n --------------------------------------------------------------------

std::optional<double> dist_n(const std::vector<Tokens>& outputs, int n) {
  if (n < 1) throw std::invalid_argument("dist_n: n must be >= 1");
  std::set<Tokens> distinct;
  std::size_t total = 0;
  for (const auto& o : outputs) {
    for (const auto& [gram, c] : count_ngrams(o, static_cast<std::size_t>(n))) {
      distinct.insert(gram);
      total += c;
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

// ---- report --------------------------------------------------------------------

MetricReport evaluate_corpus(const std::vector<Tokens>& hyps,
                             const std::vector<Tokens>& refs,
                             const WordVectors& vectors,
                             const MetricOptions& options) {
  MetricReport rep;
  rep.n_pairs = hyps.size();
  rep.bleu = bleu(hyps, refs, 4, options.smoothing);
  double g = 0, a = 0, e = 0;
  std::size_t ng = 0, na = 0, ne = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const EvalPair pair{hyps[i], refs[i]};
    const auto sg = bow_greedy(pair, vectors, options.greedy_direction);
    const auto sa = bow_average(pair, vectors);
    const auto se = bow_extreme(pair, vectors);
    if (sg) g += *sg, ++ng;
    if (sa) a += *sa, ++na;
    if (se) e += *se, ++ne;
    if (!sg || !sa || !se) ++rep.n_undefined_bow;
  }
  if (ng) rep.bow_g = g / static_cast<double>(ng);
  if (na) rep.bow_a = a / static_cast<double>(na);
  if (ne) rep.bow_e = e / static_cast<double>(ne);
  rep.dist1 = dist_n(hyps, 1);
  rep.dist2 = dist_n(hyps, 2);
  return rep;
}

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

}  // namespace affdec
