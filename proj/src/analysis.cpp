#include "affdec/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace affdec {

NeighborMetric parse_neighbor_metric(std::string_view s) {
  if (s == "offset") return NeighborMetric::offset;
  if (s == "cosine") return NeighborMetric::cosine;
  throw std::invalid_argument("unknown neighbor metric \"" + std::string(s) +
                              "\" (expected offset or cosine)");
}

namespace {

double cos_sim(const double* a, const double* b, std::size_t n) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> cosine_scores(int emotion, OffsetRole role,
                                  const TransformerParams& params,
                                  const ModelConfig& config) {
  // Reuse the offset call for its mode and range checks.
  (void)emotion_logit_offset(emotion, role, params, config);
  const char* g = role == OffsetRole::unified   ? "emo.g"
                  : role == OffsetRole::speaker ? "emo.g_s"
                                                : "emo.g_l";
  const char* v = role == OffsetRole::unified   ? "emo.v"
                  : role == OffsetRole::speaker ? "emo.v_s"
                                                : "emo.v_l";
  const Tensor& G = params.get(g);
  const Tensor& V = params.get(v);
  const std::size_t de = G.cols();
  const double* ge = G.values().data() + static_cast<std::size_t>(emotion) * de;
  std::vector<double> out(V.rows());
  for (std::size_t w = 0; w < V.rows(); ++w)
    out[w] = cos_sim(V.values().data() + w * de, ge, de);
  return out;
}

}  // namespace

std::vector<Neighbor> nearest_neighbors(int emotion, OffsetRole role, int k,
                                        const TransformerParams& params,
                                        const ModelConfig& config,
                                        const Vocab& vocab,
                                        NeighborMetric metric) {
  if (k < 0) throw std::invalid_argument("nearest_neighbors: k must be >= 0");
  const std::vector<double> scores =
      metric == NeighborMetric::offset
          ? emotion_logit_offset(emotion, role, params, config)
          : cosine_scores(emotion, role, params, config);
  if (scores.size() != vocab.size())
    throw std::invalid_argument("nearest_neighbors: vocab does not match model");
  std::vector<int> ids;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (!vocab.is_special(i)) ids.push_back(i);
  const auto take = std::min(ids.size(), static_cast<std::size_t>(k));
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take),
                    ids.end(), [&](int a, int b) {
                      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                    });
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < take; ++i)
    out.push_back({ids[i], vocab.token(ids[i]), scores[ids[i]]});
  return out;
}

double offset_divergence(int emotion, const TransformerParams& params,
                         const ModelConfig& config) {
  if (!uses_dual_offset(config.mode))
    throw ModeError("offset divergence requires mode ad_de or adm, model is " +
                    to_string(config.mode));
  const auto s = emotion_logit_offset(emotion, OffsetRole::speaker, params, config);
  const auto l = emotion_logit_offset(emotion, OffsetRole::listener, params, config);
  return 1.0 - cos_sim(s.data(), l.data(), s.size());
}

}  // namespace affdec
