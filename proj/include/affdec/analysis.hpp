#pragma once

// Probes of the learned emotion embeddings.

#include <string>
#include <string_view>
#include <vector>

#include "affdec/model.hpp"
#include "affdec/tokenizer.hpp"

namespace affdec {

enum class NeighborMetric { offset, cosine };

NeighborMetric parse_neighbor_metric(std::string_view s);

struct Neighbor {
  int id = 0;
  std::string word;
  double score = 0.0;
};

// Words ranked by how strongly emotion `emotion` pushes them up.
// `offset` scores word w by (V_role·g_role(e))_w, `cosine` by the cosine of
// V_role[w] with g_role(e). Special tokens are skipped; ties go to the
// lower vocab id. Throws ModeError when the model has no table for `role`.
std::vector<Neighbor> nearest_neighbors(int emotion, OffsetRole role, int k,
                                        const TransformerParams& params,
                                        const ModelConfig& config,
                                        const Vocab& vocab,
                                        NeighborMetric metric = NeighborMetric::offset);

// 1 - cos(V_S·g_S(e), V_L·g_L(e)). Modes ad_de and adm only. A zero offset
// on either side counts as divergence 1.
double offset_divergence(int emotion, const TransformerParams& params,
                         const ModelConfig& config);

}  // namespace affdec
