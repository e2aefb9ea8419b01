#include "affdec/model.hpp"

#include <cmath>

namespace affdec {

namespace {

std::string layer_name(int l, const char* suffix) {
  return "h" + std::to_string(l) + "." + suffix;
}

Tensor xavier(Rng& rng, std::size_t rows, std::size_t cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = uniform(rng, -limit, limit);
  return Tensor::from({rows, cols}, std::move(v), true);
}

Tensor gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = stddev * normal(rng);
  return Tensor::from({rows, cols}, std::move(v), true);
}

Tensor norm_affine(const Tensor& x, const TransformerParams& p,
                   const std::string& prefix) {
  return add(mul(layer_norm(x), p.get(prefix + ".g")), p.get(prefix + ".b"));
}

void check_emotion(int emotion, const ModelConfig& config) {
  if (emotion < 0 || emotion >= config.n_emotions)
    throw std::out_of_range("emotion id " + std::to_string(emotion) +
                            " outside [0, " + std::to_string(config.n_emotions) +
                            ")");
}

Tensor offset_row(int emotion, const TransformerParams& p, const char* table,
                  const char* proj) {
  const int ids[] = {emotion};
  return matmul(embedding_lookup(p.get(table), ids), p.get(proj), true);
}

}  // namespace

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("ModelConfig: ") + what);
  };
  require(n_layers >= 1, "n_layers must be >= 1");
  require(n_heads >= 1, "n_heads must be >= 1");
  require(d_model >= 1 && d_model % n_heads == 0,
          "d_model must be a positive multiple of n_heads");
  require(d_ff >= 1, "d_ff must be >= 1");
  require(max_seq_len >= 1, "max_seq_len must be >= 1");
  require(vocab_size >= 1, "vocab_size must be >= 1");
  require(n_emotions >= 1, "n_emotions must be >= 1");
  require(d_emotion >= 1, "d_emotion must be >= 1");
  require(mtl_weight >= 0.0, "mtl_weight must be >= 0");
  require(dropout_p >= 0.0 && dropout_p < 1.0, "dropout_p must be in [0, 1)");
}

// ---- TransformerParams -------------------------------------------------------

const Tensor& TransformerParams::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end())
    throw ModeError("parameter \"" + name + "\" is not present in this model");
  return entries_[it->second].tensor;
}

Tensor& TransformerParams::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

void TransformerParams::add(std::string name, Tensor t) {
  if (contains(name))
    throw std::invalid_argument("duplicate parameter \"" + name + "\"");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(t)});
}

void TransformerParams::erase(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) return;
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(it->second));
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i)
    index_.emplace(entries_[i].name, i);
}

std::vector<Tensor> TransformerParams::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

std::size_t TransformerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

bool TransformerParams::all_finite() const {
  for (const auto& e : entries_)
    for (double v : e.tensor.values())
      if (!std::isfinite(v)) return false;
  return true;
}

TransformerParams TransformerParams::clone() const {
  TransformerParams out;
  for (const auto& e : entries_) out.add(e.name, e.tensor.detach(true));
  return out;
}

void TransformerParams::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

TransformerParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const auto V = static_cast<std::size_t>(config.vocab_size);
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto dff = static_cast<std::size_t>(config.d_ff);
  const auto T = static_cast<std::size_t>(config.max_seq_len);
  const auto E = static_cast<std::size_t>(config.n_emotions);
  const auto de = static_cast<std::size_t>(config.d_emotion);
  constexpr double kEmbStd = 0.02;

  TransformerParams p;
  p.add("tok_emb", gaussian(rng, V, d, kEmbStd));
  p.add("pos_emb", gaussian(rng, T, d, kEmbStd));
  p.add("state_emb", gaussian(rng, kNumRoles, d, kEmbStd));
  for (int l = 0; l < config.n_layers; ++l) {
    p.add(layer_name(l, "ln1.g"), Tensor::full({d}, 1.0, true));
    p.add(layer_name(l, "ln1.b"), Tensor::zeros({d}, true));
    p.add(layer_name(l, "attn.w_qkv"), xavier(rng, d, 3 * d));
    p.add(layer_name(l, "attn.b_qkv"), Tensor::zeros({3 * d}, true));
    p.add(layer_name(l, "attn.w_o"), xavier(rng, d, d));
    p.add(layer_name(l, "attn.b_o"), Tensor::zeros({d}, true));
    p.add(layer_name(l, "ln2.g"), Tensor::full({d}, 1.0, true));
    p.add(layer_name(l, "ln2.b"), Tensor::zeros({d}, true));
    p.add(layer_name(l, "ff.w1"), xavier(rng, d, dff));
    p.add(layer_name(l, "ff.b1"), Tensor::zeros({dff}, true));
    p.add(layer_name(l, "ff.w2"), xavier(rng, dff, d));
    p.add(layer_name(l, "ff.b2"), Tensor::zeros({d}, true));
  }
  p.add("ln_f.g", Tensor::full({d}, 1.0, true));
  p.add("ln_f.b", Tensor::zeros({d}, true));
  if (!config.tie_embeddings) p.add("lm_head", xavier(rng, V, d));
  if (uses_unified_offset(config.mode)) {
    p.add("emo.g", gaussian(rng, E, de, kEmbStd));
    p.add("emo.v", xavier(rng, V, de));
  }
  if (uses_dual_offset(config.mode)) {
    p.add("emo.g_s", gaussian(rng, E, de, kEmbStd));
    p.add("emo.v_s", xavier(rng, V, de));
    p.add("emo.g_l", gaussian(rng, E, de, kEmbStd));
    p.add("emo.v_l", xavier(rng, V, de));
  }
  if (uses_classifier(config.mode)) p.add("cls.w", xavier(rng, E, d));
  return p;
}

// ---- forward -----------------------------------------------------------------

ForwardOutput forward_full(const LinearizedSession& lin, int emotion,
                           const TransformerParams& p,
                           const ModelConfig& config,
                           const ForwardOptions& options) {
  const std::size_t T = lin.size();
  if (T == 0) throw std::invalid_argument("forward: empty sequence");
  if (T > static_cast<std::size_t>(config.max_seq_len))
    throw SequenceTooLong("forward: sequence of " + std::to_string(T) +
                          " exceeds max_seq_len " +
                          std::to_string(config.max_seq_len));
  if (lin.state_ids.size() != T || lin.position_ids.size() != T)
    throw DimensionError("forward", "token/state/position streams differ");
  check_emotion(emotion, config);

  const double p_drop = config.dropout_p;
  auto drop = [&](const Tensor& x) {
    return dropout(x, p_drop, options.train, options.rng);
  };

  Tensor x = add(add(embedding_lookup(p.get("tok_emb"), lin.token_ids),
                     embedding_lookup(p.get("pos_emb"), lin.position_ids)),
                 embedding_lookup(p.get("state_emb"), lin.state_ids));
  x = drop(x);

  const auto d = static_cast<std::size_t>(config.d_model);
  const auto n_heads = static_cast<std::size_t>(config.n_heads);
  const std::size_t hd = d / n_heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int l = 0; l < config.n_layers; ++l) {
    const Tensor a = norm_affine(x, p, layer_name(l, "ln1"));
    const Tensor qkv = add(matmul(a, p.get(layer_name(l, "attn.w_qkv"))),
                           p.get(layer_name(l, "attn.b_qkv")));
    std::vector<Tensor> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const Tensor q = slice(qkv, 1, h * hd, (h + 1) * hd);
      const Tensor k = slice(qkv, 1, d + h * hd, d + (h + 1) * hd);
      const Tensor v = slice(qkv, 1, 2 * d + h * hd, 2 * d + (h + 1) * hd);
      Tensor att = softmax(causal_mask_fill(scale(matmul(q, k, true), att_scale)));
      heads.push_back(matmul(drop(att), v));
    }
    Tensor o = add(matmul(concat(heads, 1), p.get(layer_name(l, "attn.w_o"))),
                   p.get(layer_name(l, "attn.b_o")));
    x = add(x, drop(o));

    const Tensor a2 = norm_affine(x, p, layer_name(l, "ln2"));
    Tensor f = gelu(add(matmul(a2, p.get(layer_name(l, "ff.w1"))),
                        p.get(layer_name(l, "ff.b1"))));
    f = add(matmul(f, p.get(layer_name(l, "ff.w2"))), p.get(layer_name(l, "ff.b2")));
    x = add(x, drop(f));
  }
  Tensor h = norm_affine(x, p, "ln_f");

  const Tensor& head = config.tie_embeddings ? p.get("tok_emb") : p.get("lm_head");
  Tensor logits = matmul(h, head, true);
  if (uses_unified_offset(config.mode)) {
    logits = add(logits, offset_row(emotion, p, "emo.g", "emo.v"));
  } else if (uses_dual_offset(config.mode)) {
    const Tensor table = concat({offset_row(emotion, p, "emo.g_s", "emo.v_s"),
                                 offset_row(emotion, p, "emo.g_l", "emo.v_l")},
                                0);
    logits = add_indexed_rows(logits, table, lin.state_ids);
  }
  return {std::move(h), std::move(logits)};
}

Tensor forward(const LinearizedSession& lin, int emotion,
               const TransformerParams& params, const ModelConfig& config,
               const ForwardOptions& options) {
  return forward_full(lin, emotion, params, config, options).logits;
}

OffsetRole parse_offset_role(std::string_view s) {
  if (s == "S" || s == "speaker") return OffsetRole::speaker;
  if (s == "L" || s == "listener") return OffsetRole::listener;
  if (s == "unified") return OffsetRole::unified;
  throw std::invalid_argument("unknown role \"" + std::string(s) +
                              "\" (expected S, L or unified)");
}

std::vector<double> emotion_logit_offset(int emotion, OffsetRole role,
                                         const TransformerParams& params,
                                         const ModelConfig& config) {
  check_emotion(emotion, config);
  const char* table = nullptr;
  const char* proj = nullptr;
  if (role == OffsetRole::unified) {
    if (!uses_unified_offset(config.mode))
      throw ModeError("role 'unified' requires mode ad, model is " +
                      to_string(config.mode));
    table = "emo.g";
    proj = "emo.v";
  } else {
    if (!uses_dual_offset(config.mode))
      throw ModeError("roles S/L require mode ad_de or adm, model is " +
                      to_string(config.mode));
    const bool s = role == OffsetRole::speaker;
    table = s ? "emo.g_s" : "emo.g_l";
    proj = s ? "emo.v_s" : "emo.v_l";
  }
  NoGradGuard no_grad;
  const Tensor row = offset_row(emotion, params, table, proj);
  return {row.values().begin(), row.values().end()};
}

std::vector<double> classify_emotion(const LinearizedSession& lin,
                                     const TransformerParams& params,
                                     const ModelConfig& config) {
  if (!uses_classifier(config.mode))
    throw ModeError("classify_emotion requires mode mtl or adm, model is " +
                    to_string(config.mode));
  NoGradGuard no_grad;
  const Tensor h = forward_full(lin, lin.emotion, params, config).hidden;
  const Tensor last = slice(h, 0, h.rows() - 1, h.rows());
  const Tensor probs = softmax(matmul(last, params.get("cls.w"), true));
  return {probs.values().begin(), probs.values().end()};
}

// ---- loss ------------------------------------------------------------------------

LossParts loss_parts(const Batch& batch, const TransformerParams& params,
                     const ModelConfig& config, const ForwardOptions& options) {
  if (batch.items.empty()) throw std::invalid_argument("loss: empty batch");
  if (batch.lengths.size() != batch.items.size())
    throw std::invalid_argument("loss: lengths do not match items");

  std::vector<Tensor> token_losses;
  std::vector<Tensor> emotion_losses;
  std::size_t n_targets = 0;
  const bool classify = uses_classifier(config.mode);
  for (std::size_t b = 0; b < batch.items.size(); ++b) {
    const auto& lin = batch.items[b];
    const std::size_t len = batch.lengths[b];
    if (len == 0 || len > lin.size())
      throw std::invalid_argument("loss: bad sequence length");
    const ForwardOutput out = forward_full(lin, lin.emotion, params, config, options);

    const std::size_t T = lin.size();
    std::vector<int> targets(T, 0);
    std::vector<std::uint8_t> mask(T, 0);
    for (std::size_t t = 0; t + 1 < len; ++t) {
      targets[t] = lin.token_ids[t + 1];
      mask[t] = lin.loss_mask[t + 1];
      n_targets += mask[t];
    }
    token_losses.push_back(cross_entropy(out.logits, targets, mask, Reduction::sum));

    if (classify) {
      const Tensor last = slice(out.hidden, 0, len - 1, len);
      const Tensor logits = matmul(last, params.get("cls.w"), true);
      const int target[] = {lin.emotion};
      const std::uint8_t on[] = {1};
      emotion_losses.push_back(cross_entropy(logits, target, on));
    }
  }
  if (n_targets == 0) throw std::invalid_argument("loss: no target tokens in batch");

  LossParts parts;
  Tensor total_tokens = token_losses[0];
  for (std::size_t i = 1; i < token_losses.size(); ++i)
    total_tokens = add(total_tokens, token_losses[i]);
  parts.lm = scale(total_tokens, 1.0 / static_cast<double>(n_targets));
  parts.total = parts.lm;
  if (classify) {
    Tensor e = emotion_losses[0];
    for (std::size_t i = 1; i < emotion_losses.size(); ++i) e = add(e, emotion_losses[i]);
    parts.emotion = scale(e, 1.0 / static_cast<double>(emotion_losses.size()));
    parts.total = add(parts.lm, scale(*parts.emotion, config.mtl_weight));
  }
  return parts;
}

Tensor loss(const Batch& batch, const TransformerParams& params,
            const ModelConfig& config, const ForwardOptions& options) {
  return loss_parts(batch, params, config, options).total;
}

}  // namespace affdec
