#pragma once

// Decoder-only transformer with switchable emotion heads.
//
// Input at position t is E_w[token] + E_p[t] + E_s[state]. The backbone is a
// stack of pre-norm blocks followed by a final layer norm; h_t is taken
// after that norm. Next-token logits are W·h_t plus, depending on the mode:
//   ad      V·g(e) at every position
//   ad_de   V_S·g_S(e) where state_t = S, V_L·g_L(e) where state_t = L
//   adm     as ad_de, plus a session-level emotion classifier C·h_last
//   mtl     no offset, plus the classifier
//   prepend no offset; the emotion enters as a leading EMO token
//   baseline no offset

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "affdec/gradcheck.hpp"
#include "affdec/random.hpp"
#include "affdec/tensor.hpp"
#include "affdec/tokenizer.hpp"
#include "affdec/types.hpp"

namespace affdec {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 2;
  int d_model = 64;
  int d_ff = 256;
  int max_seq_len = 128;
  int vocab_size = 0;
  int n_emotions = 32;
  int d_emotion = 32;
  Mode mode = Mode::ad;
  double mtl_weight = 1.0;
  double dropout_p = 0.1;
  bool tie_embeddings = false;

  void validate() const;
};

class ModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Named learnable tensors. Exactly the set demanded by the config's mode is
// present; iteration order is creation order.
class TransformerParams {
 public:
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  void add(std::string name, Tensor t);
  void erase(const std::string& name);

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  // Deep copy; the copy tracks gradients.
  TransformerParams clone() const;
  void zero_grad();

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Xavier-uniform matrices, zero biases, unit layer-norm gains, N(0, 0.02)
// embedding and emotion tables.
TransformerParams init_params(const ModelConfig& config, std::uint64_t seed);

struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;  // required when train && dropout_p > 0
};

struct ForwardOutput {
  Tensor hidden;  // seq_len x d_model, after the final layer norm
  Tensor logits;  // seq_len x vocab_size
};

ForwardOutput forward_full(const LinearizedSession& lin, int emotion,
                           const TransformerParams& params,
                           const ModelConfig& config,
                           const ForwardOptions& options = {});

Tensor forward(const LinearizedSession& lin, int emotion,
               const TransformerParams& params, const ModelConfig& config,
               const ForwardOptions& options = {});

enum class OffsetRole { unified, speaker, listener };

OffsetRole parse_offset_role(std::string_view s);

// The emotion term added to the logits: V·g(e) (unified, mode ad) or
// V_role·g_role(e) (speaker/listener, modes ad_de and adm).
std::vector<double> emotion_logit_offset(int emotion, OffsetRole role,
                                         const TransformerParams& params,
                                         const ModelConfig& config);

// softmax(C·h_last) over emotions, h_last being the final position.
std::vector<double> classify_emotion(const LinearizedSession& lin,
                                     const TransformerParams& params,
                                     const ModelConfig& config);

// A padded batch. Every item has the same length; positions at or after
// lengths[i] hold PAD with a false loss mask.
struct Batch {
  std::vector<LinearizedSession> items;
  std::vector<std::size_t> lengths;
};

struct LossParts {
  Tensor total;
  Tensor lm;                    // mean masked next-token cross-entropy
  std::optional<Tensor> emotion;  // mean classification cross-entropy
};

LossParts loss_parts(const Batch& batch, const TransformerParams& params,
                     const ModelConfig& config,
                     const ForwardOptions& options = {});

Tensor loss(const Batch& batch, const TransformerParams& params,
            const ModelConfig& config, const ForwardOptions& options = {});

}  // namespace affdec
