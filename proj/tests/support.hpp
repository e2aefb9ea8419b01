#pragma once

// Fixtures shared by the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "affdec/corpus.hpp"
#include "affdec/model.hpp"
#include "affdec/model_io.hpp"
#include "affdec/tokenizer.hpp"
#include "affdec/training.hpp"

namespace affdec::testing {

inline DialogueSession session(const std::string& emotion,
                               std::vector<std::string> texts) {
  DialogueSession s;
  s.emotion = EmotionRegistry::empdial().label(emotion);
  Role r = Role::speaker;
  for (auto& t : texts) {
    s.turns.push_back({r, std::move(t)});
    r = other(r);
  }
  return s;
}

// 2-layer model small enough for finite differences.
inline ModelConfig tiny_config(const Vocab& vocab, Mode mode, int d_model = 16) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = d_model;
  c.d_ff = 2 * d_model;
  c.d_emotion = 8;
  c.max_seq_len = 48;
  c.vocab_size = static_cast<int>(vocab.size());
  c.n_emotions = vocab.n_emotions();
  c.mode = mode;
  c.dropout_p = 0.0;
  return c;
}

// The default architecture, sized to a vocabulary.
inline ModelConfig toy_config(const Vocab& vocab, Mode mode) {
  ModelConfig c;
  c.vocab_size = static_cast<int>(vocab.size());
  c.n_emotions = vocab.n_emotions();
  c.mode = mode;
  return c;
}

inline Batch batch_of(const CorpusSplit& split, const Vocab& vocab, Mode mode,
                      std::size_t max_len = 48) {
  return pad_batch(linearize_split(split, vocab, mode, max_len));
}

inline bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i] == b[i]) || std::signbit(a[i]) != std::signbit(b[i])) return false;
  return true;
}

inline std::vector<double> values_of(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

// Short training run used by tests that need a model that has learned
// something about the synthetic markers.
inline Model train_synthetic(int n_emotions, int per_emotion, Mode mode, int steps,
                             std::uint64_t seed = 0, int d_model = 32) {
  const auto split = make_synthetic_corpus(n_emotions, per_emotion, seed);
  Vocab vocab = Vocab::build(split, 0, 1);
  ModelConfig c = toy_config(vocab, mode);
  c.d_model = d_model;
  c.d_ff = 2 * d_model;
  c.d_emotion = 16;
  c.max_seq_len = 64;
  c.dropout_p = 0.0;
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.batch_size = 16;
  tc.max_steps = steps;
  tc.eval_every = steps;
  tc.patience = 1;
  tc.seed = seed;
  auto result = train(split, split, vocab, c, tc);
  return Model{c, std::move(result.params), std::move(vocab)};
}

}  // namespace affdec::testing
