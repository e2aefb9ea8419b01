#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "affdec/corpus.hpp"
#include "affdec/model.hpp"
#include "affdec/optim.hpp"
#include "affdec/tokenizer.hpp"

namespace affdec {

struct TrainConfig {
  double lr = 3e-4;
  int batch_size = 16;
  int max_steps = 2000;
  int eval_every = 100;
  int patience = 5;
  std::uint64_t seed = 0;
  double grad_clip_norm = 1.0;
  LossOn loss_on = LossOn::all;

  void validate() const;
};

struct HistoryEntry {
  int step = 0;
  double train_loss = 0.0;  // mean over the steps since the previous entry
  double valid_ppl = 0.0;
};

struct TrainResult {
  TransformerParams params;  // best-validation parameters
  std::vector<HistoryEntry> history;
  int best_step = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<LinearizedSession> linearize_split(const CorpusSplit& split,
                                               const Vocab& vocab, Mode mode,
                                               std::size_t max_seq_len,
                                               LossOn loss_on = LossOn::all);

// Pads to the longest item with PAD (mask false); padded positions inherit
// the state of the item's last real token.
Batch pad_batch(std::vector<LinearizedSession> items);

// One epoch of batches in an order that depends only on (seed, epoch).
std::vector<Batch> make_batches(const std::vector<LinearizedSession>& examples,
                                std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch = 0);

std::vector<Batch> make_batches(const CorpusSplit& split, const Vocab& vocab,
                                Mode mode, std::size_t max_seq_len,
                                std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch = 0);

using StepCallback = std::function<void(const HistoryEntry&)>;

// Adam with global-norm clipping; validation perplexity every eval_every
// steps and at the last step, early stopping after `patience` evaluations
// without improvement.
TrainResult train(const CorpusSplit& train_split, const CorpusSplit& valid_split,
                  const Vocab& vocab, const ModelConfig& model_config,
                  const TrainConfig& train_config,
                  const StepCallback& on_eval = {});

}  // namespace affdec
