#include "affdec/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "affdec/metrics.hpp"
#include "affdec/random.hpp"

namespace affdec {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + what);
  };
  require(lr > 0.0, "lr must be positive");
  require(batch_size >= 1, "batch_size must be positive");
  require(max_steps >= 0, "max_steps must be non-negative");
  require(eval_every >= 1, "eval_every must be positive");
  require(patience >= 1, "patience must be >= 1");
  require(grad_clip_norm > 0.0, "grad_clip_norm must be positive");
}

std::vector<LinearizedSession> linearize_split(const CorpusSplit& split,
                                               const Vocab& vocab, Mode mode,
                                               std::size_t max_seq_len,
                                               LossOn loss_on) {
  std::vector<LinearizedSession> out;
  out.reserve(split.sessions.size());
  for (const auto& s : split.sessions)
    out.push_back(linearize_session(s, vocab, mode, max_seq_len, loss_on));
  return out;
}

Batch pad_batch(std::vector<LinearizedSession> items) {
  Batch batch;
  std::size_t longest = 0;
  for (const auto& it : items) longest = std::max(longest, it.size());
  for (auto& it : items) {
    batch.lengths.push_back(it.size());
    const int state = it.state_ids.empty() ? 0 : it.state_ids.back();
    while (it.size() < longest) {
      it.token_ids.push_back(Vocab::kPad);
      it.state_ids.push_back(state);
      it.position_ids.push_back(static_cast<int>(it.position_ids.size()));
      it.loss_mask.push_back(0);
    }
  }
  batch.items = std::move(items);
  return batch;
}

std::vector<Batch> make_batches(const std::vector<LinearizedSession>& examples,
                                std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size 0");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5eed0000ULL + epoch));
  shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    std::vector<LinearizedSession> items;
    for (std::size_t j = i; j < std::min(order.size(), i + batch_size); ++j)
      items.push_back(examples[order[j]]);
    batches.push_back(pad_batch(std::move(items)));
  }
  return batches;
}

std::vector<Batch> make_batches(const CorpusSplit& split, const Vocab& vocab,
                                Mode mode, std::size_t max_seq_len,
                                std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch) {
  return make_batches(linearize_split(split, vocab, mode, max_seq_len),
                      batch_size, seed, epoch);
}

TrainResult train(const CorpusSplit& train_split, const CorpusSplit& valid_split,
                  const Vocab& vocab, const ModelConfig& model_config,
                  const TrainConfig& tc, const StepCallback& on_eval) {
  tc.validate();
  model_config.validate();
  if (static_cast<std::size_t>(model_config.vocab_size) != vocab.size())
    throw std::invalid_argument("train: vocab_size does not match vocabulary");

  TrainResult result{init_params(model_config, tc.seed), {}, 0};
  if (tc.max_steps == 0) return result;
  if (train_split.sessions.empty())
    throw std::invalid_argument("train: empty training split");

  const auto max_len = static_cast<std::size_t>(model_config.max_seq_len);
  const auto examples =
      linearize_split(train_split, vocab, model_config.mode, max_len, tc.loss_on);
  const auto valid =
      linearize_split(valid_split, vocab, model_config.mode, max_len, LossOn::all);

  TransformerParams params = result.params.clone();
  std::vector<Tensor> tensors = params.tensors();
  AdamState adam;
  const AdamConfig adam_cfg{tc.lr, 0.9, 0.999, 1e-8};
  Rng dropout_rng(derive_seed(tc.seed, 0xd80f));
  const ForwardOptions fwd{true, &dropout_rng};

  std::uint64_t epoch = 0;
  auto batches = make_batches(examples, static_cast<std::size_t>(tc.batch_size),
                              tc.seed, epoch);
  std::size_t next_batch = 0;
  double best_ppl = std::numeric_limits<double>::infinity();
  int bad_evals = 0;
  double window_loss = 0.0;
  int window_steps = 0;

  for (int step = 1; step <= tc.max_steps; ++step) {
    if (next_batch == batches.size()) {
      batches = make_batches(examples, static_cast<std::size_t>(tc.batch_size),
                             tc.seed, ++epoch);
      next_batch = 0;
    }
    params.zero_grad();
    const Tensor l = loss(batches[next_batch++], params, model_config, fwd);
    const double lv = l.item();
    if (!std::isfinite(lv)) {
      throw TrainingDiverged("loss became non-finite (" + std::to_string(lv) +
                             ") at step " + std::to_string(step));
    }
    backward(l);
    clip_grad_norm(tensors, tc.grad_clip_norm);
    adam_step(tensors, adam, adam_cfg);
    window_loss += lv;
    ++window_steps;

    if (step % tc.eval_every == 0 || step == tc.max_steps) {
      if (!params.all_finite())
        throw TrainingDiverged("parameters became non-finite at step " +
                               std::to_string(step));
      HistoryEntry entry{step, window_loss / window_steps,
                         perplexity(params, model_config, valid)};
      window_loss = 0.0;
      window_steps = 0;
      result.history.push_back(entry);
      if (on_eval) on_eval(entry);
      if (entry.valid_ppl < best_ppl) {
        best_ppl = entry.valid_ppl;
        result.best_step = step;
        result.params = params.clone();
        bad_evals = 0;
      } else if (++bad_evals >= tc.patience) {
        break;
      }
    }
  }
  return result;
}

}  // namespace affdec
