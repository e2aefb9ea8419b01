#include <algorithm>
#include <set>

#include "affdec/metrics.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace affdec;
using namespace affdec::testing;

TEST_SUITE("training") {

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.lr = 0;
  CHECK_THROWS(t.validate());
  t = {};
  t.patience = 0;
  CHECK_THROWS(t.validate());
  t = {};
  t.batch_size = 0;
  CHECK_THROWS(t.validate());
}

TEST_CASE("pad_batch") {
  const auto split = make_synthetic_corpus(2, 2, 0);
  const auto vocab = Vocab::build(split, 0, 1);
  const auto lins = linearize_split(split, vocab, Mode::ad, 64);
  const auto batch = pad_batch(lins);
  std::size_t longest = 0;
  for (const auto& l : lins) longest = std::max(longest, l.size());
  for (std::size_t i = 0; i < lins.size(); ++i) {
    CHECK(batch.lengths[i] == lins[i].size());
    const auto& it = batch.items[i];
    CHECK(it.size() == longest);
    for (std::size_t t = lins[i].size(); t < longest; ++t) {
      CHECK(it.token_ids[t] == Vocab::kPad);
      CHECK(it.loss_mask[t] == 0);
      CHECK(it.state_ids[t] == lins[i].state_ids.back());
      CHECK(it.position_ids[t] == static_cast<int>(t));
    }
  }
}

TEST_CASE("batches cover the split once per epoch and depend on seed and epoch") {
  const auto split = make_synthetic_corpus(3, 5, 0);
  const auto vocab = Vocab::build(split, 0, 1);
  const auto lins = linearize_split(split, vocab, Mode::ad, 64);
  auto order = [&](std::uint64_t seed, std::uint64_t epoch) {
    std::vector<std::vector<int>> seen;
    for (const auto& b : make_batches(lins, 4, seed, epoch))
      for (std::size_t i = 0; i < b.items.size(); ++i)
        seen.emplace_back(b.items[i].token_ids.begin(),
                          b.items[i].token_ids.begin() +
                              static_cast<std::ptrdiff_t>(b.lengths[i]));
    return seen;
  };
  const auto a = order(1, 0);
  CHECK(a.size() == 15);
  CHECK(make_batches(lins, 4, 1, 0).size() == 4);
  CHECK(a == order(1, 0));
  CHECK(a != order(1, 1));
  CHECK(a != order(2, 0));
  auto sorted = a, all = std::vector<std::vector<int>>();
  for (const auto& l : lins) all.push_back(l.token_ids);
  std::sort(sorted.begin(), sorted.end());
  std::sort(all.begin(), all.end());
  CHECK(sorted == all);
}

TEST_CASE("training lowers validation perplexity and records history") {
  const auto split = make_synthetic_corpus(4, 3, 0);
  const auto vocab = Vocab::build(split, 0, 1);
  auto c = tiny_config(vocab, Mode::ad, 16);
  c.dropout_p = 0.1;
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.batch_size = 6;
  tc.max_steps = 60;
  tc.eval_every = 20;
  tc.patience = 10;
  int calls = 0;
  const auto r = train(split, split, vocab, c, tc, [&](const HistoryEntry&) { ++calls; });
  REQUIRE(r.history.size() == 3);
  CHECK(calls == 3);
  CHECK(r.history[0].step == 20);
  CHECK(r.history.back().step == 60);
  const double start = perplexity(init_params(c, 0), c, linearize_split(split, vocab, Mode::ad, 48));
  CHECK(r.history.back().valid_ppl < 0.5 * start);
  const auto best = std::min_element(r.history.begin(), r.history.end(),
                                     [](auto& x, auto& y) { return x.valid_ppl < y.valid_ppl; });
  CHECK(r.best_step == best->step);
}

TEST_CASE("early stopping") {
  // Validation on sessions whose emotions never appear in training, so
  // fitting the training markers stops paying off quickly.
  const auto all = make_synthetic_corpus(4, 3, 0);
  CorpusSplit tr{SplitName::train, {all.sessions.begin(), all.sessions.begin() + 6}};
  CorpusSplit va{SplitName::validation, {all.sessions.begin() + 6, all.sessions.end()}};
  const auto vocab = Vocab::build(tr, 0, 1);
  const auto c = tiny_config(vocab, Mode::baseline, 8);
  TrainConfig tc;
  tc.lr = 1e-2;
  tc.batch_size = 2;
  tc.max_steps = 2000;
  tc.eval_every = 10;
  tc.patience = 1;
  const auto r = train(tr, va, vocab, c, tc);
  REQUIRE(r.history.size() >= 2);
  CHECK(r.history.back().step < 2000);
  // With patience 1 every evaluation but the last improved on the best.
  for (std::size_t i = 1; i + 1 < r.history.size(); ++i)
    CHECK(r.history[i].valid_ppl < r.history[i - 1].valid_ppl);
  CHECK(r.history.back().valid_ppl >= r.history[r.history.size() - 2].valid_ppl);
  CHECK(r.best_step == r.history[r.history.size() - 2].step);
}

TEST_CASE("zero steps returns the initialization") {
  const auto split = make_synthetic_corpus(2, 1, 0);
  const auto vocab = Vocab::build(split, 0, 1);
  const auto c = tiny_config(vocab, Mode::ad, 8);
  TrainConfig tc;
  tc.max_steps = 0;
  const auto r = train(split, split, vocab, c, tc);
  CHECK(r.history.empty());
  CHECK(bit_equal(values_of(r.params.get("emo.g")), values_of(init_params(c, 0).get("emo.g"))));
  auto bad = c;
  bad.vocab_size += 1;
  tc.max_steps = 1;
  CHECK_THROWS(train(split, split, vocab, bad, tc));
}

TEST_CASE("listener-only loss leaves speaker rows out") {
  const auto split = make_synthetic_corpus(2, 2, 0);
  const auto vocab = Vocab::build(split, 0, 1);
  for (const auto& l : linearize_split(split, vocab, Mode::ad, 64, LossOn::listener))
    for (std::size_t t = 0; t < l.size(); ++t)
      CHECK((l.loss_mask[t] == 1) == (l.state_ids[t] == 1));
}

}
