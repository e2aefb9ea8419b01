#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"

using namespace affdec;
using namespace affdec::testing;
using doctest::Approx;

namespace {

struct Fixture {
  CorpusSplit split = make_synthetic_corpus(3, 2, 11);
  Vocab vocab = Vocab::build(split, 0, 1);
};

std::vector<std::string> names(const TransformerParams& p) {
  std::vector<std::string> out;
  for (const auto& e : p.entries()) out.push_back(e.name);
  return out;
}

bool has(const TransformerParams& p, const char* n) { return p.contains(n); }

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation") {
  ModelConfig c;
  c.vocab_size = 10;
  CHECK_NOTHROW(c.validate());
  c.n_heads = 3;
  CHECK_THROWS(c.validate());
  c.n_heads = 2;
  c.dropout_p = 1.0;
  CHECK_THROWS(c.validate());
  c.dropout_p = 0.0;
  c.mtl_weight = -1;
  CHECK_THROWS(c.validate());
}

TEST_CASE("each mode gets exactly its parameters") {
  Fixture f;
  for (Mode m : kAllModes) {
    CAPTURE(to_string(m));
    const auto c = tiny_config(f.vocab, m);
    const auto p = init_params(c, 1);
    CHECK(has(p, "emo.g") == (m == Mode::ad));
    CHECK(has(p, "emo.g_s") == (m == Mode::ad_de || m == Mode::adm));
    CHECK(has(p, "emo.v_l") == (m == Mode::ad_de || m == Mode::adm));
    CHECK(has(p, "cls.w") == (m == Mode::mtl || m == Mode::adm));
    CHECK(has(p, "lm_head"));
    CHECK(parse_mode(to_string(m)) == m);
  }
  auto c = tiny_config(f.vocab, Mode::baseline);
  c.tie_embeddings = true;
  CHECK_FALSE(has(init_params(c, 1), "lm_head"));
  CHECK_THROWS(parse_mode("nope"));
}

TEST_CASE("init is seed-deterministic") {
  Fixture f;
  const auto c = tiny_config(f.vocab, Mode::adm);
  const auto a = init_params(c, 5), b = init_params(c, 5), d = init_params(c, 6);
  CHECK(names(a) == names(b));
  CHECK(bit_equal(values_of(a.get("tok_emb")), values_of(b.get("tok_emb"))));
  CHECK_FALSE(bit_equal(values_of(a.get("tok_emb")), values_of(d.get("tok_emb"))));
  CHECK(values_of(a.get("h0.ln1.g")) == std::vector<double>(16, 1.0));
  CHECK(values_of(a.get("h1.ff.b2")) == std::vector<double>(16, 0.0));
  const auto count = a.parameter_count();
  std::size_t manual = 0;
  for (const auto& e : a.entries()) manual += e.tensor.size();
  CHECK(count == manual);
}

TEST_CASE("clone is deep") {
  Fixture f;
  const auto c = tiny_config(f.vocab, Mode::ad);
  auto a = init_params(c, 1);
  auto b = a.clone();
  b.get("emo.g").mutable_values()[0] = 42.0;
  CHECK(a.get("emo.g")[0] != 42.0);
}

TEST_CASE("forward shapes and errors") {
  Fixture f;
  for (Mode m : kAllModes) {
    const auto c = tiny_config(f.vocab, m);
    const auto p = init_params(c, 2);
    const auto lin = linearize_session(f.split.sessions[0], f.vocab, m, 48);
    const auto out = forward_full(lin, lin.emotion, p, c);
    CHECK(out.logits.shape() == Shape{lin.size(), f.vocab.size()});
    CHECK(out.hidden.shape() == Shape{lin.size(), 16});
  }
  const auto c = tiny_config(f.vocab, Mode::ad);
  const auto p = init_params(c, 2);
  auto lin = linearize_session(f.split.sessions[0], f.vocab, Mode::ad, 48);
  CHECK_THROWS(forward(lin, 99, p, c));
  auto small = c;
  small.max_seq_len = 2;
  CHECK_THROWS_AS(forward(lin, 0, init_params(small, 2), small), SequenceTooLong);
  lin.state_ids.pop_back();
  CHECK_THROWS_AS(forward(lin, 0, p, c), DimensionError);
}

TEST_CASE("emotion offsets are added row by row") {
  Fixture f;
  const auto lin = linearize_session(f.split.sessions[2], f.vocab, Mode::ad, 48);
  const auto cb = tiny_config(f.vocab, Mode::baseline);
  const auto cd = tiny_config(f.vocab, Mode::ad_de);
  const auto pd = init_params(cd, 3);
  // The same backbone without the emotion tensors is the baseline.
  TransformerParams pb = pd.clone();
  for (const char* n : {"emo.g_s", "emo.v_s", "emo.g_l", "emo.v_l"}) pb.erase(n);
  const Tensor lb = forward(lin, lin.emotion, pb, cb);
  const Tensor ld = forward(lin, lin.emotion, pd, cd);
  const auto os = emotion_logit_offset(lin.emotion, OffsetRole::speaker, pd, cd);
  const auto ol = emotion_logit_offset(lin.emotion, OffsetRole::listener, pd, cd);
  const std::size_t V = f.vocab.size();
  for (std::size_t t = 0; t < lin.size(); ++t) {
    const auto& off = lin.state_ids[t] == 0 ? os : ol;
    for (std::size_t w = 0; w < V; w += 7)
      CHECK(ld.at(t, w) == Approx(lb.at(t, w) + off[w]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(emotion_logit_offset(0, OffsetRole::unified, pd, cd), ModeError);
  CHECK_THROWS_AS(emotion_logit_offset(0, OffsetRole::speaker, pb, cb), ModeError);
  CHECK(parse_offset_role("S") == OffsetRole::speaker);
  CHECK(parse_offset_role("listener") == OffsetRole::listener);
}

TEST_CASE("classifier outputs a distribution") {
  Fixture f;
  const auto c = tiny_config(f.vocab, Mode::mtl);
  const auto p = init_params(c, 4);
  const auto lin = linearize_session(f.split.sessions[0], f.vocab, Mode::mtl, 48);
  const auto probs = classify_emotion(lin, p, c);
  CHECK(probs.size() == 32);
  CHECK(std::accumulate(probs.begin(), probs.end(), 0.0) == Approx(1.0));
  CHECK_THROWS_AS(classify_emotion(lin, p, tiny_config(f.vocab, Mode::ad)), ModeError);
}

TEST_CASE("loss parts") {
  Fixture f;
  auto c = tiny_config(f.vocab, Mode::adm);
  c.mtl_weight = 0.5;
  const auto p = init_params(c, 4);
  const auto batch = batch_of(f.split, f.vocab, Mode::adm);
  const auto parts = loss_parts(batch, p, c);
  REQUIRE(parts.emotion.has_value());
  CHECK(parts.total.item() == Approx(parts.lm.item() + 0.5 * parts.emotion->item()));
  // A fresh model is close to uniform over the vocabulary.
  CHECK(parts.lm.item() == Approx(std::log(double(f.vocab.size()))).epsilon(0.1));
  CHECK(parts.emotion->item() == Approx(std::log(32.0)).epsilon(0.1));

  const auto pb = init_params(tiny_config(f.vocab, Mode::baseline), 4);
  CHECK_FALSE(loss_parts(batch, pb, tiny_config(f.vocab, Mode::baseline)).emotion);
}

TEST_CASE("padding does not change the loss") {
  Fixture f;
  const auto c = tiny_config(f.vocab, Mode::ad_de);
  const auto p = init_params(c, 4);
  const auto lins = linearize_split(f.split, f.vocab, Mode::ad_de, 48);
  double sum_single = 0;
  std::size_t targets = 0;
  for (const auto& l : lins) {
    const double n = std::accumulate(l.loss_mask.begin() + 1, l.loss_mask.end(), 0.0);
    sum_single += loss(pad_batch({l}), p, c).item() * n;
    targets += static_cast<std::size_t>(n);
  }
  const double batched = loss(pad_batch(lins), p, c).item();
  CHECK(batched == Approx(sum_single / double(targets)).epsilon(1e-12));
}

TEST_CASE("grad check through the model") {
  Fixture f;
  for (Mode m : {Mode::ad_de, Mode::adm}) {
    auto c = tiny_config(f.vocab, m, 8);
    auto p = init_params(c, 7);
    CorpusSplit one{SplitName::train, {f.split.sessions[0]}};
    const auto batch = batch_of(one, f.vocab, m, 12);
    std::vector<NamedTensor> checked;
    for (const char* n : {"emo.g_s", "emo.g_l", "h1.attn.w_o", "state_emb"})
      checked.push_back({n, p.get(n)});
    const auto rep = grad_check([&] { return loss(batch, p, c); }, checked);
    INFO(rep.worst_param << " " << rep.max_rel_err);
    CHECK(rep.passed());
  }
}

}
