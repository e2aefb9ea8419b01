#include <map>
#include <sstream>

#include "affdec/decoding.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace affdec;
using namespace affdec::testing;

namespace {

const Model& trained() {
  static const Model m = train_synthetic(4, 6, Mode::ad_de, 300);
  return m;
}

DecodeConfig greedy() {
  DecodeConfig d;
  d.strategy = Strategy::greedy;
  return d;
}

}  // namespace

TEST_SUITE("decoding") {

TEST_CASE("strategy names and config validation") {
  CHECK(parse_strategy("top-k") == Strategy::top_k);
  CHECK(parse_strategy(to_string(Strategy::temperature)) == Strategy::temperature);
  CHECK_THROWS(parse_strategy("beam"));
  DecodeConfig d;
  CHECK_NOTHROW(d.validate());
  d.k = 0;
  CHECK_THROWS(d.validate());
  d = {};
  d.temperature = 0;
  CHECK_THROWS(d.validate());
  d = {};
  d.max_new_tokens = 0;
  CHECK_THROWS(d.validate());
}

TEST_CASE("sample_next masking and greedy ties") {
  Rng rng(0);
  const int n_special = 6;
  std::vector<double> logits(10, 0.0);
  logits[0] = 9;  // PAD
  logits[5] = 9;  // an EMO token
  logits[Vocab::kEou] = 8;
  logits[7] = 3;
  logits[8] = 3;
  CHECK(sample_next(logits, n_special, greedy(), true, rng) == Vocab::kEou);
  CHECK(sample_next(logits, n_special, greedy(), false, rng) == 7);

  DecodeConfig k1;
  k1.strategy = Strategy::top_k;
  k1.k = 1;
  CHECK(sample_next(logits, n_special, k1, false, rng) == 7);
}

TEST_CASE("top-k only draws from the k best") {
  Rng rng(1);
  std::vector<double> logits{0, 0, 0, 0, 1, 2, 3, 4, 5};
  DecodeConfig d;
  d.k = 3;
  d.temperature = 5.0;
  std::map<int, int> seen;
  for (int i = 0; i < 2000; ++i) ++seen[sample_next(logits, 4, d, true, rng)];
  CHECK(seen.size() == 3);
  CHECK(seen.count(6) == 1);
  CHECK(seen.count(8) == 1);
}

TEST_CASE("temperature sampling follows the tempered softmax") {
  Rng rng(2);
  const std::vector<double> logits{0, 0, 0, 0, 0.0, std::log(3.0)};
  DecodeConfig d;
  d.strategy = Strategy::temperature;
  d.temperature = 1.0;
  int hits = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) hits += sample_next(logits, 4, d, false, rng) == 5;
  // p = 3/4; four standard errors is about 0.012.
  CHECK(std::abs(hits / double(n) - 0.75) < 0.012);
  d.temperature = 1e-3;
  for (int i = 0; i < 100; ++i) CHECK(sample_next(logits, 4, d, true, rng) == 5);
}

TEST_CASE("greedy responses are deterministic and emotion-specific") {
  const Model& m = trained();
  const auto& reg = EmotionRegistry::empdial();
  for (int k = 0; k < 4; ++k) {
    DialogueSession ctx = session(reg.name(k), {"i feel " + speaker_marker(reg, k) + " about my dog ."});
    const auto a = generate_response(ctx, m, greedy());
    const auto b = generate_response(ctx, m, greedy());
    CHECK(a == b);
    CHECK(a.role == Role::listener);
    CAPTURE(a.text);
    CHECK(a.text.rfind("oh " + listener_marker(reg, k), 0) == 0);
  }
}

TEST_CASE("sampled responses depend only on the seed") {
  const Model& m = trained();
  DialogueSession ctx = session("afraid", {"i feel safraid about the dog ."});
  DecodeConfig d;
  d.seed = 3;
  CHECK(generate_response(ctx, m, d) == generate_response(ctx, m, d));
  DialogueSession bad = session("afraid", {"a", "b"});
  CHECK_THROWS(generate_response(bad, m, d));
}

TEST_CASE("continue_turn respects max_new_tokens") {
  const Model& m = trained();
  DecodeConfig d = greedy();
  d.max_new_tokens = 2;
  Rng rng(0);
  std::vector<TurnTokens> turns{{Role::speaker, m.vocab.encode("i feel")}};
  const auto g = continue_turn(turns, 0, m, d, rng);
  CHECK(g.ids.size() <= 2);
  if (g.ids.size() < 2) CHECK(g.closed);
  for (int id : g.ids) CHECK_FALSE(m.vocab.is_special(id));
}

TEST_CASE("generate_dialogue alternates roles from the prompt") {
  const Model& m = trained();
  const auto s = generate_dialogue(1, "i feel", 4, m, greedy());
  REQUIRE(s.turns.size() == 4);
  CHECK(s.emotion.name == "angry");
  CHECK(s.turns[0].text.rfind("i feel", 0) == 0);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(s.turns[i].role == (i % 2 == 0 ? Role::speaker : Role::listener));
  CHECK_THROWS(generate_dialogue(1, "i feel", 0, m, greedy()));
  CHECK_THROWS(generate_dialogue(1, "   ", 2, m, greedy()));
}

TEST_CASE("chat loop commands") {
  const Model& m = trained();
  std::istringstream in(
      "i feel sangry about work .\n"
      ":emotion bored\n"
      ":emotion afraid\n"
      ":help\n"
      ":reset\n"
      "\n"
      ":quit\n"
      "never read\n");
  std::ostringstream out;
  CHECK(chat_repl(m, 1, greedy(), in, out) == 0);
  const std::string o = out.str();
  CHECK(o.rfind("oh langry", 0) == 0);
  CHECK(o.find("unknown emotion \"bored\"") != std::string::npos);
  CHECK(o.find("(emotion: afraid)") != std::string::npos);
  CHECK(o.find(":reset") != std::string::npos);
  CHECK(o.find("(context cleared)") != std::string::npos);

  std::istringstream eof("hello\n");
  std::ostringstream o2;
  CHECK(chat_repl(m, 0, greedy(), eof, o2) == 0);
  CHECK_FALSE(o2.str().empty());
}

}
