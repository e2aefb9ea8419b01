#include <sstream>

#include "doctest.h"
#include "support.hpp"

using namespace affdec;
using affdec::testing::session;

TEST_SUITE("corpus") {

TEST_CASE("registry holds the 32 labels in alphabetical order") {
  const auto& r = EmotionRegistry::empdial();
  CHECK(r.size() == 32);
  CHECK(r.name(0) == "afraid");
  CHECK(r.name(31) == "trusting");
  CHECK(std::is_sorted(r.names().begin(), r.names().end()));
  CHECK(r.find(" Proud ") == r.find("proud"));
  CHECK_FALSE(r.find("bored").has_value());
  CHECK_THROWS_AS(r.name(32), std::out_of_range);
  CHECK_THROWS_AS(EmotionRegistry({"a", "A"}), std::invalid_argument);
}

TEST_CASE("jsonl round trip") {
  CorpusSplit split{SplitName::train,
                    {session("sad", {"my cat died", "oh no, i'm sorry"}),
                     session("joyful", {"i won \"big\"", "great!", "thanks"})}};
  std::stringstream ss;
  write_corpus(ss, split);
  const auto back = read_corpus(ss, SplitName::train);
  CHECK(back.sessions == split.sessions);
}

TEST_CASE("loader errors carry kind and line") {
  auto load = [](const std::string& text) {
    std::istringstream in(text);
    return read_corpus(in, SplitName::train);
  };
  const std::string ok = R"({"emotion":"sad","turns":[{"role":"S","text":"hi"}]})";
  CHECK(load(ok + "\n\n" + ok + "\n").sessions.size() == 2);

  auto kind_of = [&](const std::string& text, std::size_t& line) {
    try {
      load(text);
    } catch (const CorpusError& e) {
      line = e.line();
      return e.kind();
    }
    FAIL("no error");
    return CorpusError::Kind::io;
  };
  std::size_t line = 0;
  CHECK(kind_of(ok + "\n{oops", line) == CorpusError::Kind::parse);
  CHECK(line == 2);
  CHECK(kind_of(R"({"emotion":"bored","turns":[{"role":"S","text":"hi"}]})", line) ==
        CorpusError::Kind::unknown_emotion);
  CHECK(kind_of(R"({"emotion":"sad","turns":[{"role":"L","text":"hi"}]})", line) ==
        CorpusError::Kind::invariant);
  CHECK(kind_of(R"({"emotion":"sad","turns":[{"role":"S","text":"  "}]})", line) ==
        CorpusError::Kind::invariant);
  CHECK(kind_of(R"({"emotion":"sad","turns":[]})", line) == CorpusError::Kind::invariant);
  CHECK(kind_of(R"({"emotion":"sad","turns":[{"role":"X","text":"hi"}]})", line) ==
        CorpusError::Kind::parse);
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl", SplitName::train), CorpusError);
}

TEST_CASE("drop_trailing_speaker") {
  std::istringstream in(
      R"({"emotion":"sad","turns":[{"role":"S","text":"a"},{"role":"L","text":"b"}]})"
      "\n"
      R"({"emotion":"sad","turns":[{"role":"S","text":"a"}]})");
  LoadOptions opt;
  opt.drop_trailing_speaker = true;
  CHECK(read_corpus(in, SplitName::test, opt).sessions.size() == 1);
}

TEST_CASE("stats") {
  CorpusSplit split{SplitName::train,
                    {session("sad", {"my cat died", "oh no, i'm sorry"}),
                     session("sad", {"hello"}), session("afraid", {"a b"})}};
  const auto st = corpus_stats(split);
  CHECK(st.n_sessions == 3);
  CHECK(st.n_turns == 4);
  CHECK(st.n_tokens == 3 + 6 + 1 + 2);
  CHECK(st.emotion_histogram[0] == 1);
  CHECK(st.emotion_histogram[27] == 2);
}

TEST_CASE("synthetic corpus is deterministic and marker-exclusive") {
  const auto a = make_synthetic_corpus(5, 4, 7);
  const auto b = make_synthetic_corpus(5, 4, 7);
  CHECK(a.sessions == b.sessions);
  CHECK(a.sessions.size() == 20);
  CHECK(make_synthetic_corpus(5, 4, 8).sessions != a.sessions);
  const auto& reg = EmotionRegistry::empdial();
  for (const auto& s : a.sessions) {
    validate_session(s);
    for (const auto& t : s.turns) {
      const auto toks = tokenize_text(t.text);
      for (int k = 0; k < 5; ++k) {
        const bool has_s =
            std::find(toks.begin(), toks.end(), speaker_marker(reg, k)) != toks.end();
        const bool has_l =
            std::find(toks.begin(), toks.end(), listener_marker(reg, k)) != toks.end();
        CHECK(has_s == (k == s.emotion.id && t.role == Role::speaker));
        CHECK(has_l == (k == s.emotion.id && t.role == Role::listener));
      }
    }
  }
  CHECK_THROWS(make_synthetic_corpus(33, 1, 0));
}

TEST_CASE("empdial csv conversion") {
  std::istringstream in(
      "conv_id,utterance_idx,context,prompt,speaker_idx,utterance,selfeval,tags\n"
      "hit:1_conv:2,2,sad,p,1,i'm sorry_comma_ truly.,,\n"
      "hit:1_conv:2,1,sad,p,0,my dog died.,,\n"
      "hit:1_conv:2,3,sad,p,0,thanks,,\n"
      "hit:3_conv:4,1,proud,p,0,i passed!,,\n");
  const auto sessions = read_empdial_csv(in);
  REQUIRE(sessions.size() == 2);
  CHECK(sessions[0] == session("sad", {"my dog died.", "i'm sorry, truly.", "thanks"}));
  CHECK(sessions[1].emotion.name == "proud");

  std::istringstream bad("x,1,bored,p,0,hi\n");
  CHECK_THROWS_AS(read_empdial_csv(bad), CorpusError);
}

}
