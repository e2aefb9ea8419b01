#include <cmath>
#include <sstream>

#include "affdec/metrics.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace affdec;
using namespace affdec::testing;
using doctest::Approx;

namespace {

using Corpus = std::vector<Tokens>;

struct Case {
  Corpus hyps, refs;
};

std::vector<Case> fixtures() {
  auto t = [](const char* s) { return tokenize_text(s); };
  return {
      {{t("the cat sat on the mat"), t("a dog barked")},
       {t("the cat sat on a mat"), t("the dog barked loudly at me")}},
      {{t("i am so sorry to hear that"), t("that is great news"), t("wow")},
       {t("i am sorry to hear that"), t("that is really great news !"), t("oh wow")}},
      {{t("x y x y x y z"), t("z z z z")}, {t("x y z x y z"), t("z z y z z")}},
      {{t("how are you doing today my friend")},
       {t("how are you doing my dear friend today")}},
  };
}

WordVectors fixture_vectors(oracle::Table& table) {
  Rng rng(42);
  WordVectors wv;
  for (const auto& c : fixtures())
    for (const auto* side : {&c.hyps, &c.refs})
      for (const auto& s : *side)
        for (const auto& w : s) {
          if (table.count(w) || w == "loudly") continue;  // one OOV word
          std::vector<double> v(5);
          for (auto& x : v) x = normal(rng);
          table[w] = v;
          wv.add(w, v);
        }
  return wv;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("BLEU hand-worked values") {
  const Corpus h{{"the", "cat", "sat"}}, r{{"the", "cat", "sat", "down"}};
  CHECK(bleu(h, r) == Approx(std::exp(-1.0 / 3.0)).epsilon(1e-12));
  // Without smoothing there are no 4-grams at all.
  CHECK(bleu(h, r, 4, BleuSmoothing::none) == 0.0);
  const auto d = bleu_detail(h, r);
  CHECK(d.hyp_length == 3);
  CHECK(d.ref_length == 4);
  CHECK(d.precisions == std::vector<double>{1, 1, 1, 1});

  // Clipping: "the the the" against "the cat" matches one unigram.
  const auto clip = bleu_detail({{"the", "the", "the"}}, {{"the", "cat"}}, 1);
  CHECK(clip.precisions[0] == Approx(1.0 / 3.0));
  CHECK(clip.brevity_penalty == 1.0);
}

TEST_CASE("BLEU of a corpus against itself is one") {
  for (const auto& c : fixtures()) {
    CHECK(bleu(c.refs, c.refs) == Approx(1.0).epsilon(1e-15));
    CHECK(bleu(c.refs, c.refs, 4, BleuSmoothing::none) == (c.refs[0].size() >= 4 ? 1.0 : 0.0));
  }
  CHECK_THROWS(bleu({{"a"}}, {}));
  CHECK_THROWS(bleu({}, {}));
  CHECK(bleu({{}}, {{"a"}}) == 0.0);
}

TEST_CASE("BLEU matches the brute-force oracle") {
  for (const auto& c : fixtures()) {
    CHECK(std::abs(bleu(c.hyps, c.refs) - oracle::bleu(c.hyps, c.refs, true)) < 1e-9);
  }
}

TEST_CASE("BOW similarities by hand") {
  WordVectors wv;
  wv.add("a", {1, 0});
  wv.add("b", {0, 1});
  wv.add("c", {1, 1});
  const EvalPair p{{"a"}, {"b", "c", "zzz"}};
  CHECK(*bow_average(p, wv) == Approx(0.5 / std::sqrt(1.25)).epsilon(1e-12));
  const double r2 = 1.0 / std::sqrt(2.0);
  CHECK(*bow_greedy(p, wv) == Approx(0.5 * (r2 + 0.5 * r2)).epsilon(1e-12));
  CHECK(*bow_greedy(p, wv, GreedyDirection::hyp2ref) == Approx(r2).epsilon(1e-12));
  CHECK(*bow_extreme(p, wv) == Approx(r2).epsilon(1e-12));
  CHECK_FALSE(bow_average({{"zzz"}, {"a"}}, wv).has_value());
  CHECK_FALSE(bow_greedy({{"a"}, {}}, wv).has_value());

  // Extrema keeps the sign of the larger magnitude.
  WordVectors e;
  e.add("p", {0.5, -3});
  e.add("q", {-2, 1});
  e.add("r", {-2, -3});
  CHECK(*bow_extreme({{"p", "q"}, {"r"}}, e) == Approx(1.0));
}

TEST_CASE("BOW matches the brute-force oracle") {
  oracle::Table table;
  const auto wv = fixture_vectors(table);
  for (const auto& c : fixtures()) {
    for (std::size_t i = 0; i < c.hyps.size(); ++i) {
      const EvalPair p{c.hyps[i], c.refs[i]};
      CHECK(std::abs(*bow_average(p, wv) - oracle::bow_average(c.hyps[i], c.refs[i], table)) < 1e-9);
      CHECK(std::abs(*bow_greedy(p, wv) - oracle::bow_greedy(c.hyps[i], c.refs[i], table)) < 1e-9);
      CHECK(std::abs(*bow_extreme(p, wv) - oracle::bow_extreme(c.hyps[i], c.refs[i], table)) < 1e-9);
    }
  }
}

TEST_CASE("DIST-n") {
  CHECK(*dist_n({{"a", "b", "a"}, {"a", "c"}}, 1) == Approx(3.0 / 5.0));
  CHECK(*dist_n({{"a", "b", "a"}, {"a", "b"}}, 2) == Approx(2.0 / 3.0));
  CHECK_FALSE(dist_n({{"a"}}, 2).has_value());
  CHECK_THROWS(dist_n({{"a"}}, 0));
  for (const auto& c : fixtures()) {
    CHECK(std::abs(*dist_n(c.hyps, 1) - oracle::dist(c.hyps, 1)) < 1e-9);
    CHECK(std::abs(*dist_n(c.hyps, 2) - oracle::dist(c.hyps, 2)) < 1e-9);
  }
}

TEST_CASE("word vector file parsing") {
  std::istringstream in("a 1 2\nb 3 4\n\n");
  const auto wv = WordVectors::read(in);
  CHECK(wv.size() == 2);
  CHECK(wv.dim() == 2);
  CHECK((*wv.find("b"))[1] == 4.0);
  std::istringstream ragged("a 1 2\nb 3\n");
  CHECK_THROWS(WordVectors::read(ragged));
  std::istringstream nan("a 1 x\n");
  CHECK_THROWS(WordVectors::read(nan));
}

TEST_CASE("corpus report") {
  WordVectors wv;
  wv.add("a", {1, 0});
  wv.add("b", {0, 1});
  const auto rep = evaluate_corpus({{"a"}, {"zz"}}, {{"a"}, {"b"}}, wv);
  CHECK(rep.n_pairs == 2);
  CHECK(rep.n_undefined_bow == 1);
  CHECK(*rep.bow_a == Approx(1.0));
  CHECK(*rep.dist1 == 1.0);
  CHECK_FALSE(rep.dist2.has_value());
  CHECK(round3(0.12345) == 0.123);
}

TEST_CASE("perplexity of a forced-uniform model is the vocabulary size") {
  const auto split = make_synthetic_corpus(3, 2, 0);
  const auto vocab = Vocab::build(split, 0, 1);
  const auto c = tiny_config(vocab, Mode::baseline);
  auto p = init_params(c, 0);
  for (double& v : p.get("lm_head").mutable_values()) v = 0.0;
  const auto lins = linearize_split(split, vocab, Mode::baseline, 48);
  const double V = static_cast<double>(vocab.size());
  CHECK(std::abs(perplexity(p, c, lins) - V) < 1e-6 * V);
  CHECK(std::abs(perplexity(p, c, lins, PplTokens::all) - V) < 1e-6 * V);

  CorpusSplit speaker_only{SplitName::test, {session("sad", {"hello there"})}};
  CHECK_THROWS(perplexity(p, c, linearize_split(speaker_only, vocab, Mode::baseline, 48)));
}

}
