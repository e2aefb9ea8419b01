#include <cmath>
#include <sstream>

#include "affdec/eval_stats.hpp"
#include "doctest.h"

using namespace affdec;
using doctest::Approx;

namespace {

std::vector<PreferenceJudgment> judgments(const std::string& a, const std::string& b,
                                          int a_wins, int b_wins, int ties) {
  std::vector<PreferenceJudgment> out;
  int item = 0;
  auto push = [&](Verdict v, int n) {
    for (int i = 0; i < n; ++i) out.push_back({std::to_string(item++), a, b, v});
  };
  push(Verdict::a, a_wins);
  push(Verdict::b, b_wins);
  push(Verdict::tie, ties);
  return out;
}

}  // namespace

TEST_SUITE("eval-stats") {

TEST_CASE("pooled z-test by hand") {
  // 40/100 vs 20/100: pooled 0.3, se sqrt(0.3*0.7*0.02), z = 0.2 / se.
  const double z = 0.2 / std::sqrt(0.3 * 0.7 * 0.02);
  const auto t = two_proportion_z_test(40, 100, 20, 100);
  CHECK(t.z == Approx(z).epsilon(1e-12));
  CHECK(t.z == Approx(3.086067).epsilon(1e-6));
  CHECK(t.p == Approx(2 * normal_sf(z)).epsilon(1e-12));
  CHECK(t.p == Approx(0.0020282).epsilon(1e-4));
  CHECK(two_proportion_z_test(20, 100, 40, 100).z == Approx(-z));
  CHECK(two_proportion_z_test(0, 10, 0, 10).p == 1.0);
  CHECK(two_proportion_z_test(10, 10, 10, 10).z == 0.0);
  CHECK_THROWS(two_proportion_z_test(11, 10, 0, 10));
  CHECK_THROWS(two_proportion_z_test(0, 0, 0, 10));
}

TEST_CASE("normal tail") {
  CHECK(normal_sf(0) == 0.5);
  CHECK(normal_sf(1.959963984540054) == Approx(0.025).epsilon(1e-12));
}

TEST_CASE("incomplete beta and t tails against closed forms") {
  CHECK(incomplete_beta(1, 1, 0.3) == Approx(0.3).epsilon(1e-12));
  CHECK(incomplete_beta(2, 1, 0.3) == Approx(0.09).epsilon(1e-12));
  CHECK(incomplete_beta(2, 3, 0) == 0.0);
  CHECK(incomplete_beta(2, 3, 1) == 1.0);
  const double pi = std::acos(-1.0);
  for (double t : {0.1, 0.7, 2.0, 5.5, 30.0}) {
    CAPTURE(t);
    CHECK(student_t_two_sided_p(t, 1) == Approx(1 - 2 / pi * std::atan(t)).epsilon(1e-10));
    CHECK(student_t_two_sided_p(-t, 2) == Approx(1 - t / std::sqrt(t * t + 2)).epsilon(1e-10));
  }
  CHECK(student_t_two_sided_p(0, 5) == Approx(1.0));
}

TEST_CASE("paired t-test") {
  const auto r = paired_t_test({1, 1, 1, 1, 1}, {0, 1, 0, 1, 0});
  REQUIRE(r);
  CHECK(r->t == Approx(std::sqrt(6.0)).epsilon(1e-12));
  CHECK(r->p == Approx(0.07048399691021993).epsilon(1e-9));
  CHECK(r->n == 5);
  CHECK(r->mean_diff == Approx(0.6));

  const auto zero = paired_t_test({2, 3, 1}, {2, 3, 1});
  REQUIRE(zero);
  CHECK(zero->t == 0.0);
  CHECK(zero->p == 1.0);

  const auto flat = paired_t_test({2, 3, 1}, {1, 2, 0});
  CHECK(std::isinf(flat->t));
  CHECK(flat->p == 0.0);

  CHECK_FALSE(paired_t_test({1}, {0}));
  CHECK_THROWS(paired_t_test({1, 2}, {0}));
}

TEST_CASE("preference cell: ties stay in the denominator") {
  const auto m = preference_matrix(judgments("A", "B", 48, 12, 40));
  const auto* ab = m.cell("A", "B");
  const auto* ba = m.cell("B", "A");
  REQUIRE(ab);
  REQUIRE(ba);
  CHECK(ab->n == 100);
  CHECK(ab->pct == 48.0);
  CHECK(ba->pct == 12.0);
  CHECK(ab->test.z == Approx(two_proportion_z_test(48, 100, 12, 100).z));
  CHECK(ab->significant);
  CHECK_FALSE(ba->significant);
  CHECK(m.systems == std::vector<std::string>{"A", "B"});
  CHECK(m.cell("A", "A") == nullptr);
}

TEST_CASE("close preferences are not marked") {
  const auto m = preference_matrix(judgments("A", "B", 25, 20, 55));
  CHECK_FALSE(m.cell("A", "B")->significant);
  const auto table = format_preference_table(m);
  CHECK(table.find("†") == std::string::npos);
  CHECK(table.find("25") != std::string::npos);
}

TEST_CASE("judgments in either orientation are merged") {
  auto j = judgments("A", "B", 10, 0, 0);
  for (auto& x : judgments("B", "A", 0, 5, 5)) j.push_back(x);
  const auto m = preference_matrix(j);
  CHECK(m.cell("A", "B")->wins == 15);
  CHECK(m.cell("A", "B")->n == 20);
  CHECK(m.cell("B", "A")->wins == 0);
}

TEST_CASE("table formatting marks significant cells") {
  const auto m = preference_matrix(judgments("MoEL", "ADDE", 12, 57, 31));
  const auto t = format_preference_table(m);
  CHECK(t.find("57†") != std::string::npos);
  CHECK(t.find("12†") == std::string::npos);
  const auto j = to_json(m);
  CHECK(j["cells"].size() == 2);
  CHECK(j["systems"][0] == "MoEL");
}

TEST_CASE("likert summary") {
  std::vector<LikertRecord> r{
      {"1", "X", 3, 2, 3}, {"1", "X", 1, 2, 3},  // averaged to 2, 2, 3
      {"2", "X", 2, 2, 2}, {"3", "X", 3, 1, 2},
      {"1", "Y", 1, 2, 3}, {"2", "Y", 1, 2, 2}, {"3", "Y", 1, 1, 2},
  };
  const auto s = likert_summary(r);
  REQUIRE(s.means.size() == 2);
  CHECK(s.means[0].system == "X");
  CHECK(s.means[0].n_items == 3);
  CHECK(s.means[0].empathy == Approx(2.333));
  CHECK(s.means[0].get(LikertDim::fluency) == Approx(2.333));
  CHECK(s.means[1].empathy == 1.0);
  REQUIRE(s.comparisons.size() == 3);
  const auto& emp = s.comparisons[0];
  CHECK(emp.dim == LikertDim::empathy);
  CHECK(emp.test.n == 3);
  CHECK(emp.test.mean_diff == Approx(4.0 / 3.0));
  const auto same = s.comparisons[1];
  CHECK(same.test.t == 0.0);
  CHECK_FALSE(same.significant);
  CHECK_THROWS(likert_summary({{"1", "X", 4, 0, 0}}));
  CHECK(to_json(s)["means"].size() == 2);
  CHECK(format_likert_table(s).find("2.333") != std::string::npos);
}

TEST_CASE("csv readers") {
  std::istringstream j("item,system_a,system_b,verdict\n1,A,B,a\n2,\"A\",B,tie\n");
  const auto js = read_judgments_csv(j);
  REQUIRE(js.size() == 2);
  CHECK(js[1].verdict == Verdict::tie);
  std::istringstream bad("1,A,B,maybe\n");
  CHECK_THROWS(read_judgments_csv(bad));
  std::istringstream self("1,A,A,a\n");
  CHECK_THROWS(read_judgments_csv(self));

  std::istringstream r("1,X,3,2,1\n2,X,0,0,0\n");
  CHECK(read_ratings_csv(r).size() == 2);
  std::istringstream out_of_range("1,X,5,2,1\n");
  CHECK_THROWS(read_ratings_csv(out_of_range));
}

}
