#pragma once

// Human-evaluation aggregation: pairwise preference matrices with
// two-proportion z-tests, and Likert means with paired t-tests.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace affdec {

enum class Verdict { a, b, tie };

Verdict parse_verdict(std::string_view s);

struct PreferenceJudgment {
  std::string item;
  std::string system_a;
  std::string system_b;
  Verdict verdict = Verdict::tie;
};

struct LikertRecord {
  std::string item;
  std::string system;
  double empathy = 0.0;
  double relevance = 0.0;
  double fluency = 0.0;
};

inline constexpr double kLikertMin = 0.0;
inline constexpr double kLikertMax = 3.0;

struct ZTest {
  double z = 0.0;
  double p = 1.0;  // two-sided
};

// Pooled two-proportion z-test of x1/n1 against x2/n2. A pooled
// proportion of 0 or 1 gives z = 0, p = 1.
ZTest two_proportion_z_test(long x1, long n1, long x2, long n2);

// Upper tail of the standard normal.
double normal_sf(double z);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// Two-sided p of Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct PairedTTest {
  double t = 0.0;
  double p = 1.0;
  std::size_t n = 0;
  double mean_diff = 0.0;
};

// Differences a[i] - b[i]. nullopt for fewer than two pairs. Zero spread
// gives t = +-inf and p = 0, unless every difference is zero (t = 0, p = 1).
std::optional<PairedTTest> paired_t_test(const std::vector<double>& a,
                                         const std::vector<double>& b);

// ---- preference matrix -----------------------------------------------------------

struct PreferenceCell {
  std::size_t wins = 0;  // judgments favouring the row system
  std::size_t n = 0;     // all judgments of the pair, ties included
  double pct = 0.0;      // 100 * wins / n
  ZTest test;            // row wins vs column wins, both out of n
  bool significant = false;  // row favoured and p < alpha
};

struct PreferenceMatrix {
  std::vector<std::string> systems;  // order of first appearance
  std::map<std::pair<std::string, std::string>, PreferenceCell> cells;
  double alpha = 0.05;

  const PreferenceCell* cell(const std::string& row, const std::string& col) const;
};

PreferenceMatrix preference_matrix(const std::vector<PreferenceJudgment>& judgments,
                                   double alpha = 0.05);

// ---- Likert ------------------------------------------------------------------------

enum class LikertDim { empathy, relevance, fluency };
inline constexpr LikertDim kLikertDims[] = {LikertDim::empathy, LikertDim::relevance,
                                            LikertDim::fluency};
std::string to_string(LikertDim d);

struct LikertMeans {
  std::string system;
  std::size_t n_items = 0;
  double empathy = 0.0;  // rounded to 3 decimals
  double relevance = 0.0;
  double fluency = 0.0;

  double get(LikertDim d) const;
};

struct LikertComparison {
  std::string system_a;
  std::string system_b;
  LikertDim dim = LikertDim::empathy;
  PairedTTest test;  // a minus b over the common items
  bool significant = false;
};

struct LikertSummary {
  std::vector<LikertMeans> means;  // order of first appearance
  std::vector<LikertComparison> comparisons;  // pairs with >= 2 common items
  double alpha = 0.05;
};

// Several ratings of one (item, system) are averaged first.
LikertSummary likert_summary(const std::vector<LikertRecord>& records,
                             double alpha = 0.05);

// ---- I/O ---------------------------------------------------------------------------

// item,system_a,system_b,verdict (header row optional).
std::vector<PreferenceJudgment> read_judgments_csv(std::istream& in);
// item,system,empathy,relevance,fluency (header row optional).
std::vector<LikertRecord> read_ratings_csv(std::istream& in);

nlohmann::json to_json(const PreferenceMatrix& m);
nlohmann::json to_json(const LikertSummary& s);

// Percentages rounded to integers, significant cells marked with a dagger.
std::string format_preference_table(const PreferenceMatrix& m);
std::string format_likert_table(const LikertSummary& s);

}  // namespace affdec
