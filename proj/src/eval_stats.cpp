#include "affdec/eval_stats.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <istream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace affdec {

using json = nlohmann::json;

Verdict parse_verdict(std::string_view s) {
  if (s == "a" || s == "A") return Verdict::a;
  if (s == "b" || s == "B") return Verdict::b;
  if (s == "tie" || s == "TIE" || s == "Tie") return Verdict::tie;
  throw std::invalid_argument("unknown verdict \"" + std::string(s) +
                              "\" (expected a, b or tie)");
}

// ---- distributions ------------------------------------------------------------

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

ZTest two_proportion_z_test(long x1, long n1, long x2, long n2) {
  if (n1 < 1 || n2 < 1) throw std::invalid_argument("z-test: sample sizes must be >= 1");
  if (x1 < 0 || x1 > n1 || x2 < 0 || x2 > n2)
    throw std::invalid_argument("z-test: counts must lie in [0, n]");
  const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  const double pooled =
      static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  if (pooled <= 0.0 || pooled >= 1.0) return {0.0, 1.0};
  const double se = std::sqrt(pooled * (1.0 - pooled) *
                              (1.0 / static_cast<double>(n1) +
                               1.0 / static_cast<double>(n2)));
  const double z = (p1 - p2) / se;
  return {z, std::erfc(std::abs(z) / std::sqrt(2.0))};
}

namespace {

// Continued fraction for the incomplete beta, modified Lentz.
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("incomplete beta: a, b must be positive");
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete beta: x outside [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * beta_cf(a, b, x) / a;
  return 1.0 - std::exp(log_front) * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("t distribution: df must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

std::optional<PairedTTest> paired_t_test(const std::vector<double>& a,
                                         const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired t-test: size mismatch");
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  PairedTTest r;
  r.n = n;
  r.mean_diff = mean;
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    if (mean == 0.0) return r;
    r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_two_sided_p(r.t, static_cast<double>(n - 1));
  return r;
}

// ---- preference matrix ----------------------------------------------------------

const PreferenceCell* PreferenceMatrix::cell(const std::string& row,
                                             const std::string& col) const {
  const auto it = cells.find({row, col});
  return it == cells.end() ? nullptr : &it->second;
}

PreferenceMatrix preference_matrix(const std::vector<PreferenceJudgment>& judgments,
                                   double alpha) {
  PreferenceMatrix m;
  m.alpha = alpha;
  auto note = [&](const std::string& s) {
    if (std::find(m.systems.begin(), m.systems.end(), s) == m.systems.end())
      m.systems.push_back(s);
  };
  for (const auto& j : judgments) {
    if (j.system_a == j.system_b)
      throw std::invalid_argument("judgment " + j.item + " compares " + j.system_a +
                                  " with itself");
    note(j.system_a);
    note(j.system_b);
    auto& ab = m.cells[{j.system_a, j.system_b}];
    auto& ba = m.cells[{j.system_b, j.system_a}];
    ++ab.n;
    ++ba.n;
    if (j.verdict == Verdict::a) ++ab.wins;
    if (j.verdict == Verdict::b) ++ba.wins;
  }
  for (auto& [key, c] : m.cells) {
    const auto& rev = m.cells.at({key.second, key.first});
    const auto n = static_cast<long>(c.n);
    c.pct = 100.0 * static_cast<double>(c.wins) / static_cast<double>(c.n);
    c.test = two_proportion_z_test(static_cast<long>(c.wins), n,
                                   static_cast<long>(rev.wins), n);
    c.significant = c.wins > rev.wins && c.test.p < alpha;
  }
  return m;
}

// ---- Likert ---------------------------------------------------------------------

std::string to_string(LikertDim d) {
  switch (d) {
    case LikertDim::empathy: return "empathy";
    case LikertDim::relevance: return "relevance";
    case LikertDim::fluency: return "fluency";
  }
  return "?";
}

double LikertMeans::get(LikertDim d) const {
  switch (d) {
    case LikertDim::empathy: return empathy;
    case LikertDim::relevance: return relevance;
    case LikertDim::fluency: return fluency;
  }
  return 0.0;
}

namespace {

double score(const LikertRecord& r, LikertDim d) {
  switch (d) {
    case LikertDim::empathy: return r.empathy;
    case LikertDim::relevance: return r.relevance;
    case LikertDim::fluency: return r.fluency;
  }
  return 0.0;
}

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

}  // namespace

LikertSummary likert_summary(const std::vector<LikertRecord>& records,
                             double alpha) {
  LikertSummary out;
  out.alpha = alpha;
  std::vector<std::string> systems;
  // system -> item -> (sums per dim, count)
  std::map<std::string, std::map<std::string, std::pair<std::array<double, 3>, int>>> per;
  for (const auto& r : records) {
    for (LikertDim d : kLikertDims) {
      const double v = score(r, d);
      if (!(v >= kLikertMin && v <= kLikertMax))
        throw std::invalid_argument("rating of " + r.system + " on item " + r.item +
                                    ": " + to_string(d) + " outside [0, 3]");
    }
    if (std::find(systems.begin(), systems.end(), r.system) == systems.end())
      systems.push_back(r.system);
    auto& slot = per[r.system][r.item];
    for (LikertDim d : kLikertDims)
      slot.first[static_cast<int>(d)] += score(r, d);
    ++slot.second;
  }
  auto item_mean = [](const std::pair<std::array<double, 3>, int>& s, LikertDim d) {
    return s.first[static_cast<int>(d)] / s.second;
  };
  for (const auto& s : systems) {
    LikertMeans m;
    m.system = s;
    const auto& items = per.at(s);
    m.n_items = items.size();
    std::array<double, 3> tot{};
    for (const auto& [item, slot] : items)
      for (LikertDim d : kLikertDims) tot[static_cast<int>(d)] += item_mean(slot, d);
    const auto n = static_cast<double>(items.size());
    m.empathy = round3(tot[0] / n);
    m.relevance = round3(tot[1] / n);
    m.fluency = round3(tot[2] / n);
    out.means.push_back(m);
  }
  for (std::size_t i = 0; i < systems.size(); ++i) {
    for (std::size_t j = i + 1; j < systems.size(); ++j) {
      const auto& A = per.at(systems[i]);
      const auto& B = per.at(systems[j]);
      for (LikertDim d : kLikertDims) {
        std::vector<double> xa, xb;
        for (const auto& [item, slot] : A) {
          const auto it = B.find(item);
          if (it == B.end()) continue;
          xa.push_back(item_mean(slot, d));
          xb.push_back(item_mean(it->second, d));
        }
        const auto t = paired_t_test(xa, xb);
        if (!t) continue;
        out.comparisons.push_back({systems[i], systems[j], d, *t, t->p < alpha});
      }
    }
  }
  return out;
}

// ---- CSV ------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? "" : f.substr(b, e - b + 1);
  }
  return fields;
}

template <typename F>
void for_each_row(std::istream& in, std::size_t n_fields, const char* what, F f) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (lineno == 1 && fields[0] == "item") continue;
    if (fields.size() != n_fields)
      throw std::runtime_error(std::string(what) + " line " + std::to_string(lineno) +
                               ": expected " + std::to_string(n_fields) +
                               " fields, found " + std::to_string(fields.size()));
    try {
      f(fields);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(what) + " line " + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
}

}  // namespace

std::vector<PreferenceJudgment> read_judgments_csv(std::istream& in) {
  std::vector<PreferenceJudgment> out;
  for_each_row(in, 4, "judgments", [&](const std::vector<std::string>& f) {
    out.push_back({f[0], f[1], f[2], parse_verdict(f[3])});
    if (f[1] == f[2]) throw std::invalid_argument("system compared with itself");
  });
  return out;
}

std::vector<LikertRecord> read_ratings_csv(std::istream& in) {
  std::vector<LikertRecord> out;
  for_each_row(in, 5, "ratings", [&](const std::vector<std::string>& f) {
    LikertRecord r{f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
    for (double v : {r.empathy, r.relevance, r.fluency})
      if (!(v >= kLikertMin && v <= kLikertMax))
        throw std::invalid_argument("score outside [0, 3]");
    out.push_back(std::move(r));
  });
  return out;
}

// ---- reports --------------------------------------------------------------------

namespace {

json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

std::string pad(const std::string& s, std::size_t width, std::size_t visible) {
  return std::string(width > visible ? width - visible : 0, ' ') + s;
}

}  // namespace

json to_json(const PreferenceMatrix& m) {
  json cells = json::array();
  for (const auto& row : m.systems) {
    for (const auto& col : m.systems) {
      const auto* c = m.cell(row, col);
      if (!c) continue;
      cells.push_back({{"row", row},
                       {"col", col},
                       {"pct", c->pct},
                       {"wins", c->wins},
                       {"n", c->n},
                       {"z", c->test.z},
                       {"p_value", c->test.p},
                       {"significant", c->significant}});
    }
  }
  return {{"systems", m.systems}, {"alpha", m.alpha}, {"cells", cells}};
}

json to_json(const LikertSummary& s) {
  json means = json::array();
  for (const auto& m : s.means)
    means.push_back({{"system", m.system},
                     {"n_items", m.n_items},
                     {"empathy", m.empathy},
                     {"relevance", m.relevance},
                     {"fluency", m.fluency}});
  json comps = json::array();
  for (const auto& c : s.comparisons)
    comps.push_back({{"system_a", c.system_a},
                     {"system_b", c.system_b},
                     {"dimension", to_string(c.dim)},
                     {"n", c.test.n},
                     {"mean_diff", c.test.mean_diff},
                     {"t", number_or_string(c.test.t)},
                     {"p_value", c.test.p},
                     {"significant", c.significant}});
  return {{"alpha", s.alpha}, {"means", means}, {"comparisons", comps}};
}

std::string format_preference_table(const PreferenceMatrix& m) {
  // "†" is three bytes but one column wide.
  std::vector<std::vector<std::pair<std::string, std::size_t>>> grid;
  grid.push_back({{"", 0}});
  for (const auto& s : m.systems) grid[0].push_back({s, s.size()});
  for (const auto& row : m.systems) {
    std::vector<std::pair<std::string, std::size_t>> line{{row, row.size()}};
    for (const auto& col : m.systems) {
      if (row == col) {
        line.push_back({"-", 1});
        continue;
      }
      const auto* c = m.cell(row, col);
      if (!c) {
        line.push_back({"", 0});
        continue;
      }
      std::string v = std::to_string(static_cast<long>(std::lround(c->pct)));
      std::size_t w = v.size();
      if (c->significant) {
        v += "†";
        ++w;
      }
      line.push_back({v, w});
    }
    grid.push_back(std::move(line));
  }
  std::vector<std::size_t> width(m.systems.size() + 1, 0);
  for (const auto& line : grid)
    for (std::size_t i = 0; i < line.size(); ++i)
      width[i] = std::max(width[i], line[i].second);
  std::ostringstream out;
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i == 0) {
        out << line[i].first << std::string(width[0] - line[i].second, ' ');
      } else {
        out << "  " << pad(line[i].first, width[i], line[i].second);
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string format_likert_table(const LikertSummary& s) {
  std::size_t w = 6;
  for (const auto& m : s.means) w = std::max(w, m.system.size());
  std::ostringstream out;
  char buf[64];
  out << "system" << std::string(w - 6, ' ') << "    empathy  relevance    fluency\n";
  for (const auto& m : s.means) {
    std::snprintf(buf, sizeof buf, "  %9.3f  %9.3f  %9.3f", m.empathy, m.relevance,
                  m.fluency);
    out << m.system << std::string(w - m.system.size(), ' ') << buf << '\n';
  }
  if (!s.comparisons.empty()) {
    out << "\npaired t-tests (a - b)\n";
    for (const auto& c : s.comparisons) {
      std::snprintf(buf, sizeof buf, "  t=%.3f  p=%.4g", c.test.t, c.test.p);
      out << c.system_a << " vs " << c.system_b << "  " << to_string(c.dim) << buf
          << (c.significant ? "  †" : "") << '\n';
    }
  }
  return out.str();
}

}  // namespace affdec
