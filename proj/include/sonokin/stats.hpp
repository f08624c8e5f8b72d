#ifndef SONOKIN_STATS_HPP
#define SONOKIN_STATS_HPP

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sonokin/common.hpp"
#include "sonokin/csv.hpp"

namespace sonokin {

// ---------------------------------------------------------------------------
// Regularized incomplete beta function (continued fraction, Lentz's method)
// and the t / F tail probabilities built on it.
// ---------------------------------------------------------------------------

namespace detail {

inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// I_x(a, b), the regularized incomplete beta function.
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) fail(ErrorCode::ConfigError, "incomplete_beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Two-sided p-value for Student's t with dof degrees of freedom.
inline double t_two_sided_p(double t, double dof) {
  if (!std::isfinite(t)) return 0.0;
  return incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

/// P(F' > f) for an F distribution with (d1, d2) degrees of freedom.
inline double f_tail_p(double f, double d1, double d2) {
  if (f <= 0.0) return 1.0;
  if (!std::isfinite(f)) return 0.0;
  return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

// ---------------------------------------------------------------------------
// Repeated-measures two-way ANOVA (within-subject factors A and B)
// ---------------------------------------------------------------------------

/// Complete S x a x b design: one value per (subject, A-level, B-level).
struct RmDesign {
  int subjects = 0;
  int levels_a = 0;
  int levels_b = 0;
  std::vector<double> values;  // indexed [s*levels_a*levels_b + i*levels_b + j]

  double& at(int s, int i, int j) {
    return values[static_cast<std::size_t>(s) * levels_a * levels_b +
                  static_cast<std::size_t>(i) * levels_b + j];
  }
  double at(int s, int i, int j) const {
    return values[static_cast<std::size_t>(s) * levels_a * levels_b +
                  static_cast<std::size_t>(i) * levels_b + j];
  }

  static RmDesign create(int subjects, int levels_a, int levels_b) {
    RmDesign d;
    d.subjects = subjects;
    d.levels_a = levels_a;
    d.levels_b = levels_b;
    d.values.assign(static_cast<std::size_t>(subjects) * levels_a * levels_b,
                    std::numeric_limits<double>::quiet_NaN());
    return d;
  }

  bool complete() const {
    if (subjects < 2 || levels_a < 2 || levels_b < 2) return false;
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

struct AnovaEffect {
  std::string name;        // "A", "B", "AxB"
  double ss = 0.0;         // effect sum of squares
  double dof = 0.0;
  double error_ss = 0.0;   // matching subject-interaction error term
  double error_dof = 0.0;
  double f = 0.0;
  double p = 1.0;
  bool degenerate = false; // zero error mean square
};

struct AnovaTable {
  AnovaEffect a;
  AnovaEffect b;
  AnovaEffect ab;
  double ss_subjects = 0.0;
  double ss_total = 0.0;
};

/// Univariate within-subject partitioning; each effect is tested against its own
/// subject-interaction error term. With 2-level factors sphericity holds trivially,
/// so no correction is applied.
inline AnovaTable rm_two_way_anova(const RmDesign& design) {
  if (!design.complete())
    fail(ErrorCode::IncompleteDesign,
         "repeated-measures ANOVA needs a complete design with >= 2 subjects and 2x2 levels");
  const int S = design.subjects;
  const int A = design.levels_a;
  const int B = design.levels_b;
  const double nS = S, nA = A, nB = B;

  double grand = 0.0;
  for (double v : design.values) grand += v;
  grand /= (nS * nA * nB);

  std::vector<double> m_s(S, 0.0), m_a(A, 0.0), m_b(B, 0.0);
  std::vector<double> m_ab(static_cast<std::size_t>(A) * B, 0.0);
  std::vector<double> m_as(static_cast<std::size_t>(A) * S, 0.0);
  std::vector<double> m_bs(static_cast<std::size_t>(B) * S, 0.0);
  for (int s = 0; s < S; ++s)
    for (int i = 0; i < A; ++i)
      for (int j = 0; j < B; ++j) {
        const double v = design.at(s, i, j);
        m_s[s] += v / (nA * nB);
        m_a[i] += v / (nS * nB);
        m_b[j] += v / (nS * nA);
        m_ab[static_cast<std::size_t>(i) * B + j] += v / nS;
        m_as[static_cast<std::size_t>(i) * S + s] += v / nB;
        m_bs[static_cast<std::size_t>(j) * S + s] += v / nA;
      }

  AnovaTable table;
  double ss_a = 0.0, ss_b = 0.0, ss_ab = 0.0, ss_s = 0.0;
  double ss_as = 0.0, ss_bs = 0.0, ss_abs = 0.0, ss_total = 0.0;
  for (int i = 0; i < A; ++i) ss_a += nS * nB * (m_a[i] - grand) * (m_a[i] - grand);
  for (int j = 0; j < B; ++j) ss_b += nS * nA * (m_b[j] - grand) * (m_b[j] - grand);
  for (int s = 0; s < S; ++s) ss_s += nA * nB * (m_s[s] - grand) * (m_s[s] - grand);
  for (int i = 0; i < A; ++i)
    for (int j = 0; j < B; ++j) {
      const double dev = m_ab[static_cast<std::size_t>(i) * B + j] - m_a[i] - m_b[j] + grand;
      ss_ab += nS * dev * dev;
    }
  for (int i = 0; i < A; ++i)
    for (int s = 0; s < S; ++s) {
      const double dev = m_as[static_cast<std::size_t>(i) * S + s] - m_a[i] - m_s[s] + grand;
      ss_as += nB * dev * dev;
    }
  for (int j = 0; j < B; ++j)
    for (int s = 0; s < S; ++s) {
      const double dev = m_bs[static_cast<std::size_t>(j) * S + s] - m_b[j] - m_s[s] + grand;
      ss_bs += nA * dev * dev;
    }
  for (int s = 0; s < S; ++s)
    for (int i = 0; i < A; ++i)
      for (int j = 0; j < B; ++j) {
        const double dev = design.at(s, i, j) -
                           m_ab[static_cast<std::size_t>(i) * B + j] -
                           m_as[static_cast<std::size_t>(i) * S + s] -
                           m_bs[static_cast<std::size_t>(j) * S + s] + m_a[i] + m_b[j] +
                           m_s[s] - grand;
        ss_abs += dev * dev;
        const double tot = design.at(s, i, j) - grand;
        ss_total += tot * tot;
      }

  // a zero error mean square up to accumulation noise counts as degenerate
  const double degenerate_scale = 1e-18 * (grand * grand + ss_total + 1.0);
  auto make_effect = [degenerate_scale](const std::string& name, double ss, double dof,
                                        double err_ss, double err_dof) {
    AnovaEffect e;
    e.name = name;
    e.ss = ss;
    e.dof = dof;
    e.error_ss = err_ss;
    e.error_dof = err_dof;
    const double ms = ss / dof;
    const double err_ms = err_ss / err_dof;
    if (err_ms <= degenerate_scale) {
      e.degenerate = true;
      e.f = ss > degenerate_scale ? std::numeric_limits<double>::infinity() : 0.0;
      e.p = ss > degenerate_scale ? 0.0 : 1.0;
    } else {
      e.f = ms / err_ms;
      e.p = f_tail_p(e.f, dof, err_dof);
    }
    return e;
  };

  table.a = make_effect("A", ss_a, nA - 1, ss_as, (nA - 1) * (nS - 1));
  table.b = make_effect("B", ss_b, nB - 1, ss_bs, (nB - 1) * (nS - 1));
  table.ab = make_effect("AxB", ss_ab, (nA - 1) * (nB - 1), ss_abs,
                         (nA - 1) * (nB - 1) * (nS - 1));
  table.ss_subjects = ss_s;
  table.ss_total = ss_total;
  return table;
}

// ---------------------------------------------------------------------------
// Bonferroni-corrected paired posthoc comparisons
// ---------------------------------------------------------------------------

enum class SignificanceTier { None, P05, P01 };

inline const char* tier_name(SignificanceTier t) {
  switch (t) {
    case SignificanceTier::None: return "none";
    case SignificanceTier::P05: return "p<0.05";
    case SignificanceTier::P01: return "p<0.01";
  }
  return "?";
}

/// A condition is one (A-level, B-level) cell of the design.
struct ConditionRef {
  int a = 0;
  int b = 0;
};

struct PosthocResult {
  ConditionRef first;
  ConditionRef second;
  double t = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  SignificanceTier tier = SignificanceTier::None;
  bool zero_variance = false;
};

inline std::vector<std::pair<ConditionRef, ConditionRef>> all_condition_pairs(
    const RmDesign& design) {
  std::vector<ConditionRef> conditions;
  for (int i = 0; i < design.levels_a; ++i)
    for (int j = 0; j < design.levels_b; ++j) conditions.push_back({i, j});
  std::vector<std::pair<ConditionRef, ConditionRef>> pairs;
  for (std::size_t u = 0; u < conditions.size(); ++u)
    for (std::size_t v = u + 1; v < conditions.size(); ++v)
      pairs.emplace_back(conditions[u], conditions[v]);
  return pairs;
}

/// Paired t-tests across subjects; adjusted p = min(1, m * raw p) with m the
/// family size (defaults to the number of requested pairs). Tier markers sit at
/// alpha and alpha/5, i.e. the published 0.05 / 0.01 levels for alpha = 0.05.
inline std::vector<PosthocResult> bonferroni_posthoc(
    const RmDesign& design, const std::vector<std::pair<ConditionRef, ConditionRef>>& pairs,
    int family_size = 0, double alpha = 0.05) {
  if (!design.complete()) fail(ErrorCode::IncompleteDesign, "posthoc needs a complete design");
  const int m = family_size > 0 ? family_size : static_cast<int>(pairs.size());
  const int S = design.subjects;
  std::vector<PosthocResult> results;
  results.reserve(pairs.size());
  for (const auto& [c1, c2] : pairs) {
    if (c1.a >= design.levels_a || c1.b >= design.levels_b || c2.a >= design.levels_a ||
        c2.b >= design.levels_b)
      fail(ErrorCode::ConfigError, "posthoc pair references a missing condition");
    PosthocResult r;
    r.first = c1;
    r.second = c2;
    double mean = 0.0;
    std::vector<double> diffs(S);
    for (int s = 0; s < S; ++s) {
      diffs[s] = design.at(s, c1.a, c1.b) - design.at(s, c2.a, c2.b);
      mean += diffs[s];
    }
    mean /= S;
    double ss = 0.0;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    const double sd = std::sqrt(ss / (S - 1));  // sample SD for the paired t
    if (sd == 0.0) {
      if (mean == 0.0) {
        r.t = 0.0;
        r.p_raw = 1.0;
      } else {
        r.zero_variance = true;
        r.t = std::numeric_limits<double>::infinity();
        r.p_raw = 0.0;
      }
    } else {
      r.t = mean / (sd / std::sqrt(static_cast<double>(S)));
      r.p_raw = t_two_sided_p(r.t, static_cast<double>(S - 1));
    }
    r.p_adjusted = std::min(1.0, m * r.p_raw);
    if (r.p_adjusted < alpha / 5.0) r.tier = SignificanceTier::P01;
    else if (r.p_adjusted < alpha) r.tier = SignificanceTier::P05;
    results.push_back(r);
  }
  return results;
}

// ---------------------------------------------------------------------------
// CSV interfaces
// ---------------------------------------------------------------------------

/// Input rows: subject,paradigm,feature_set,value. Paradigm and feature-set names
/// become the 2x2 levels in first-seen order.
struct LabeledDesign {
  RmDesign design;
  std::vector<std::string> subjects;
  std::vector<std::string> a_levels;
  std::vector<std::string> b_levels;
};

inline LabeledDesign read_design_csv(const std::string& path) {
  auto table = read_csv(path);
  int c_s = table.column("subject");
  int c_a = table.column("paradigm");
  int c_b = table.column("feature_set");
  int c_v = table.column("value");
  if (c_s < 0 || c_a < 0 || c_b < 0 || c_v < 0)
    fail(ErrorCode::MalformedRow,
         path + ": expected header subject,paradigm,feature_set,value");

  LabeledDesign out;
  auto index_of = [](std::vector<std::string>& names, const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    names.push_back(name);
    return static_cast<int>(names.size() - 1);
  };
  struct Cell {
    int s, a, b;
    double v;
  };
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    std::string where = path + ":" + std::to_string(table.line_numbers[i]);
    Cell c;
    c.s = index_of(out.subjects, row[c_s]);
    c.a = index_of(out.a_levels, row[c_a]);
    c.b = index_of(out.b_levels, row[c_b]);
    c.v = parse_double(row[c_v], where);
    cells.push_back(c);
  }
  out.design = RmDesign::create(static_cast<int>(out.subjects.size()),
                                static_cast<int>(out.a_levels.size()),
                                static_cast<int>(out.b_levels.size()));
  for (const auto& c : cells) out.design.at(c.s, c.a, c.b) = c.v;
  if (!out.design.complete())
    fail(ErrorCode::IncompleteDesign, path + ": design has missing cells or too few levels");
  return out;
}

inline void write_anova_csv(const std::string& path, const AnovaTable& table) {
  CsvWriter w(path);
  w.row({"effect", "ss", "dof", "error_ss", "error_dof", "F", "p", "degenerate"});
  for (const AnovaEffect* e : {&table.a, &table.b, &table.ab}) {
    w.row({e->name, format_double(e->ss, 12), format_double(e->dof, 6),
           format_double(e->error_ss, 12), format_double(e->error_dof, 6),
           format_double(e->f, 12), format_double(e->p, 12), e->degenerate ? "1" : "0"});
  }
  w.close();
}

inline void write_posthoc_csv(const std::string& path, const std::vector<PosthocResult>& results,
                              const std::vector<std::string>& a_levels,
                              const std::vector<std::string>& b_levels) {
  CsvWriter w(path);
  w.row({"pair", "t", "p_raw", "p_adjusted", "tier", "zero_variance"});
  for (const auto& r : results) {
    const std::string pair = a_levels[r.first.a] + "/" + b_levels[r.first.b] + " vs " +
                             a_levels[r.second.a] + "/" + b_levels[r.second.b];
    w.row({pair, format_double(r.t, 12), format_double(r.p_raw, 12),
           format_double(r.p_adjusted, 12), tier_name(r.tier), r.zero_variance ? "1" : "0"});
  }
  w.close();
}

}  // namespace sonokin

#endif  // SONOKIN_STATS_HPP
