#include "labrisk/interpret.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace labrisk::interpret {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

// Regularized lower incomplete gamma by series expansion.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma by continued fraction (Lentz).
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw ConfigError("gamma_q: invalid arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

EffectSize mann_whitney(const std::vector<double>& case_values,
                        const std::vector<double>& control_values) {
  if (case_values.empty() || control_values.empty())
    throw DataError("mann_whitney: empty group");
  const std::size_t n1 = case_values.size();
  const std::size_t n2 = control_values.size();
  const std::size_t n = n1 + n2;

  std::vector<std::pair<double, int>> pooled;  // (value, 1 = case)
  pooled.reserve(n);
  for (double v : case_values) pooled.emplace_back(v, 1);
  for (double v : control_values) pooled.emplace_back(v, 0);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Midranks, accumulating the tie-correction term sum(t^3 - t).
  double rank_sum_case = 0.0;
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && pooled[j].first == pooled[i].first) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    auto t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    for (std::size_t k = i; k < j; ++k)
      if (pooled[k].second == 1) rank_sum_case += midrank;
    i = j;
  }

  EffectSize e;
  e.n_case = n1;
  e.n_control = n2;
  const double n1d = static_cast<double>(n1), n2d = static_cast<double>(n2);
  e.u = rank_sum_case - n1d * (n1d + 1.0) / 2.0;
  e.rank_biserial = 2.0 * e.u / (n1d * n2d) - 1.0;

  const double mean_u = n1d * n2d / 2.0;
  const double nd = static_cast<double>(n);
  double var_u = n1d * n2d / 12.0 * ((nd + 1.0) - tie_term / (nd * (nd - 1.0)));
  if (var_u <= 0.0) {
    e.p_value = 1.0;
    return e;
  }
  double z = (std::abs(e.u - mean_u) - 0.5) / std::sqrt(var_u);  // continuity correction
  if (z < 0.0) z = 0.0;
  e.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(z)));
  return e;
}

double interpolated_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  double pos = q * static_cast<double>(values.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

RobustZ robust_z(const std::vector<double>& values, const std::vector<double>& reference) {
  RobustZ out;
  out.median = interpolated_quantile(reference, 0.5);
  out.iqr = interpolated_quantile(reference, 0.75) - interpolated_quantile(reference, 0.25);
  out.z.resize(values.size());
  if (out.iqr == 0.0) {
    out.degenerate_spread = true;
    std::fill(out.z.begin(), out.z.end(), 0.0);
    return out;
  }
  for (std::size_t i = 0; i < values.size(); ++i)
    out.z[i] = (values[i] - out.median) / out.iqr;
  return out;
}

namespace {

double fisher_2x2_two_sided(long a, long b, long c, long d) {
  long r1 = a + b, r2 = c + d, c1 = a + c, n = a + b + c + d;
  auto log_prob = [&](long x) {
    // P(X = x) for the hypergeometric with these margins.
    long y = r1 - x, z = c1 - x, w = r2 - (c1 - x);
    return std::lgamma(static_cast<double>(r1 + 1)) + std::lgamma(static_cast<double>(r2 + 1)) +
           std::lgamma(static_cast<double>(c1 + 1)) +
           std::lgamma(static_cast<double>(n - c1 + 1)) -
           std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(x + 1)) -
           std::lgamma(static_cast<double>(y + 1)) - std::lgamma(static_cast<double>(z + 1)) -
           std::lgamma(static_cast<double>(w + 1));
  };
  long lo = std::max(0L, c1 - r2);
  long hi = std::min(r1, c1);
  double lp_obs = log_prob(a);
  double p = 0.0;
  for (long x = lo; x <= hi; ++x) {
    double lp = log_prob(x);
    if (lp <= lp_obs + 1e-7) p += std::exp(lp);
  }
  return std::min(1.0, p);
}

}  // namespace

CategoricalTestResult categorical_test(const std::vector<std::vector<long>>& counts) {
  if (counts.size() != 2 || counts[0].empty() || counts[0].size() != counts[1].size())
    throw ConfigError("categorical_test: expected a 2 x c table");
  const std::size_t c = counts[0].size();
  std::vector<long> row_sum(2, 0), col_sum(c, 0);
  long n = 0;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      if (counts[r][j] < 0) throw ConfigError("categorical_test: negative count");
      row_sum[r] += counts[r][j];
      col_sum[j] += counts[r][j];
      n += counts[r][j];
    }
  if (row_sum[0] == 0 || row_sum[1] == 0 ||
      std::any_of(col_sum.begin(), col_sum.end(), [](long s) { return s == 0; }))
    throw DataError("categorical_test: zero marginal");

  bool small_expected = false;
  double chi2 = 0.0;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      double expected = static_cast<double>(row_sum[r]) * static_cast<double>(col_sum[j]) /
                        static_cast<double>(n);
      if (expected < 5.0) small_expected = true;
      double d = static_cast<double>(counts[r][j]) - expected;
      chi2 += d * d / expected;
    }

  CategoricalTestResult out;
  if (!small_expected) {
    out.statistic = chi2;
    out.p_value = gamma_q(static_cast<double>(c - 1) / 2.0, chi2 / 2.0);
    out.test = "chi-square";
  } else if (c == 2) {
    out.statistic = 0.0;
    out.p_value = fisher_2x2_two_sided(counts[0][0], counts[0][1], counts[1][0], counts[1][1]);
    out.test = "Fisher";
  } else {
    out.statistic = chi2;
    out.p_value = gamma_q(static_cast<double>(c - 1) / 2.0, chi2 / 2.0);
    out.test = "chi-square (small expected counts)";
  }
  return out;
}

namespace {

std::vector<double> column_group_values(const dataio::Cohort& cohort, std::size_t col,
                                        int label) {
  std::vector<double> out;
  const auto j = static_cast<Eigen::Index>(col);
  for (Eigen::Index i = 0; i < cohort.n(); ++i)
    if (cohort.labels[i] == label && !cohort.missing_mask(i, j))
      out.push_back(cohort.values(i, j));
  return out;
}

std::string alias_for(const dataio::ColumnMeta& meta, const ReportMaps& maps) {
  auto it = maps.alias.find(meta.analyte);
  std::string base = it != maps.alias.end() ? it->second : meta.analyte;
  if (meta.week) base += " at week " + std::to_string(*meta.week);
  return base;
}

std::string domain_for(const dataio::ColumnMeta& meta, const ReportMaps& maps) {
  auto it = maps.domain.find(meta.analyte);
  return it != maps.domain.end() ? it->second : "Unassigned";
}

std::string format_compact(double v) {
  std::ostringstream os;
  if (v == std::floor(v) && std::abs(v) < 1e7) {
    os << static_cast<long long>(v);
  } else {
    os << std::fixed << std::setprecision(2) << v;
  }
  return os.str();
}

std::string format_p(double p) {
  if (p < 0.001) return "< 0.001";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << p;
  return os.str();
}

}  // namespace

FeatureReport feature_report(const std::optional<Vector>& importance,
                             [[maybe_unused]] const std::vector<std::string>& feature_names,
                             const std::vector<std::size_t>& feature_source_column,
                             const dataio::Cohort& cohort, const ReportMaps& maps,
                             int top_k) {
  FeatureReport report;

  // Aggregate per source column (one-hot blocks collapse to their column).
  std::map<std::size_t, double> col_importance;
  if (importance) {
    for (Eigen::Index f = 0; f < importance->size(); ++f)
      col_importance[feature_source_column[static_cast<std::size_t>(f)]] += (*importance)[f];
  } else {
    report.importance_available = false;
    report.notice =
        "The selected model family carries no native feature importance; "
        "features are ranked by |rank-biserial effect size| instead.";
  }

  struct Scored {
    std::size_t col;
    double score;
    EffectSize effect;
  };
  std::vector<Scored> scored;
  std::vector<std::size_t> candidates;
  if (importance) {
    for (const auto& [col, imp] : col_importance) candidates.push_back(col);
  } else {
    for (std::size_t j = 0; j < cohort.columns.size(); ++j) candidates.push_back(j);
  }
  for (std::size_t col : candidates) {
    auto case_vals = column_group_values(cohort, col, 1);
    auto ctrl_vals = column_group_values(cohort, col, 0);
    if (case_vals.empty() || ctrl_vals.empty()) continue;
    EffectSize e = mann_whitney(case_vals, ctrl_vals);
    double score = importance ? col_importance[col] : std::abs(e.rank_biserial);
    scored.push_back({col, score, e});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.col < b.col;
  });

  int rank = 0;
  for (const auto& sc : scored) {
    if (rank >= top_k) break;
    const auto& meta = cohort.columns[sc.col];
    FeatureReportRow row;
    row.rank = ++rank;
    row.feature_code = meta.name;
    row.clinical_alias = alias_for(meta, maps);
    row.importance = importance ? sc.score : 0.0;
    row.domain = domain_for(meta, maps);
    row.p_value = sc.effect.p_value;
    if (std::abs(sc.effect.rank_biserial) < maps.limited_trend_cutoff)
      row.trend = "limited";
    else
      row.trend = sc.effect.rank_biserial > 0 ? "higher-in-case" : "lower-in-case";
    report.rows.push_back(row);
  }
  return report;
}

std::vector<BaselineRow> baseline_table(const dataio::Cohort& cohort,
                                        const std::vector<std::string>& characteristics) {
  std::vector<BaselineRow> rows;
  for (const auto& name : characteristics) {
    std::optional<std::size_t> col;
    for (std::size_t j = 0; j < cohort.columns.size(); ++j)
      if (cohort.columns[j].name == name) col = j;
    if (!col) throw DataError("baseline_table: unknown characteristic " + name);
    const auto& meta = cohort.columns[*col];
    const auto jc = static_cast<Eigen::Index>(*col);

    if (meta.kind == dataio::ColumnKind::continuous) {
      auto summarize = [&](std::optional<int> label) {
        std::vector<double> vals;
        for (Eigen::Index i = 0; i < cohort.n(); ++i)
          if ((!label || cohort.labels[i] == *label) && !cohort.missing_mask(i, jc))
            vals.push_back(cohort.values(i, jc));
        if (vals.empty()) return std::string("-");
        double med = interpolated_quantile(vals, 0.5);
        double q1 = interpolated_quantile(vals, 0.25);
        double q3 = interpolated_quantile(vals, 0.75);
        return format_compact(med) + " [" + format_compact(q1) + ", " + format_compact(q3) + "]";
      };
      BaselineRow row;
      row.characteristic = name;
      row.overall = summarize(std::nullopt);
      row.control = summarize(0);
      row.cases = summarize(1);
      row.test = "Mann-Whitney";
      auto case_vals = column_group_values(cohort, *col, 1);
      auto ctrl_vals = column_group_values(cohort, *col, 0);
      if (!case_vals.empty() && !ctrl_vals.empty())
        row.p_value = mann_whitney(case_vals, ctrl_vals).p_value;
      rows.push_back(row);
    } else {
      const auto& levels = meta.categories;
      std::vector<std::vector<long>> counts(2, std::vector<long>(levels.size(), 0));
      std::vector<long> group_total(2, 0);
      for (Eigen::Index i = 0; i < cohort.n(); ++i) {
        if (cohort.missing_mask(i, jc)) continue;
        int g = cohort.labels[i];
        counts[static_cast<std::size_t>(g)][static_cast<std::size_t>(cohort.values(i, jc))]++;
        group_total[static_cast<std::size_t>(g)]++;
      }
      BaselineRow header;
      header.characteristic = name;
      try {
        auto test = categorical_test({counts[0], counts[1]});
        header.test = test.test;
        header.p_value = test.p_value;
      } catch (const DataError&) {
        header.test = "-";
      }
      rows.push_back(header);
      for (std::size_t l = 0; l < levels.size(); ++l) {
        BaselineRow row;
        row.characteristic = name;
        row.level = levels[l];
        auto pct = [&](long k, long total) {
          std::ostringstream os;
          os << k << " (" << static_cast<long>(std::lround(
                    total > 0 ? 100.0 * static_cast<double>(k) / static_cast<double>(total) : 0.0))
             << "%)";
          return os.str();
        };
        row.overall = pct(counts[0][l] + counts[1][l], group_total[0] + group_total[1]);
        row.control = pct(counts[0][l], group_total[0]);
        row.cases = pct(counts[1][l], group_total[1]);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

std::string format_baseline_text(const std::vector<BaselineRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "Characteristic" << std::setw(24) << "Overall"
     << std::setw(24) << "Control" << std::setw(24) << "Case" << "P value\n";
  for (const auto& r : rows) {
    std::string label = r.level.empty() ? r.characteristic : ("  " + r.level);
    os << std::left << std::setw(28) << label << std::setw(24) << r.overall << std::setw(24)
       << r.control << std::setw(24) << r.cases
       << (r.p_value ? format_p(*r.p_value) : "") << "\n";
  }
  os << "\nContinuous variables are reported as median [interquartile range], "
        "and categorical variables as n (%).\n";
  return os.str();
}

std::string format_feature_report_text(const FeatureReport& report) {
  std::ostringstream os;
  if (!report.importance_available) os << report.notice << "\n\n";
  os << std::left << std::setw(6) << "Rank" << std::setw(12) << "Feature" << std::setw(42)
     << "Clinical alias" << std::setw(12) << "Importance" << std::setw(22) << "Domain"
     << std::setw(10) << "P value" << "Group trend\n";
  for (const auto& r : report.rows) {
    std::ostringstream imp;
    imp << std::fixed << std::setprecision(3) << r.importance;
    os << std::left << std::setw(6) << r.rank << std::setw(12) << r.feature_code
       << std::setw(42) << r.clinical_alias << std::setw(12)
       << (report.importance_available ? imp.str() : std::string("-")) << std::setw(22)
       << r.domain << std::setw(10) << format_p(r.p_value) << r.trend << "\n";
  }
  os << "\nGroup trends summarize distributional direction and do not imply causality.\n";
  return os.str();
}

}  // namespace labrisk::interpret
