#pragma once

#include "labrisk/dataio.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace labrisk::interpret {

struct EffectSize {
  double u = 0.0;            // case-over-control wins, ties as 1/2
  double rank_biserial = 0.0;  // 2U/(n1*n0) - 1
  double p_value = 1.0;
  std::size_t n_case = 0;
  std::size_t n_control = 0;
};

struct FeatureReportRow {
  int rank = 0;
  std::string feature_code;
  std::string clinical_alias;
  double importance = 0.0;
  std::string domain;
  double p_value = 1.0;
  std::string trend;  // "higher-in-case" | "lower-in-case" | "limited"
};

struct FeatureReport {
  std::vector<FeatureReportRow> rows;
  bool importance_available = true;
  std::string notice;  // set when the selected model carries no importances
};

struct BaselineRow {
  std::string characteristic;
  std::string level;  // empty for continuous rows and categorical headers
  std::string overall, control, cases;
  std::string test;  // "Mann-Whitney" | "chi-square" | "Fisher"
  std::optional<double> p_value;
};

struct CategoricalTestResult {
  double statistic = 0.0;  // 0 for Fisher
  double p_value = 1.0;
  std::string test;  // "chi-square" | "Fisher" | "chi-square (small expected counts)"
};

// Two-sided p via normal approximation with tie-corrected variance and
// continuity correction.
EffectSize mann_whitney(const std::vector<double>& case_values,
                        const std::vector<double>& control_values);

// z = (x - median) / IQR with interpolated quantiles at position (n-1)*q.
// Zero IQR flags the feature and maps everything to 0.
struct RobustZ {
  std::vector<double> z;
  double median = 0.0;
  double iqr = 0.0;
  bool degenerate_spread = false;
};
RobustZ robust_z(const std::vector<double>& values, const std::vector<double>& reference);

double interpolated_quantile(std::vector<double> values, double q);

// Chi-square when all expected counts are >= 5, Fisher exact for small 2x2,
// chi-square with a warning for small 2xc.
CategoricalTestResult categorical_test(const std::vector<std::vector<long>>& counts);

struct ReportMaps {
  std::map<std::string, std::string> alias;   // analyte -> clinical name
  std::map<std::string, std::string> domain;  // analyte -> domain tag
  double limited_trend_cutoff = 0.1;          // |r| below this -> "limited"
};

FeatureReport feature_report(const std::optional<Vector>& importance,
                             const std::vector<std::string>& feature_names,
                             const std::vector<std::size_t>& feature_source_column,
                             const dataio::Cohort& cohort, const ReportMaps& maps,
                             int top_k = 10);

std::vector<BaselineRow> baseline_table(const dataio::Cohort& cohort,
                                        const std::vector<std::string>& characteristics);

std::string format_baseline_text(const std::vector<BaselineRow>& rows);
std::string format_feature_report_text(const FeatureReport& report);

// Shared numeric helpers (standard functions, not paper-specific).
double normal_cdf(double z);
double gamma_q(double a, double x);  // regularized upper incomplete gamma

}  // namespace labrisk::interpret
