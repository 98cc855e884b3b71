#pragma once

#include "labrisk/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace labrisk::metrics {

struct ScoredSet {
  Vector probs;
  IntVector labels;  // 0/1

  Eigen::Index n() const { return probs.size(); }
};

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  long n() const { return tp + fp + fn + tn; }
};

// Ratios with empty denominators surface as absent, never as 0.
struct ThresholdMetrics {
  ConfusionCounts counts;
  std::optional<double> accuracy, sensitivity, specificity, ppv, npv, f1;
};

struct CalibrationBin {
  double mean_prob = 0.0;
  double event_rate = 0.0;
  long count = 0;
};

struct CalibrationResult {
  std::vector<CalibrationBin> bins;  // nonempty bins only
  std::vector<int> bin_index;        // original bin id per entry of `bins`
  double ece = 0.0;
};

struct DecisionCurvePoint {
  double threshold = 0.0;  // p_t
  double net_benefit_model = 0.0;
  double net_benefit_all = 0.0;
  double net_benefit_none = 0.0;  // identically 0
};

struct IntervalEstimate {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int resamples = 0;         // B
  int degenerate = 0;        // resamples where the metric was undefined
  std::vector<double> resample_values;  // valid values, in draw order
};

struct RocPoint {
  double fpr = 0.0, tpr = 0.0, threshold = 0.0;
};
struct PrPoint {
  double recall = 0.0, precision = 0.0, threshold = 0.0;
};

// Trapezoidal area over the unique-threshold ROC staircase. Exactly equals
// (concordant + 0.5 * tied) / (n1 * n0).
double auroc(const ScoredSet& s);

// Average precision with tied scores entering as one block.
double auprc(const ScoredSet& s);

// Positive call when p >= t, the global convention.
ThresholdMetrics confusion_at(const ScoredSet& s, double t);

double brier(const ScoredSet& s);

// Equal-width bins [i/bins, (i+1)/bins), last bin closed.
CalibrationResult calibration(const ScoredSet& s, int bins = 10);

std::vector<DecisionCurvePoint> decision_curve(const ScoredSet& s,
                                               const std::vector<double>& thresholds);

using MetricFn = std::function<std::optional<double>(const ScoredSet&)>;

IntervalEstimate bootstrap_ci(const MetricFn& metric, const ScoredSet& s, int B,
                              std::uint64_t seed, double level = 0.95, int workers = 1);

std::vector<RocPoint> roc_curve(const ScoredSet& s);
std::vector<PrPoint> pr_curve(const ScoredSet& s);

// Linear-interpolation percentile of a sorted sample at position (n-1)*q.
double percentile_sorted(const std::vector<double>& sorted, double q);

}  // namespace labrisk::metrics
