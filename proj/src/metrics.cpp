#include "labrisk/metrics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>

namespace labrisk::metrics {

namespace {

// Row order sorted by descending probability, grouped by tied values.
struct Staircase {
  // Cumulative TP/FP after each tie block, plus the block's threshold.
  std::vector<long> tp, fp;
  std::vector<double> threshold;
  long pos = 0, neg = 0;
};

Staircase build_staircase(const ScoredSet& s) {
  const auto n = static_cast<std::size_t>(s.n());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.probs[static_cast<Eigen::Index>(a)] > s.probs[static_cast<Eigen::Index>(b)];
  });
  Staircase st;
  st.pos = s.labels.sum();
  st.neg = static_cast<long>(n) - st.pos;
  long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    double v = s.probs[static_cast<Eigen::Index>(order[i])];
    while (i < n && s.probs[static_cast<Eigen::Index>(order[i])] == v) {
      if (s.labels[static_cast<Eigen::Index>(order[i])] == 1)
        ++tp;
      else
        ++fp;
      ++i;
    }
    st.tp.push_back(tp);
    st.fp.push_back(fp);
    st.threshold.push_back(v);
  }
  return st;
}

}  // namespace

double auroc(const ScoredSet& s) {
  Staircase st = build_staircase(s);
  if (st.pos == 0 || st.neg == 0) throw DataError("auroc: single-class input");
  double area = 0.0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  for (std::size_t k = 0; k < st.tp.size(); ++k) {
    double fpr = static_cast<double>(st.fp[k]) / static_cast<double>(st.neg);
    double tpr = static_cast<double>(st.tp[k]) / static_cast<double>(st.pos);
    area += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  return area;
}

double auprc(const ScoredSet& s) {
  Staircase st = build_staircase(s);
  if (st.pos == 0) throw DataError("auprc: no positives");
  double ap = 0.0;
  long prev_tp = 0;
  for (std::size_t k = 0; k < st.tp.size(); ++k) {
    long tp = st.tp[k], fp = st.fp[k];
    if (tp > prev_tp) {
      double recall_step = static_cast<double>(tp - prev_tp) / static_cast<double>(st.pos);
      double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      ap += recall_step * precision;
    }
    prev_tp = tp;
  }
  return ap;
}

ThresholdMetrics confusion_at(const ScoredSet& s, double t) {
  ThresholdMetrics m;
  for (Eigen::Index i = 0; i < s.n(); ++i) {
    bool call = s.probs[i] >= t;
    bool truth = s.labels[i] == 1;
    if (call && truth) ++m.counts.tp;
    else if (call && !truth) ++m.counts.fp;
    else if (!call && truth) ++m.counts.fn;
    else ++m.counts.tn;
  }
  auto ratio = [](long a, long b) -> std::optional<double> {
    if (b == 0) return std::nullopt;
    return static_cast<double>(a) / static_cast<double>(b);
  };
  const auto& c = m.counts;
  m.accuracy = ratio(c.tp + c.tn, c.n());
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.ppv = ratio(c.tp, c.tp + c.fp);
  m.npv = ratio(c.tn, c.tn + c.fn);
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

double brier(const ScoredSet& s) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < s.n(); ++i) {
    double d = s.probs[i] - static_cast<double>(s.labels[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(s.n());
}

CalibrationResult calibration(const ScoredSet& s, int bins) {
  if (bins < 1) throw ConfigError("calibration: bins must be >= 1");
  std::vector<double> prob_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> label_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<long> count(static_cast<std::size_t>(bins), 0);
  for (Eigen::Index i = 0; i < s.n(); ++i) {
    int b = static_cast<int>(std::floor(s.probs[i] * bins));
    b = std::clamp(b, 0, bins - 1);  // last bin closed at 1
    prob_sum[static_cast<std::size_t>(b)] += s.probs[i];
    label_sum[static_cast<std::size_t>(b)] += s.labels[i];
    count[static_cast<std::size_t>(b)]++;
  }
  CalibrationResult out;
  double ece = 0.0;
  for (int b = 0; b < bins; ++b) {
    const auto bu = static_cast<std::size_t>(b);
    if (count[bu] == 0) continue;
    CalibrationBin cb;
    cb.count = count[bu];
    cb.mean_prob = prob_sum[bu] / static_cast<double>(count[bu]);
    cb.event_rate = label_sum[bu] / static_cast<double>(count[bu]);
    out.bins.push_back(cb);
    out.bin_index.push_back(b);
    ece += (static_cast<double>(count[bu]) / static_cast<double>(s.n())) *
           std::abs(cb.mean_prob - cb.event_rate);
  }
  out.ece = ece;
  return out;
}

std::vector<DecisionCurvePoint> decision_curve(const ScoredSet& s,
                                               const std::vector<double>& thresholds) {
  const double n = static_cast<double>(s.n());
  const double prevalence = static_cast<double>(s.labels.sum()) / n;
  std::vector<DecisionCurvePoint> out;
  out.reserve(thresholds.size());
  for (double pt : thresholds) {
    if (!(pt > 0.0 && pt < 1.0)) throw ConfigError("decision_curve: p_t must lie in (0,1)");
    ThresholdMetrics m = confusion_at(s, pt);
    double odds = pt / (1.0 - pt);
    DecisionCurvePoint dc;
    dc.threshold = pt;
    dc.net_benefit_model = static_cast<double>(m.counts.tp) / n -
                           (static_cast<double>(m.counts.fp) / n) * odds;
    dc.net_benefit_all = prevalence - (1.0 - prevalence) * odds;
    dc.net_benefit_none = 0.0;
    out.push_back(dc);
  }
  return out;
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
  assert(!sorted.empty());
  if (sorted.size() == 1) return sorted[0];
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

IntervalEstimate bootstrap_ci(const MetricFn& metric, const ScoredSet& s, int B,
                              std::uint64_t seed, double level, int workers) {
  if (B < 2) throw ConfigError("bootstrap_ci: B must be >= 2");
  const auto n = static_cast<std::uint64_t>(s.n());
  IntervalEstimate est;
  auto point = metric(s);
  if (!point) throw DataError("bootstrap_ci: metric undefined on the full sample");
  est.point = *point;
  est.resamples = B;

  std::vector<std::optional<double>> values(static_cast<std::size_t>(B));
  parallel_for(static_cast<std::size_t>(B), workers, [&](std::size_t b) {
    Rng rng = derive_rng(seed, 0xb007u, b);
    ScoredSet r;
    r.probs.resize(s.n());
    r.labels.resize(s.n());
    for (Eigen::Index i = 0; i < s.n(); ++i) {
      auto k = static_cast<Eigen::Index>(rng.uniform_int(n));
      r.probs[i] = s.probs[k];
      r.labels[i] = s.labels[k];
    }
    try {
      values[b] = metric(r);
    } catch (const DataError&) {
      values[b] = std::nullopt;
    }
  });

  for (const auto& v : values) {
    if (v)
      est.resample_values.push_back(*v);
    else
      ++est.degenerate;
  }
  if (est.resample_values.empty()) throw DataError("bootstrap_ci: all resamples degenerate");
  std::vector<double> sorted = est.resample_values;
  std::sort(sorted.begin(), sorted.end());
  double alpha = (1.0 - level) / 2.0;
  est.lower = percentile_sorted(sorted, alpha);
  est.upper = percentile_sorted(sorted, 1.0 - alpha);
  return est;
}

std::vector<RocPoint> roc_curve(const ScoredSet& s) {
  Staircase st = build_staircase(s);
  std::vector<RocPoint> out;
  out.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (std::size_t k = 0; k < st.tp.size(); ++k) {
    RocPoint p;
    p.fpr = st.neg > 0 ? static_cast<double>(st.fp[k]) / static_cast<double>(st.neg) : 0.0;
    p.tpr = st.pos > 0 ? static_cast<double>(st.tp[k]) / static_cast<double>(st.pos) : 0.0;
    p.threshold = st.threshold[k];
    out.push_back(p);
  }
  return out;
}

std::vector<PrPoint> pr_curve(const ScoredSet& s) {
  Staircase st = build_staircase(s);
  std::vector<PrPoint> out;
  for (std::size_t k = 0; k < st.tp.size(); ++k) {
    PrPoint p;
    p.recall = st.pos > 0 ? static_cast<double>(st.tp[k]) / static_cast<double>(st.pos) : 0.0;
    p.precision = static_cast<double>(st.tp[k]) / static_cast<double>(st.tp[k] + st.fp[k]);
    p.threshold = st.threshold[k];
    out.push_back(p);
  }
  return out;
}

}  // namespace labrisk::metrics
