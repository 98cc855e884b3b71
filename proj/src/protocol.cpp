#include "labrisk/protocol.hpp"

#include "labrisk/interpret.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace labrisk::protocol {

using models::Family;
using models::Hyperparams;

SearchSpace default_search_space(Family family) {
  switch (family) {
    case Family::logreg:
      return {{"l2_lambda", ParamSpec::LogUniform(1e-4, 10.0)}};
    case Family::svm_rbf:
      return {{"C", ParamSpec::LogUniform(0.1, 100.0)},
              {"gamma", ParamSpec::LogUniform(1e-3, 1.0)}};
    case Family::random_forest:
    case Family::extra_trees:
      return {{"n_trees", ParamSpec::IntRange(100, 400)},
              {"max_depth", ParamSpec::IntRange(3, 12)},
              {"features_mode", ParamSpec::Choice({0, 1, 2})}};  // sqrt(d), d/3, d
    case Family::gradient_boosting:
      return {{"n_stages", ParamSpec::IntRange(50, 500)},
              {"learning_rate", ParamSpec::LogUniform(0.02, 0.2)},
              {"max_depth", ParamSpec::IntRange(2, 5)},
              {"subsample", ParamSpec::Uniform(0.6, 1.0)}};
  }
  return {};
}

std::vector<double> StudyConfig::dca_thresholds() const {
  if (!dca_grid.empty()) return dca_grid;
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
  return grid;
}

SplitAssignment stratified_split(const IntVector& labels, double test_fraction,
                                 std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    by_class[labels[i] == 1 ? 1 : 0].push_back(static_cast<std::size_t>(i));
  for (int c = 0; c < 2; ++c)
    if (by_class[c].size() < 2)
      throw DataError("stratified_split: class with fewer than 2 members");

  long test_target[2];
  for (int c = 0; c < 2; ++c) {
    double want = static_cast<double>(by_class[c].size()) * test_fraction;
    test_target[c] = static_cast<long>(std::floor(want + 0.5));  // round half up
  }
  long total_target =
      static_cast<long>(std::floor(static_cast<double>(labels.size()) * test_fraction + 0.5));
  long drift = total_target - (test_target[0] + test_target[1]);
  if (drift != 0) {
    int majority = by_class[1].size() > by_class[0].size() ? 1 : 0;
    test_target[majority] += drift;
  }
  for (int c = 0; c < 2; ++c)
    test_target[c] = std::clamp<long>(test_target[c], 1, static_cast<long>(by_class[c].size()) - 1);

  SplitAssignment split;
  split.seed = seed;
  for (int c = 0; c < 2; ++c) {
    Rng rng = derive_rng(seed, 0x5b117u, static_cast<std::uint64_t>(c));
    rng.shuffle(by_class[c]);
    for (std::size_t i = 0; i < by_class[c].size(); ++i) {
      if (static_cast<long>(i) < test_target[c])
        split.test_rows.push_back(by_class[c][i]);
      else
        split.train_rows.push_back(by_class[c][i]);
    }
  }
  std::sort(split.train_rows.begin(), split.train_rows.end());
  std::sort(split.test_rows.begin(), split.test_rows.end());
  return split;
}

FoldPlan stratified_kfold(const IntVector& train_labels, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("stratified_kfold: k must be >= 2");
  std::vector<std::size_t> by_class[2];
  for (Eigen::Index i = 0; i < train_labels.size(); ++i)
    by_class[train_labels[i] == 1 ? 1 : 0].push_back(static_cast<std::size_t>(i));
  for (int c = 0; c < 2; ++c)
    if (static_cast<int>(by_class[c].size()) < k)
      throw DataError("stratified_kfold: class count below k");

  FoldPlan plan;
  plan.seed = seed;
  plan.folds.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < 2; ++c) {
    Rng rng = derive_rng(seed, 0xf01d5u, static_cast<std::uint64_t>(c));
    rng.shuffle(by_class[c]);
    for (std::size_t i = 0; i < by_class[c].size(); ++i)
      plan.folds[i % static_cast<std::size_t>(k)].push_back(by_class[c][i]);
  }
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

Hyperparams sample_hyperparams(Family family, const SearchSpace& space, Rng& rng) {
  Hyperparams hp;
  hp.family = family;
  for (const auto& [name, spec] : space) {  // std::map: deterministic key order
    double v = 0.0;
    switch (spec.kind) {
      case ParamSpec::Kind::log_uniform: v = rng.log_uniform(spec.lo, spec.hi); break;
      case ParamSpec::Kind::uniform: v = rng.uniform_real(spec.lo, spec.hi); break;
      case ParamSpec::Kind::int_range:
        v = static_cast<double>(
            rng.uniform_range(static_cast<long>(spec.lo), static_cast<long>(spec.hi)));
        break;
      case ParamSpec::Kind::choice:
        v = spec.choices[rng.uniform_int(spec.choices.size())];
        break;
    }
    hp.values[name] = v;
  }
  if (family == Family::random_forest || family == Family::extra_trees ||
      family == Family::gradient_boosting) {
    hp.values.emplace("min_samples_leaf", 1.0);
  }
  return hp;
}

namespace {

struct FoldData {
  std::vector<std::size_t> fit_rows;   // cohort rows for fold-training
  std::vector<std::size_t> eval_rows;  // cohort rows held out
  std::vector<std::size_t> eval_positions;  // positions in the train-row list
  preprocess::FittedPreprocessor prep;
  Matrix x_fit, x_eval;
  IntVector y_fit, y_eval;
};

// The preprocessor is refit inside every fold on that fold's training split.
std::vector<FoldData> prepare_folds(const FoldPlan& folds, const dataio::Cohort& cohort,
                                    const std::vector<std::size_t>& train_rows,
                                    const preprocess::PreprocessSpec& prep) {
  std::vector<FoldData> out(folds.folds.size());
  for (std::size_t f = 0; f < folds.folds.size(); ++f) {
    FoldData& fd = out[f];
    std::set<std::size_t> held(folds.folds[f].begin(), folds.folds[f].end());
    for (std::size_t pos = 0; pos < train_rows.size(); ++pos) {
      if (held.count(pos)) {
        fd.eval_rows.push_back(train_rows[pos]);
        fd.eval_positions.push_back(pos);
      } else {
        fd.fit_rows.push_back(train_rows[pos]);
      }
    }
    fd.prep = preprocess::fit(cohort, prep, fd.fit_rows);
    fd.x_fit = preprocess::transform(cohort, fd.prep, fd.fit_rows).values;
    fd.x_eval = preprocess::transform(cohort, fd.prep, fd.eval_rows).values;
    fd.y_fit.resize(static_cast<Eigen::Index>(fd.fit_rows.size()));
    for (std::size_t i = 0; i < fd.fit_rows.size(); ++i)
      fd.y_fit[static_cast<Eigen::Index>(i)] =
          cohort.labels[static_cast<Eigen::Index>(fd.fit_rows[i])];
    fd.y_eval.resize(static_cast<Eigen::Index>(fd.eval_rows.size()));
    for (std::size_t i = 0; i < fd.eval_rows.size(); ++i)
      fd.y_eval[static_cast<Eigen::Index>(i)] =
          cohort.labels[static_cast<Eigen::Index>(fd.eval_rows[i])];
  }
  return out;
}

struct CvOutcome {
  std::vector<double> fold_aurocs;
  double mean = 0.0;
  Vector oof;  // sized to the training-row count
  std::vector<int> oof_fold;
  bool failed = false;
  std::string error;
};

CvOutcome evaluate_config(const Hyperparams& hp, const std::vector<FoldData>& folds,
                          std::size_t n_train, std::uint64_t model_seed) {
  CvOutcome out;
  out.oof = Vector::Zero(static_cast<Eigen::Index>(n_train));
  out.oof_fold.assign(n_train, -1);
  try {
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const FoldData& fd = folds[f];
      auto model = models::train_model(fd.x_fit, fd.y_fit, hp,
                                       splitmix64(model_seed ^ (f * 0x9e37u + 1)));
      Vector probs = model->predict_proba(fd.x_eval);
      metrics::ScoredSet s{probs, fd.y_eval};
      out.fold_aurocs.push_back(metrics::auroc(s));
      for (std::size_t i = 0; i < fd.eval_positions.size(); ++i) {
        out.oof[static_cast<Eigen::Index>(fd.eval_positions[i])] =
            probs[static_cast<Eigen::Index>(i)];
        out.oof_fold[fd.eval_positions[i]] = static_cast<int>(f);
      }
    }
    out.mean = std::accumulate(out.fold_aurocs.begin(), out.fold_aurocs.end(), 0.0) /
               static_cast<double>(out.fold_aurocs.size());
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
    out.mean = 0.0;
  }
  return out;
}

}  // namespace

CandidateResult random_search(Family family, const SearchSpace& space, int n_iter,
                              const FoldPlan& folds, const dataio::Cohort& cohort,
                              const std::vector<std::size_t>& train_rows,
                              const preprocess::PreprocessSpec& prep, std::uint64_t seed,
                              int workers) {
  if (space.empty()) throw ConfigError("random_search: empty search space");
  if (n_iter < 1) throw ConfigError("random_search: n_iter must be >= 1");

  std::vector<FoldData> fold_data = prepare_folds(folds, cohort, train_rows, prep);
  const auto fam_tag = static_cast<std::uint64_t>(family);

  std::vector<Hyperparams> configs;
  configs.reserve(static_cast<std::size_t>(n_iter));
  for (int it = 0; it < n_iter; ++it) {
    Rng rng = derive_rng(seed, 0x5ea7c4u, fam_tag, static_cast<std::uint64_t>(it));
    configs.push_back(sample_hyperparams(family, space, rng));
  }

  std::vector<CvOutcome> outcomes(static_cast<std::size_t>(n_iter));
  parallel_for(static_cast<std::size_t>(n_iter), workers, [&](std::size_t it) {
    std::uint64_t model_seed = splitmix64(seed ^ (fam_tag << 32) ^ (it * 0x51u + 7));
    outcomes[it] = evaluate_config(configs[it], fold_data, train_rows.size(), model_seed);
  });

  CandidateResult result;
  result.family = family;
  std::size_t best_it = 0;
  for (std::size_t it = 0; it < outcomes.size(); ++it) {
    if (outcomes[it].failed)
      result.log.push_back("config " + std::to_string(it) +
                           " failed to train: " + outcomes[it].error);
    if (outcomes[it].mean > outcomes[best_it].mean) best_it = it;  // ties -> first sampled
  }
  result.best = configs[best_it];
  result.fold_aurocs = outcomes[best_it].fold_aurocs;
  result.mean_cv_auroc = outcomes[best_it].mean;

  // Out-of-fold vector regenerated with the best configuration.
  std::uint64_t model_seed = splitmix64(seed ^ (fam_tag << 32) ^ (best_it * 0x51u + 7));
  CvOutcome regen = evaluate_config(result.best, fold_data, train_rows.size(), model_seed);
  if (regen.failed) throw DataError("random_search: best configuration failed on refit");
  result.oof_probs = regen.oof;
  result.oof_fold = regen.oof_fold;
  return result;
}

std::size_t select_model(const std::vector<CandidateResult>& candidates) {
  if (candidates.empty()) throw ConfigError("select_model: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i].mean_cv_auroc > candidates[best].mean_cv_auroc) best = i;
  return best;
}

ThresholdReport youden_threshold(const Vector& oof_probs, const IntVector& train_labels) {
  const Eigen::Index n = oof_probs.size();
  long pos = train_labels.sum();
  long neg = static_cast<long>(n) - pos;
  if (pos == 0 || neg == 0) throw DataError("youden_threshold: single-class labels");

  std::vector<double> thresholds(oof_probs.begin(), oof_probs.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  ThresholdReport best;
  best.youden_j = -1.0;
  for (double t : thresholds) {
    long tp = 0, tn = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      bool call = oof_probs[i] >= t;
      if (call && train_labels[i] == 1) ++tp;
      if (!call && train_labels[i] == 0) ++tn;
    }
    double sens = static_cast<double>(tp) / static_cast<double>(pos);
    double spec = static_cast<double>(tn) / static_cast<double>(neg);
    double j = sens + spec - 1.0;
    if (j > best.youden_j) {  // ties -> smallest threshold
      best = {t, j, sens, spec};
    }
  }
  return best;
}

StudyResult run_study(const dataio::Cohort& cohort, const StudyConfig& config,
                      const std::optional<SplitAssignment>& fixed_split) {
  StudyResult result;
  result.split = fixed_split ? *fixed_split
                             : stratified_split(cohort.labels, config.test_fraction, config.seed);
  const auto& train_rows = result.split.train_rows;
  const auto& test_rows = result.split.test_rows;

  IntVector y_train(static_cast<Eigen::Index>(train_rows.size()));
  for (std::size_t i = 0; i < train_rows.size(); ++i)
    y_train[static_cast<Eigen::Index>(i)] =
        cohort.labels[static_cast<Eigen::Index>(train_rows[i])];
  IntVector y_test(static_cast<Eigen::Index>(test_rows.size()));
  for (std::size_t i = 0; i < test_rows.size(); ++i)
    y_test[static_cast<Eigen::Index>(i)] =
        cohort.labels[static_cast<Eigen::Index>(test_rows[i])];

  FoldPlan folds = stratified_kfold(y_train, config.k_folds, splitmix64(config.seed ^ 0xf01d5ULL));

  for (Family family : config.families) {
    try {
      result.candidates.push_back(random_search(family, config.space_for(family),
                                                config.n_iter, folds, cohort, train_rows,
                                                config.prep, config.seed, config.workers));
    } catch (const std::exception& e) {
      throw DataError("study stage 'search(" + models::family_name(family) +
                      ")': " + e.what());
    }
  }

  result.selected_index = select_model(result.candidates);
  const CandidateResult& selected = result.candidates[result.selected_index];
  result.selected_family = selected.family;
  result.selected_hp = selected.best;

  // Refit on the full training cohort; preprocessor refit on all training rows.
  result.preprocessor = preprocess::fit(cohort, config.prep, train_rows);
  result.train_design = preprocess::transform(cohort, result.preprocessor, train_rows);
  std::uint64_t refit_seed = splitmix64(config.seed ^ 0x5e1ec7edULL ^
                                        (static_cast<std::uint64_t>(selected.family) << 8));
  result.model = models::train_model(result.train_design.values, y_train, selected.best,
                                     refit_seed, config.workers);

  result.threshold = youden_threshold(selected.oof_probs, y_train);
  result.oof = {selected.oof_probs, y_train};

  // Single held-out evaluation.
  preprocess::DesignMatrix x_test = preprocess::transform(cohort, result.preprocessor, test_rows);
  Vector test_probs = result.model->predict_proba(x_test.values);
  result.test = {test_probs, y_test};

  result.test_metrics = metric_table(result.test, result.threshold.threshold,
                                     config.calibration_bins, config.bootstrap_b, config.seed,
                                     config.workers);

  // Candidate-model test table, reported for transparency only; never fed back
  // into selection.
  for (const auto& cand : result.candidates) {
    std::uint64_t cand_seed = splitmix64(config.seed ^ 0x5e1ec7edULL ^
                                         (static_cast<std::uint64_t>(cand.family) << 8));
    auto model = models::train_model(result.train_design.values, y_train, cand.best, cand_seed,
                                     config.workers);
    Vector probs = model->predict_proba(x_test.values);
    metrics::ScoredSet s{probs, y_test};
    ThresholdReport tr = youden_threshold(cand.oof_probs, y_train);
    metrics::ThresholdMetrics tm = metrics::confusion_at(s, tr.threshold);
    auto or0 = [](std::optional<double> v) { return v.value_or(0.0); };
    result.candidate_test.push_back({cand.family, tr.threshold, metrics::auroc(s),
                                     metrics::auprc(s), or0(tm.accuracy), or0(tm.sensitivity),
                                     or0(tm.specificity), or0(tm.ppv), or0(tm.npv), or0(tm.f1),
                                     metrics::brier(s)});
  }
  return result;
}

std::vector<std::pair<std::string, metrics::IntervalEstimate>> metric_table(
    const metrics::ScoredSet& test, double threshold, int calibration_bins, int bootstrap_b,
    std::uint64_t seed, int workers) {
  const double t_star = threshold;
  const int bins = calibration_bins;
  auto wrap = [](std::function<double(const metrics::ScoredSet&)> fn) {
    return metrics::MetricFn([fn](const metrics::ScoredSet& s) -> std::optional<double> {
      return fn(s);
    });
  };
  auto threshold_metric = [t_star](auto member) {
    return metrics::MetricFn(
        [t_star, member](const metrics::ScoredSet& s) -> std::optional<double> {
          return metrics::confusion_at(s, t_star).*member;
        });
  };
  using TM = metrics::ThresholdMetrics;
  std::vector<std::pair<std::string, metrics::MetricFn>> metric_fns = {
      {"AUROC", wrap([](const metrics::ScoredSet& s) { return metrics::auroc(s); })},
      {"AUPRC", wrap([](const metrics::ScoredSet& s) { return metrics::auprc(s); })},
      {"Accuracy", threshold_metric(&TM::accuracy)},
      {"Sensitivity", threshold_metric(&TM::sensitivity)},
      {"Specificity", threshold_metric(&TM::specificity)},
      {"PPV", threshold_metric(&TM::ppv)},
      {"NPV", threshold_metric(&TM::npv)},
      {"F1 score", threshold_metric(&TM::f1)},
      {"Brier score", wrap([](const metrics::ScoredSet& s) { return metrics::brier(s); })},
      {"ECE",
       wrap([bins](const metrics::ScoredSet& s) { return metrics::calibration(s, bins).ece; })},
  };
  std::vector<std::pair<std::string, metrics::IntervalEstimate>> table;
  for (std::size_t m = 0; m < metric_fns.size(); ++m) {
    std::uint64_t boot_seed = splitmix64(seed ^ 0xb00757ULL ^ (m << 16));
    if (!metric_fns[m].second(test)) {
      // A ratio with an empty denominator at this threshold (e.g. PPV when
      // nothing is called positive) stays in the table as an absent estimate.
      metrics::IntervalEstimate absent;
      absent.point = std::numeric_limits<double>::quiet_NaN();
      absent.lower = absent.point;
      absent.upper = absent.point;
      table.emplace_back(metric_fns[m].first, absent);
      continue;
    }
    table.emplace_back(metric_fns[m].first,
                       metrics::bootstrap_ci(metric_fns[m].second, test, bootstrap_b, boot_seed,
                                             0.95, workers));
  }
  return table;
}

}  // namespace labrisk::protocol
