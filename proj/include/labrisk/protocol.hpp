#pragma once

#include "labrisk/dataio.hpp"
#include "labrisk/metrics.hpp"
#include "labrisk/models.hpp"
#include "labrisk/preprocess.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace labrisk::protocol {

struct SplitAssignment {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::uint64_t seed = 0;
};

struct FoldPlan {
  // Fold index sets as positions within the training-row list.
  std::vector<std::vector<std::size_t>> folds;
  std::uint64_t seed = 0;
};

struct ParamSpec {
  enum class Kind { log_uniform, uniform, int_range, choice };
  Kind kind = Kind::uniform;
  double lo = 0.0, hi = 1.0;
  std::vector<double> choices;

  static ParamSpec LogUniform(double lo, double hi) {
    return {Kind::log_uniform, lo, hi, {}};
  }
  static ParamSpec Uniform(double lo, double hi) { return {Kind::uniform, lo, hi, {}}; }
  static ParamSpec IntRange(long lo, long hi) {
    return {Kind::int_range, static_cast<double>(lo), static_cast<double>(hi), {}};
  }
  static ParamSpec Choice(std::vector<double> values) {
    return {Kind::choice, 0.0, 0.0, std::move(values)};
  }
};

using SearchSpace = std::map<std::string, ParamSpec>;

SearchSpace default_search_space(models::Family family);

struct CandidateResult {
  models::Family family = models::Family::logreg;
  models::Hyperparams best;
  std::vector<double> fold_aurocs;
  double mean_cv_auroc = 0.0;
  Vector oof_probs;             // aligned to train-row positions
  std::vector<int> oof_fold;    // fold whose held-out model produced each entry
  std::vector<std::string> log;  // failed configurations etc.
};

struct ThresholdReport {
  double threshold = 0.5;
  double youden_j = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

struct CandidateTestRow {
  models::Family family;
  double threshold;  // the candidate's own out-of-fold Youden threshold
  double auroc, auprc, accuracy, sensitivity, specificity, ppv, npv, f1, brier;
};

struct StudyConfig {
  std::uint64_t seed = 42;
  double test_fraction = 0.2;
  int k_folds = 5;
  int n_iter = 25;
  std::vector<models::Family> families = {
      models::Family::logreg, models::Family::svm_rbf, models::Family::random_forest,
      models::Family::extra_trees, models::Family::gradient_boosting};
  std::map<models::Family, SearchSpace> spaces;  // empty -> defaults
  preprocess::PreprocessSpec prep;
  int bootstrap_b = 1000;
  int calibration_bins = 10;
  std::vector<double> dca_grid;  // empty -> 0.05..0.95 step 0.05
  int top_k = 10;
  int workers = 1;

  SearchSpace space_for(models::Family f) const {
    auto it = spaces.find(f);
    return it != spaces.end() ? it->second : default_search_space(f);
  }
  std::vector<double> dca_thresholds() const;
};

struct StudyResult {
  SplitAssignment split;
  std::vector<CandidateResult> candidates;
  std::size_t selected_index = 0;
  models::Family selected_family = models::Family::logreg;
  models::Hyperparams selected_hp;
  ThresholdReport threshold;
  preprocess::FittedPreprocessor preprocessor;  // refit on the full training cohort
  std::unique_ptr<models::Model> model;
  preprocess::DesignMatrix train_design;
  metrics::ScoredSet oof;   // out-of-fold training predictions
  metrics::ScoredSet test;  // held-out predictions
  std::vector<std::pair<std::string, metrics::IntervalEstimate>> test_metrics;
  std::vector<CandidateTestRow> candidate_test;
};

// Per class: shuffle, allocate round-half-up(count * fraction) to test, then
// nudge the majority class so the total matches round(n * fraction).
SplitAssignment stratified_split(const IntVector& labels, double test_fraction,
                                 std::uint64_t seed);

FoldPlan stratified_kfold(const IntVector& train_labels, int k, std::uint64_t seed);

models::Hyperparams sample_hyperparams(models::Family family, const SearchSpace& space,
                                       Rng& rng);

CandidateResult random_search(models::Family family, const SearchSpace& space, int n_iter,
                              const FoldPlan& folds, const dataio::Cohort& cohort,
                              const std::vector<std::size_t>& train_rows,
                              const preprocess::PreprocessSpec& prep, std::uint64_t seed,
                              int workers = 1);

// Argmax of mean CV AUROC; ties resolve to the earlier family in the fixed
// declaration order.
std::size_t select_model(const std::vector<CandidateResult>& candidates);

// Candidate thresholds are the unique out-of-fold probabilities; positive call
// when p >= t; ties on J resolve to the smallest threshold.
ThresholdReport youden_threshold(const Vector& oof_probs, const IntVector& train_labels);

StudyResult run_study(const dataio::Cohort& cohort, const StudyConfig& config,
                      const std::optional<SplitAssignment>& fixed_split = std::nullopt);

// The Table-2-style metric battery with bootstrap intervals. `evaluate`
// replays this from stored artifacts, so it must be a pure function of its
// arguments.
std::vector<std::pair<std::string, metrics::IntervalEstimate>> metric_table(
    const metrics::ScoredSet& test, double threshold, int calibration_bins, int bootstrap_b,
    std::uint64_t seed, int workers);

}  // namespace labrisk::protocol
