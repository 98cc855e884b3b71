#pragma once

#include "labrisk/dataio.hpp"

#include <optional>
#include <string>
#include <vector>

namespace labrisk::preprocess {

struct PreprocessSpec {
  double missingness_threshold = 0.30;
  int categorical_cardinality_max = 20;
  bool drop_constant = true;  // fixed true; kept for audit output
};

enum class DropReason { none, missingness, constant, cardinality };

struct ColumnDecision {
  bool kept = false;
  DropReason reason = DropReason::none;
};

struct ContinuousStats {
  double median = 0.0;
  double mean = 0.0;
  double sd = 1.0;  // population sd over the imputed training column
};

struct CategoricalStats {
  std::string mode;
  std::vector<std::string> vocabulary;  // training levels; "other" slot appended on output
  int slot_begin = 0;                   // first output column
  int slot_count = 0;                   // vocabulary + 1 ("other")
};

struct FittedPreprocessor {
  PreprocessSpec spec;
  std::vector<std::string> column_names;  // fit-time schema, all cohort columns
  std::vector<ColumnDecision> decisions;
  std::vector<std::size_t> retained_columns;  // indices into the cohort
  std::vector<std::optional<ContinuousStats>> continuous;    // per cohort column
  std::vector<std::optional<CategoricalStats>> categorical;  // per cohort column
  int output_dim = 0;
};

struct DesignMatrix {
  Matrix values;  // n x d, no non-finite entries
  std::vector<std::string> feature_names;
  std::vector<std::size_t> source_column;  // cohort column index per feature
};

// Screening only: missingness / constancy / cardinality decisions on the
// training rows. fit() runs this internally.
std::vector<ColumnDecision> screen_columns(const dataio::Cohort& cohort,
                                           const PreprocessSpec& spec,
                                           const std::vector<std::size_t>& train_rows);

// All statistics come from train_rows only.
FittedPreprocessor fit(const dataio::Cohort& cohort, const PreprocessSpec& spec,
                       const std::vector<std::size_t>& train_rows);

DesignMatrix transform(const dataio::Cohort& cohort, const FittedPreprocessor& fp,
                       const std::vector<std::size_t>& rows);

std::string to_json(const FittedPreprocessor& fp);
FittedPreprocessor from_json(const std::string& text);

}  // namespace labrisk::preprocess
