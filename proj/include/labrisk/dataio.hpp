#pragma once

#include "labrisk/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace labrisk::dataio {

// Closed set of gestational-week suffix codes used in feature names.
// Longest-suffix match; analytes ending in I/V/X never match accidentally.
inline const std::vector<std::pair<std::string, int>>& timepoint_codes() {
  static const std::vector<std::pair<std::string, int>> codes = {
      {"XXVIII", 28}, {"XXXII", 32}, {"XXIV", 24}, {"XVI", 16},
      {"XXX", 30},    {"XII", 12},   {"VI", 6},
  };
  return codes;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t rejected_ragged_rows = 0;
};

enum class ColumnKind { continuous, categorical, excluded };

struct ColumnMeta {
  std::string name;
  std::string analyte;
  std::optional<int> week;
  ColumnKind kind = ColumnKind::continuous;
  double missing_fraction = 0.0;
  std::size_t unparseable_count = 0;
  // Level names for categorical columns; cell values are indices into this.
  std::vector<std::string> categories;
};

struct Cohort {
  Matrix values;          // n x p, sentinel 0 at masked cells
  BoolMatrix missing_mask;  // true = missing
  IntVector labels;       // 0/1, 1 = case
  std::vector<ColumnMeta> columns;
  std::vector<std::string> row_ids;
  std::string positive_label;   // original string mapped to 1
  std::string negative_label;

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index p() const { return values.cols(); }
};

struct ParsedValue {
  enum class Kind { numeric, missing, qualitative, unparseable };
  Kind kind = Kind::missing;
  double value = 0.0;       // numeric or qualitative grade
  bool censored = false;    // "<x" / ">x" detection-limit entries
  std::string text;         // original text for unparseable cells
};

using GradeMap = std::map<std::string, double>;

// Default urinalysis grade dictionary, overridable via config.
inline GradeMap default_grade_map() {
  return {{"negative", 0.0}, {"trace", 0.5}, {"+", 1.0}, {"++", 2.0}, {"+++", 3.0}};
}

struct ExclusionRules {
  std::vector<std::string> columns;        // exact names
  std::vector<std::string> name_patterns;  // substring classes (identifiers etc.)
};

struct ExclusionLogEntry {
  std::string column;
  std::string reason;
};

// RFC-4180 CSV with mandatory header. Ragged rows are dropped and counted.
RawTable parse_csv(const std::string& bytes);

ParsedValue parse_clinical_value(const std::string& cell, const GradeMap& grades = default_grade_map());

// Splits "CysCVI" -> ("CysC", 6). No recognized suffix -> week absent.
std::pair<std::string, std::optional<int>> decode_timepoint(const std::string& name);

RawTable apply_exclusions(const RawTable& table, const ExclusionRules& rules,
                          std::vector<ExclusionLogEntry>* log = nullptr);

struct BuildStats {
  std::size_t predictor_cells_parsed = 0;
};

Cohort build_cohort(const RawTable& table, const std::string& label_column,
                    const GradeMap& grades = default_grade_map(),
                    const std::string& id_column = "", BuildStats* stats = nullptr);

// Clean CSV emission; re-ingesting yields identical values, masks and metadata.
std::string write_cohort_csv(const Cohort& cohort, const std::string& label_column,
                             const std::string& id_column);
std::string cohort_schema_json(const Cohort& cohort,
                               const std::vector<ExclusionLogEntry>& exclusion_log);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace labrisk::dataio
