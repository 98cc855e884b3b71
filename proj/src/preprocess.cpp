#include "labrisk/preprocess.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>

namespace labrisk::preprocess {

using dataio::Cohort;
using dataio::ColumnKind;

namespace {

double median_of(std::vector<double> v) {
  assert(!v.empty());
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<ColumnDecision> screen_columns(const Cohort& cohort, const PreprocessSpec& spec,
                                           const std::vector<std::size_t>& train_rows) {
  if (train_rows.empty()) throw DataError("screen_columns: empty training set");
  const std::size_t p = cohort.columns.size();
  std::vector<ColumnDecision> decisions(p);
  std::size_t kept = 0;
  for (std::size_t j = 0; j < p; ++j) {
    const auto jc = static_cast<Eigen::Index>(j);
    std::size_t n_missing = 0;
    std::vector<double> present;
    for (std::size_t r : train_rows) {
      const auto ri = static_cast<Eigen::Index>(r);
      if (cohort.missing_mask(ri, jc))
        ++n_missing;
      else
        present.push_back(cohort.values(ri, jc));
    }
    double miss_frac = static_cast<double>(n_missing) / static_cast<double>(train_rows.size());
    ColumnDecision& d = decisions[j];
    if (miss_frac > spec.missingness_threshold) {
      d = {false, DropReason::missingness};
      continue;
    }
    std::sort(present.begin(), present.end());
    std::size_t distinct = present.empty()
                               ? 0
                               : 1 + static_cast<std::size_t>(
                                         std::unique(present.begin(), present.end()) -
                                         present.begin() - 1);
    if (present.empty() || distinct <= 1) {
      d = {false, DropReason::constant};
      continue;
    }
    if (cohort.columns[j].kind == ColumnKind::categorical &&
        static_cast<int>(cohort.columns[j].categories.size()) >
            spec.categorical_cardinality_max) {
      d = {false, DropReason::cardinality};
      continue;
    }
    d = {true, DropReason::none};
    ++kept;
  }
  (void)kept;
  return decisions;
}

FittedPreprocessor fit(const Cohort& cohort, const PreprocessSpec& spec,
                       const std::vector<std::size_t>& train_rows) {
  FittedPreprocessor fp;
  fp.spec = spec;
  for (const auto& c : cohort.columns) fp.column_names.push_back(c.name);
  fp.decisions = screen_columns(cohort, spec, train_rows);
  bool any_kept = false;
  for (const auto& d : fp.decisions) any_kept = any_kept || d.kept;
  if (!any_kept) throw DataError("no predictors retained after screening");
  fp.continuous.resize(cohort.columns.size());
  fp.categorical.resize(cohort.columns.size());

  for (std::size_t j = 0; j < cohort.columns.size(); ++j) {
    if (!fp.decisions[j].kept) continue;
    fp.retained_columns.push_back(j);
    const auto jc = static_cast<Eigen::Index>(j);
    if (cohort.columns[j].kind == ColumnKind::continuous) {
      std::vector<double> present;
      for (std::size_t r : train_rows) {
        const auto ri = static_cast<Eigen::Index>(r);
        if (!cohort.missing_mask(ri, jc)) present.push_back(cohort.values(ri, jc));
      }
      assert(!present.empty());  // screening drops all-missing columns
      ContinuousStats st;
      st.median = median_of(present);
      // Mean and population sd over the imputed training column.
      double sum = 0.0;
      for (std::size_t r : train_rows) {
        const auto ri = static_cast<Eigen::Index>(r);
        sum += cohort.missing_mask(ri, jc) ? st.median : cohort.values(ri, jc);
      }
      st.mean = sum / static_cast<double>(train_rows.size());
      double ss = 0.0;
      for (std::size_t r : train_rows) {
        const auto ri = static_cast<Eigen::Index>(r);
        double v = cohort.missing_mask(ri, jc) ? st.median : cohort.values(ri, jc);
        ss += (v - st.mean) * (v - st.mean);
      }
      st.sd = std::sqrt(ss / static_cast<double>(train_rows.size()));
      assert(st.sd > 0.0);  // constant columns were screened out
      fp.continuous[j] = st;
    } else {
      std::map<std::string, int> counts;
      for (std::size_t r : train_rows) {
        const auto ri = static_cast<Eigen::Index>(r);
        if (!cohort.missing_mask(ri, jc)) {
          const auto& levels = cohort.columns[j].categories;
          counts[levels[static_cast<std::size_t>(cohort.values(ri, jc))]]++;
        }
      }
      CategoricalStats st;
      int best = -1;
      for (const auto& [level, cnt] : counts) {
        st.vocabulary.push_back(level);
        if (cnt > best) {
          best = cnt;
          st.mode = level;
        }
      }
      st.slot_count = static_cast<int>(st.vocabulary.size()) + 1;  // + "other"
      fp.categorical[j] = st;
    }
  }
  // Output slots in retained-column order: one per continuous column, a
  // vocabulary+1 block per categorical column.
  int slot = 0;
  for (std::size_t j : fp.retained_columns) {
    if (fp.continuous[j]) {
      ++slot;
    } else {
      fp.categorical[j]->slot_begin = slot;
      slot += fp.categorical[j]->slot_count;
    }
  }
  fp.output_dim = slot;
  return fp;
}

DesignMatrix transform(const Cohort& cohort, const FittedPreprocessor& fp,
                       const std::vector<std::size_t>& rows) {
  if (cohort.columns.size() != fp.column_names.size())
    throw DataError("transform: schema mismatch (column count)");
  for (std::size_t j = 0; j < cohort.columns.size(); ++j)
    if (cohort.columns[j].name != fp.column_names[j])
      throw DataError("transform: schema mismatch at column " + cohort.columns[j].name);

  DesignMatrix dm;
  dm.values = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), fp.output_dim);
  dm.feature_names.resize(static_cast<std::size_t>(fp.output_dim));
  dm.source_column.resize(static_cast<std::size_t>(fp.output_dim));

  int slot = 0;
  for (std::size_t j : fp.retained_columns) {
    const auto jc = static_cast<Eigen::Index>(j);
    if (fp.continuous[j]) {
      const ContinuousStats& st = *fp.continuous[j];
      dm.feature_names[static_cast<std::size_t>(slot)] = cohort.columns[j].name;
      dm.source_column[static_cast<std::size_t>(slot)] = j;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto ri = static_cast<Eigen::Index>(rows[i]);
        double v = cohort.missing_mask(ri, jc) ? st.median : cohort.values(ri, jc);
        dm.values(static_cast<Eigen::Index>(i), slot) = (v - st.mean) / st.sd;
      }
      ++slot;
    } else {
      const CategoricalStats& st = *fp.categorical[j];
      for (int k = 0; k < st.slot_count; ++k) {
        std::string level = k < static_cast<int>(st.vocabulary.size())
                                ? st.vocabulary[static_cast<std::size_t>(k)]
                                : std::string("other");
        dm.feature_names[static_cast<std::size_t>(slot + k)] =
            cohort.columns[j].name + "=" + level;
        dm.source_column[static_cast<std::size_t>(slot + k)] = j;
      }
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto ri = static_cast<Eigen::Index>(rows[i]);
        std::string level =
            cohort.missing_mask(ri, jc)
                ? st.mode
                : cohort.columns[j].categories[static_cast<std::size_t>(cohort.values(ri, jc))];
        auto it = std::lower_bound(st.vocabulary.begin(), st.vocabulary.end(), level);
        int k = (it != st.vocabulary.end() && *it == level)
                    ? static_cast<int>(it - st.vocabulary.begin())
                    : static_cast<int>(st.vocabulary.size());  // "other"
        dm.values(static_cast<Eigen::Index>(i), slot + k) = 1.0;
      }
      slot += st.slot_count;
    }
  }
  assert(dm.values.allFinite());
  return dm;
}

std::string to_json(const FittedPreprocessor& fp) {
  nlohmann::json j;
  j["spec"] = {{"missingness_threshold", fp.spec.missingness_threshold},
               {"categorical_cardinality_max", fp.spec.categorical_cardinality_max},
               {"drop_constant", fp.spec.drop_constant}};
  j["output_dim"] = fp.output_dim;
  j["columns"] = nlohmann::json::array();
  for (std::size_t c = 0; c < fp.column_names.size(); ++c) {
    nlohmann::json cj;
    cj["name"] = fp.column_names[c];
    if (fp.decisions[c].kept) {
      cj["decision"] = "kept";
    } else {
      switch (fp.decisions[c].reason) {
        case DropReason::missingness: cj["decision"] = "dropped(missingness)"; break;
        case DropReason::constant: cj["decision"] = "dropped(constant)"; break;
        case DropReason::cardinality: cj["decision"] = "dropped(cardinality)"; break;
        default: cj["decision"] = "dropped"; break;
      }
    }
    if (fp.continuous[c]) {
      cj["median"] = fp.continuous[c]->median;
      cj["mean"] = fp.continuous[c]->mean;
      cj["sd"] = fp.continuous[c]->sd;
    }
    if (fp.categorical[c]) {
      cj["mode"] = fp.categorical[c]->mode;
      cj["vocabulary"] = fp.categorical[c]->vocabulary;
      cj["slot_begin"] = fp.categorical[c]->slot_begin;
      cj["slot_count"] = fp.categorical[c]->slot_count;
    }
    j["columns"].push_back(cj);
  }
  return j.dump(2) + "\n";
}

FittedPreprocessor from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  FittedPreprocessor fp;
  fp.spec.missingness_threshold = j.at("spec").at("missingness_threshold").get<double>();
  fp.spec.categorical_cardinality_max =
      j.at("spec").at("categorical_cardinality_max").get<int>();
  fp.spec.drop_constant = j.at("spec").at("drop_constant").get<bool>();
  fp.output_dim = j.at("output_dim").get<int>();
  for (std::size_t c = 0; c < j.at("columns").size(); ++c) {
    const auto& cj = j.at("columns")[c];
    fp.column_names.push_back(cj.at("name").get<std::string>());
    std::string dec = cj.at("decision").get<std::string>();
    ColumnDecision d;
    d.kept = dec == "kept";
    if (dec == "dropped(missingness)") d.reason = DropReason::missingness;
    else if (dec == "dropped(constant)") d.reason = DropReason::constant;
    else if (dec == "dropped(cardinality)") d.reason = DropReason::cardinality;
    fp.decisions.push_back(d);
    fp.continuous.emplace_back();
    fp.categorical.emplace_back();
    if (d.kept) fp.retained_columns.push_back(c);
    if (cj.contains("median")) {
      ContinuousStats st;
      st.median = cj.at("median").get<double>();
      st.mean = cj.at("mean").get<double>();
      st.sd = cj.at("sd").get<double>();
      fp.continuous[c] = st;
    }
    if (cj.contains("mode")) {
      CategoricalStats st;
      st.mode = cj.at("mode").get<std::string>();
      st.vocabulary = cj.at("vocabulary").get<std::vector<std::string>>();
      st.slot_begin = cj.at("slot_begin").get<int>();
      st.slot_count = cj.at("slot_count").get<int>();
      fp.categorical[c] = st;
    }
  }
  return fp;
}

}  // namespace labrisk::preprocess
