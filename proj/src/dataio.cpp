#include "labrisk/dataio.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <regex>
#include <set>
#include <sstream>

namespace labrisk::dataio {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool is_missing_token(const std::string& t) {
  std::string l = lower(t);
  return l.empty() || l == "na" || l == "n/a" || l == "-" || l == ".";
}

const std::regex kIsoDate(R"(^\d{4}-\d{1,2}-\d{1,2}([ T].*)?$)");
const std::regex kSlashDate(R"(^\d{1,4}/\d{1,2}/\d{1,4}$)");
const std::regex kLeadingNumber(R"(^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)");

}  // namespace

RawTable parse_csv(const std::string& bytes) {
  if (bytes.empty()) throw DataError("empty input");

  // RFC-4180: quoted fields may contain commas, escaped quotes and newlines.
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool any_char = false;
  auto end_field = [&] { record.push_back(field); field.clear(); };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    char c = bytes[i];
    any_char = true;
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < bytes.size() && bytes[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      // swallow; LF handles the record break
    } else if (c == '\n') {
      end_record();
    } else {
      field += c;
    }
  }
  if (!field.empty() || !record.empty()) end_record();
  if (!any_char || records.empty()) throw DataError("empty input");

  RawTable table;
  for (auto& h : records[0]) table.header.push_back(trim(h));
  std::set<std::string> seen;
  for (const auto& h : table.header) {
    if (!seen.insert(h).second) throw DataError("duplicate header name: " + h);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() == 1 && trim(records[r][0]).empty()) continue;  // blank line
    if (records[r].size() != table.header.size()) {
      ++table.rejected_ragged_rows;
      continue;
    }
    table.rows.push_back(std::move(records[r]));
  }
  if (table.rows.empty()) throw DataError("zero data rows");
  return table;
}

ParsedValue parse_clinical_value(const std::string& cell, const GradeMap& grades) {
  ParsedValue out;
  std::string t = trim(cell);
  if (is_missing_token(t)) {
    out.kind = ParsedValue::Kind::missing;
    return out;
  }
  if (std::regex_match(t, kIsoDate) || std::regex_match(t, kSlashDate)) {
    out.kind = ParsedValue::Kind::unparseable;
    out.text = t;
    return out;
  }
  {
    auto it = grades.find(lower(t));
    if (it == grades.end()) it = grades.find(t);
    if (it != grades.end()) {
      out.kind = ParsedValue::Kind::qualitative;
      out.value = it->second;
      return out;
    }
  }
  std::string body = t;
  bool censored = false;
  if (body.size() >= 1 && (body[0] == '<' || body[0] == '>')) {
    censored = true;
    body = trim(body.substr(body.size() >= 2 && body[1] == '=' ? 2 : 1));
  }
  std::smatch m;
  if (std::regex_search(body, m, kLeadingNumber)) {
    double v = 0.0;
    const std::string num = m.str(0);
    auto res = std::from_chars(num.data(), num.data() + num.size(), v);
    if (res.ec == std::errc() && std::isfinite(v)) {
      out.kind = ParsedValue::Kind::numeric;
      out.value = v;
      out.censored = censored;
      return out;
    }
  }
  out.kind = ParsedValue::Kind::unparseable;
  out.text = t;
  return out;
}

std::pair<std::string, std::optional<int>> decode_timepoint(const std::string& name) {
  const auto& codes = timepoint_codes();
  const std::pair<std::string, int>* best = nullptr;
  for (const auto& c : codes) {
    if (name.size() >= c.first.size() &&
        name.compare(name.size() - c.first.size(), c.first.size(), c.first) == 0) {
      if (!best || c.first.size() > best->first.size()) best = &c;
    }
  }
  if (!best) return {name, std::nullopt};
  return {name.substr(0, name.size() - best->first.size()), best->second};
}

RawTable apply_exclusions(const RawTable& table, const ExclusionRules& rules,
                          std::vector<ExclusionLogEntry>* log) {
  std::vector<bool> drop(table.header.size(), false);
  std::vector<bool> rule_hit(rules.columns.size(), false);
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    const std::string& name = table.header[j];
    for (std::size_t r = 0; r < rules.columns.size(); ++r) {
      if (name == rules.columns[r]) {
        drop[j] = true;
        rule_hit[r] = true;
        if (log) log->push_back({name, "excluded by rule"});
      }
    }
    if (!drop[j]) {
      std::string lname = lower(name);
      for (const auto& pat : rules.name_patterns) {
        if (!pat.empty() && lname.find(lower(pat)) != std::string::npos) {
          drop[j] = true;
          if (log) log->push_back({name, "excluded by pattern '" + pat + "'"});
          break;
        }
      }
    }
  }
  for (std::size_t r = 0; r < rules.columns.size(); ++r) {
    if (!rule_hit[r] && log)
      log->push_back({rules.columns[r], "warning: rule matched no column"});
  }

  RawTable out;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (!drop[j]) {
      keep.push_back(j);
      out.header.push_back(table.header[j]);
    }
  }
  out.rows.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    std::vector<std::string> r;
    r.reserve(keep.size());
    for (std::size_t j : keep) r.push_back(row[j]);
    out.rows.push_back(std::move(r));
  }
  out.rejected_ragged_rows = table.rejected_ragged_rows;
  return out;
}

namespace {

bool looks_like_date(const std::string& t) {
  return std::regex_match(t, kIsoDate) || std::regex_match(t, kSlashDate);
}

// Deterministic positive-class choice when the config does not specify one.
bool is_positive_token(const std::string& v) {
  std::string l = lower(v);
  return l == "1" || l == "case" || l == "yes" || l == "true" || l == "positive" ||
         l == "p-tma" || l == "tma" || l == "event";
}

}  // namespace

Cohort build_cohort(const RawTable& table, const std::string& label_column,
                    const GradeMap& grades, const std::string& id_column, BuildStats* stats) {
  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t j = 0; j < table.header.size(); ++j)
      if (table.header[j] == name) return j;
    return std::nullopt;
  };
  auto label_idx = find_col(label_column);
  if (!label_idx) throw DataError("label column missing: " + label_column);
  std::optional<std::size_t> id_idx;
  if (!id_column.empty()) id_idx = find_col(id_column);

  const std::size_t n = table.rows.size();

  // Label mapping: exactly two distinct values after trimming.
  std::set<std::string> label_values;
  for (const auto& row : table.rows) label_values.insert(trim(row[*label_idx]));
  if (label_values.size() != 2)
    throw DataError("label column is not binary: found " +
                    std::to_string(label_values.size()) + " distinct values");
  std::vector<std::string> lv(label_values.begin(), label_values.end());
  std::string positive;
  if (is_positive_token(lv[0]) && !is_positive_token(lv[1]))
    positive = lv[0];
  else if (is_positive_token(lv[1]) && !is_positive_token(lv[0]))
    positive = lv[1];
  else
    positive = lv[1];  // lexicographically last

  Cohort cohort;
  cohort.positive_label = positive;
  cohort.negative_label = (lv[0] == positive) ? lv[1] : lv[0];
  cohort.labels.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    cohort.labels[static_cast<Eigen::Index>(i)] = (trim(table.rows[i][*label_idx]) == positive) ? 1 : 0;

  std::vector<std::size_t> predictor_cols;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j == *label_idx) continue;
    if (id_idx && j == *id_idx) continue;
    predictor_cols.push_back(j);
  }
  const std::size_t p = predictor_cols.size();

  cohort.row_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (id_idx) {
      cohort.row_ids[i] = trim(table.rows[i][*id_idx]);
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "row%04zu", i + 1);
      cohort.row_ids[i] = buf;
    }
  }

  cohort.values = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  cohort.missing_mask = BoolMatrix::Constant(static_cast<Eigen::Index>(n),
                                             static_cast<Eigen::Index>(p), true);
  cohort.columns.resize(p);

  for (std::size_t jj = 0; jj < p; ++jj) {
    const std::size_t j = predictor_cols[jj];
    ColumnMeta& meta = cohort.columns[jj];
    meta.name = table.header[j];
    auto [analyte, week] = decode_timepoint(meta.name);
    meta.analyte = analyte;
    meta.week = week;

    std::vector<ParsedValue> parsed(n);
    std::size_t n_numericish = 0, n_text = 0;
    for (std::size_t i = 0; i < n; ++i) {
      parsed[i] = parse_clinical_value(table.rows[i][j], grades);
      if (stats) ++stats->predictor_cells_parsed;
      if (parsed[i].kind == ParsedValue::Kind::numeric ||
          parsed[i].kind == ParsedValue::Kind::qualitative)
        ++n_numericish;
      else if (parsed[i].kind == ParsedValue::Kind::unparseable && !looks_like_date(parsed[i].text))
        ++n_text;
    }

    const auto ji = static_cast<Eigen::Index>(jj);
    std::size_t missing = 0;
    if (n_numericish > 0 || n_text == 0) {
      // Continuous: text and dates become missing, counted as unparseable.
      meta.kind = ColumnKind::continuous;
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        switch (parsed[i].kind) {
          case ParsedValue::Kind::numeric:
          case ParsedValue::Kind::qualitative:
            cohort.values(ii, ji) = parsed[i].value;
            cohort.missing_mask(ii, ji) = false;
            break;
          case ParsedValue::Kind::unparseable:
            ++meta.unparseable_count;
            [[fallthrough]];
          case ParsedValue::Kind::missing:
            ++missing;
            break;
        }
      }
    } else {
      // No numeric content at all: treat the text levels as categories.
      meta.kind = ColumnKind::categorical;
      std::set<std::string> levels;
      for (std::size_t i = 0; i < n; ++i)
        if (parsed[i].kind == ParsedValue::Kind::unparseable && !looks_like_date(parsed[i].text))
          levels.insert(parsed[i].text);
      meta.categories.assign(levels.begin(), levels.end());
      auto code_of = [&](const std::string& s) {
        return static_cast<double>(
            std::lower_bound(meta.categories.begin(), meta.categories.end(), s) -
            meta.categories.begin());
      };
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (parsed[i].kind == ParsedValue::Kind::unparseable && !looks_like_date(parsed[i].text)) {
          cohort.values(ii, ji) = code_of(parsed[i].text);
          cohort.missing_mask(ii, ji) = false;
        } else {
          if (parsed[i].kind == ParsedValue::Kind::unparseable) ++meta.unparseable_count;
          ++missing;
        }
      }
    }
    meta.missing_fraction = n == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(n);
  }

  if (cohort.labels.sum() == 0 || cohort.labels.sum() == cohort.labels.size())
    throw DataError("label vector does not contain both classes");
  return cohort;
}

std::string format_double(double v) {
  char buf[48];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

bool needs_quotes(const std::string& s) {
  return s.find_first_of(",\"\n\r") != std::string::npos;
}

std::string csv_escape(const std::string& s) {
  if (!needs_quotes(s)) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string write_cohort_csv(const Cohort& cohort, const std::string& label_column,
                             const std::string& id_column) {
  std::ostringstream os;
  os << csv_escape(id_column);
  for (const auto& c : cohort.columns) os << ',' << csv_escape(c.name);
  os << ',' << csv_escape(label_column) << '\n';
  for (Eigen::Index i = 0; i < cohort.n(); ++i) {
    os << csv_escape(cohort.row_ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < cohort.p(); ++j) {
      os << ',';
      if (cohort.missing_mask(i, j)) continue;
      const ColumnMeta& meta = cohort.columns[static_cast<std::size_t>(j)];
      if (meta.kind == ColumnKind::categorical) {
        os << csv_escape(meta.categories[static_cast<std::size_t>(cohort.values(i, j))]);
      } else {
        os << format_double(cohort.values(i, j));
      }
    }
    os << ',' << csv_escape(cohort.labels[i] == 1 ? cohort.positive_label : cohort.negative_label);
    os << '\n';
  }
  return os.str();
}

std::string cohort_schema_json(const Cohort& cohort,
                               const std::vector<ExclusionLogEntry>& exclusion_log) {
  nlohmann::json j;
  j["n_rows"] = cohort.n();
  j["n_columns"] = cohort.p();
  j["positive_label"] = cohort.positive_label;
  j["negative_label"] = cohort.negative_label;
  j["columns"] = nlohmann::json::array();
  for (const auto& c : cohort.columns) {
    nlohmann::json cj;
    cj["name"] = c.name;
    cj["analyte"] = c.analyte;
    if (c.week) cj["week"] = *c.week;
    cj["kind"] = c.kind == ColumnKind::continuous ? "continuous"
                 : c.kind == ColumnKind::categorical ? "categorical"
                                                     : "excluded";
    cj["missing_fraction"] = c.missing_fraction;
    cj["unparseable_count"] = c.unparseable_count;
    if (!c.categories.empty()) cj["categories"] = c.categories;
    j["columns"].push_back(cj);
  }
  j["exclusion_log"] = nlohmann::json::array();
  for (const auto& e : exclusion_log)
    j["exclusion_log"].push_back({{"column", e.column}, {"reason", e.reason}});
  return j.dump(2) + "\n";
}

}  // namespace labrisk::dataio
