#include "labrisk/synthcohort.hpp"

#include "labrisk/interpret.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace labrisk::synth {

namespace {

const std::vector<int> kWeeks = {6, 12, 16, 24, 28, 30, 32};

std::string week_code(int week) {
  switch (week) {
    case 6: return "VI";
    case 12: return "XII";
    case 16: return "XVI";
    case 24: return "XXIV";
    case 28: return "XXVIII";
    case 30: return "XXX";
    case 32: return "XXXII";
  }
  throw ConfigError("week outside the 7-timepoint schedule");
}

}  // namespace

std::vector<AnalyteSpec> default_panel() {
  // Marginals are arbitrary; only the planted latent structure matters.
  return {
      {"CysC", 0.9, 0.25, "mg/L", kWeeks},  {"UA", 280.0, 60.0, "umol/L", kWeeks},
      {"Hb", 120.0, 12.0, "g/L", kWeeks},   {"Neu", 6.5, 1.8, "10^9/L", kWeeks},
      {"LDH", 190.0, 45.0, "U/L", kWeeks},  {"Cr", 55.0, 12.0, "umol/L", kWeeks},
      {"UWBC", 4.0, 3.0, "/HPF", kWeeks},   {"NLR", 3.8, 1.2, "", kWeeks},
      {"WBC", 9.0, 2.2, "10^9/L", kWeeks},  {"Plt", 210.0, 55.0, "10^9/L", kWeeks},
      {"ALT", 18.0, 9.0, "U/L", kWeeks},    {"AST", 21.0, 8.0, "U/L", kWeeks},
      {"Alb", 38.0, 4.0, "g/L", kWeeks},    {"TBil", 8.0, 3.0, "umol/L", kWeeks},
      {"Glu", 4.6, 0.7, "mmol/L", kWeeks},  {"TG", 2.1, 0.8, "mmol/L", kWeeks},
      {"Chol", 5.4, 1.0, "mmol/L", kWeeks}, {"Ca", 2.25, 0.1, "mmol/L", kWeeks},
      {"K", 4.0, 0.35, "mmol/L", kWeeks},   {"Na", 139.0, 2.5, "mmol/L", kWeeks},
      {"Urea", 3.4, 0.9, "mmol/L", kWeeks},
  };
}

std::vector<PlantedEffect> default_effects() {
  return {
      {"CysCVI", +1, 0.8},  {"UAVI", +1, 0.8},    {"HbXXXII", -1, 0.8},
      {"NeuXVI", +1, 0.8},  {"LDHVI", +1, 0.8},   {"CrXXIV", +1, 0.3},
      {"UWBCXXX", +1, 0.2}, {"NeuVI", +1, 0.25},  {"NLRXXIV", -1, 0.2},
      {"WBCXII", +1, 0.2},
  };
}

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.panel = default_panel();
  c.effects = default_effects();
  return c;
}

std::vector<std::string> Manifest::informative_features() const {
  std::vector<std::string> out;
  for (const auto& f : features)
    if (f.informative) out.push_back(f.feature);
  return out;
}

GeneratedCohort generate(const SynthConfig& config) {
  if (!(config.prevalence > 0.0 && config.prevalence < 1.0))
    throw ConfigError("synth: prevalence must lie in (0,1)");
  if (config.missingness_rate < 0 || config.missingness_rate > 1 || config.mess_rate < 0 ||
      config.mess_rate > 1)
    throw ConfigError("synth: rates must lie in [0,1]");

  const auto& panel = config.panel.empty() ? default_panel() : config.panel;
  struct Feature {
    std::string name;
    const AnalyteSpec* analyte;
  };
  std::vector<Feature> features;
  for (const auto& a : panel)
    for (int w : a.weeks) features.push_back({a.name + week_code(w), &a});

  std::map<std::string, const PlantedEffect*> planted;
  for (const auto& e : config.effects) {
    bool found = false;
    for (const auto& f : features) found = found || f.name == e.feature;
    if (!found) throw ConfigError("synth: planted feature not in panel: " + e.feature);
    planted[e.feature] = &e;
  }

  const int n = config.n_subjects;
  const auto p = features.size();
  Matrix z(n, static_cast<Eigen::Index>(p));
  {
    Rng rng = derive_rng(config.seed, 0x5f3du);
    for (int i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j)
        z(i, static_cast<Eigen::Index>(j)) = rng.normal();
  }

  GeneratedCohort out;
  out.manifest.seed = config.seed;
  out.manifest.sharpness = config.label_sharpness;
  for (const auto& f : features) {
    ManifestEntry e;
    e.feature = f.name;
    auto it = planted.find(f.name);
    if (it != planted.end() && it->second->effect != 0.0) {
      e.informative = true;
      e.direction = it->second->direction;
      e.effect = it->second->effect;
    }
    out.manifest.features.push_back(e);
  }

  // Labels from a latent logistic score over planted standardized features.
  // The score is centered at the in-sample prevalence quantile and sharpened,
  // so the positive rate lands near the configured prevalence.
  std::vector<int> labels(static_cast<std::size_t>(n));
  {
    std::vector<double> score(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) {
        const ManifestEntry& e = out.manifest.features[j];
        if (e.informative)
          score[static_cast<std::size_t>(i)] +=
              e.direction * e.effect * z(i, static_cast<Eigen::Index>(j));
      }
    std::vector<double> sorted = score;
    std::sort(sorted.begin(), sorted.end());
    int target = static_cast<int>(std::lround(config.prevalence * n));
    target = std::clamp(target, 1, n - 1);
    const double cut = sorted[static_cast<std::size_t>(n - target)];
    out.manifest.intercept = -config.label_sharpness * cut;
    Rng rng = derive_rng(config.seed, 0x1abe1u);
    for (int i = 0; i < n; ++i) {
      double logit = config.label_sharpness * (score[static_cast<std::size_t>(i)] - cut);
      double prob = 1.0 / (1.0 + std::exp(-logit));
      labels[static_cast<std::size_t>(i)] = rng.uniform() < prob ? 1 : 0;
    }
  }

  // Render the raw CSV with export noise.
  Rng mess_rng = derive_rng(config.seed, 0xce115u);
  std::ostringstream os;
  os << "PatientID";
  for (const auto& f : features) os << ',' << f.name;
  if (config.include_leak_columns) os << ",LOS,FetalOutcome";
  os << ",Outcome\n";

  static const char* kGradeTokens[] = {"negative", "trace", "+", "++", "+++"};
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "P%04d", i + 1);
    os << id;
    for (std::size_t j = 0; j < p; ++j) {
      os << ',';
      if (mess_rng.uniform() < config.missingness_rate) continue;  // masked cell
      double value = features[j].analyte->base +
                     features[j].analyte->scale * z(i, static_cast<Eigen::Index>(j));
      value = std::round(value * 1000.0) / 1000.0;
      if (mess_rng.uniform() < config.mess_rate) {
        double kind = mess_rng.uniform();
        // Qualitative grades only show up for the urine sediment assay; for
        // quantitative analytes a grade token would be an out-of-scale value
        // rather than realistic export noise.
        bool graded = features[j].analyte->unit == "/HPF";
        if (kind < 0.6) {
          os << dataio::format_double(value);
          if (!features[j].analyte->unit.empty()) os << ' ' << features[j].analyte->unit;
        } else if (kind < 0.8 || !graded) {
          os << "2021-0" << (1 + mess_rng.uniform_int(9)) << "-"
             << (10 + mess_rng.uniform_int(18));
        } else {
          os << kGradeTokens[mess_rng.uniform_int(5)];
        }
      } else {
        os << dataio::format_double(value);
      }
    }
    if (config.include_leak_columns) {
      // Post-event fields that directly encode the outcome; the study's
      // exclusion rules must drop them.
      Rng leak = derive_rng(config.seed, 0x1ea6u, static_cast<std::uint64_t>(i));
      int los = labels[static_cast<std::size_t>(i)] == 1
                    ? 5 + static_cast<int>(leak.uniform_int(4))
                    : 2 + static_cast<int>(leak.uniform_int(3));
      os << ',' << los << ','
         << (labels[static_cast<std::size_t>(i)] == 1 && leak.uniform() < 0.35
                 ? "Adverse Outcome"
                 : "Normal Outcome");
    }
    os << ',' << (labels[static_cast<std::size_t>(i)] == 1 ? "Case" : "Control") << '\n';
  }
  out.csv = os.str();
  return out;
}

AgreementReport verify_manifest(const dataio::Cohort& cohort, const Manifest& manifest) {
  AgreementReport report;
  for (const auto& entry : manifest.features) {
    if (!entry.informative || entry.effect < 0.8) continue;
    std::optional<std::size_t> col;
    for (std::size_t j = 0; j < cohort.columns.size(); ++j)
      if (cohort.columns[j].name == entry.feature) col = j;
    if (!col) throw DataError("verify_manifest: schema mismatch, missing " + entry.feature);
    std::vector<double> case_vals, ctrl_vals;
    const auto jc = static_cast<Eigen::Index>(*col);
    for (Eigen::Index i = 0; i < cohort.n(); ++i) {
      if (cohort.missing_mask(i, jc)) continue;
      (cohort.labels[i] == 1 ? case_vals : ctrl_vals).push_back(cohort.values(i, jc));
    }
    auto effect = interpret::mann_whitney(case_vals, ctrl_vals);
    DirectionAgreement row;
    row.feature = entry.feature;
    row.planted_direction = entry.direction;
    row.empirical_r = effect.rank_biserial;
    row.agrees = (effect.rank_biserial > 0) == (entry.direction > 0);
    report.all_agree = report.all_agree && row.agrees;
    report.rows.push_back(row);
  }
  return report;
}

std::string manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["intercept"] = m.intercept;
  j["sharpness"] = m.sharpness;
  j["features"] = nlohmann::json::array();
  for (const auto& f : m.features)
    j["features"].push_back({{"feature", f.feature},
                             {"informative", f.informative},
                             {"direction", f.direction},
                             {"effect", f.effect}});
  return j.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  Manifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.intercept = j.at("intercept").get<double>();
  m.sharpness = j.value("sharpness", 1.0);
  for (const auto& fj : j.at("features")) {
    ManifestEntry e;
    e.feature = fj.at("feature").get<std::string>();
    e.informative = fj.at("informative").get<bool>();
    e.direction = fj.at("direction").get<int>();
    e.effect = fj.at("effect").get<double>();
    m.features.push_back(e);
  }
  return m;
}

}  // namespace labrisk::synth
