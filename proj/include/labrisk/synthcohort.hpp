#pragma once

#include "labrisk/dataio.hpp"

#include <string>
#include <vector>

namespace labrisk::synth {

struct PlantedEffect {
  std::string feature;  // e.g. "CysCVI"
  int direction = +1;   // +1 = higher in cases
  double effect = 0.8;  // standardized latent-score coefficient
};

struct AnalyteSpec {
  std::string name;
  double base = 0.0;
  double scale = 1.0;
  std::string unit;
  std::vector<int> weeks;  // gestational weeks with a measurement
};

struct SynthConfig {
  int n_subjects = 300;
  double prevalence = 142.0 / 300.0;
  std::vector<AnalyteSpec> panel;            // empty -> default_panel()
  std::vector<PlantedEffect> effects;        // empty in a config means "none"
  double missingness_rate = 0.03;
  double mess_rate = 0.02;
  // Steepness of the label sigmoid around the prevalence cutpoint. Larger
  // values make labels closer to a deterministic function of the latent score.
  double label_sharpness = 16.0;
  std::uint64_t seed = 1;
  bool include_leak_columns = true;  // post-event columns the study must exclude

  static SynthConfig defaults();
};

struct ManifestEntry {
  std::string feature;
  bool informative = false;
  int direction = 0;
  double effect = 0.0;
};

struct Manifest {
  std::vector<ManifestEntry> features;
  double intercept = 0.0;   // latent-score intercept after sharpness scaling
  double sharpness = 1.0;   // label sigmoid steepness
  std::uint64_t seed = 0;

  std::vector<std::string> informative_features() const;
};

// 10 signal-domain analytes plus 11 noise analytes over the 7-week schedule.
std::vector<AnalyteSpec> default_panel();
std::vector<PlantedEffect> default_effects();

struct GeneratedCohort {
  std::string csv;  // same dialect dataio ingests
  Manifest manifest;
};

GeneratedCohort generate(const SynthConfig& config);

struct DirectionAgreement {
  std::string feature;
  int planted_direction = 0;
  double empirical_r = 0.0;
  bool agrees = false;
};

struct AgreementReport {
  std::vector<DirectionAgreement> rows;  // planted features with |effect| >= 0.8
  bool all_agree = true;
};

AgreementReport verify_manifest(const dataio::Cohort& cohort, const Manifest& manifest);

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);

}  // namespace labrisk::synth
