#pragma once

#include "labrisk/interpret.hpp"
#include "labrisk/protocol.hpp"

#include <filesystem>
#include <string>

namespace labrisk::report {

// Everything `train` emits; `evaluate` and `report` run from these files alone.
struct BundlePaths {
  std::filesystem::path dir;

  std::filesystem::path study() const { return dir / "study.json"; }
  std::filesystem::path metric_table() const { return dir / "metric_table.json"; }
  std::filesystem::path candidate_table() const { return dir / "candidate_table.json"; }
  std::filesystem::path feature_report_json() const { return dir / "feature_report.json"; }
  std::filesystem::path feature_report_txt() const { return dir / "feature_report.txt"; }
  std::filesystem::path baseline_json() const { return dir / "baseline_table.json"; }
  std::filesystem::path baseline_txt() const { return dir / "baseline_table.txt"; }
  std::filesystem::path model() const { return dir / "model.json"; }
  std::filesystem::path preprocessor() const { return dir / "preprocessor.json"; }
  std::filesystem::path run_log() const { return dir / "run_log.json"; }
  std::filesystem::path roc_csv() const { return dir / "roc.csv"; }
  std::filesystem::path pr_csv() const { return dir / "pr.csv"; }
  std::filesystem::path calibration_csv() const { return dir / "calibration.csv"; }
  std::filesystem::path dca_csv() const { return dir / "dca.csv"; }
  std::filesystem::path markdown() const { return dir / "report.md"; }
};

void write_bundle(const BundlePaths& paths, const protocol::StudyResult& result,
                  const dataio::Cohort& cohort, const protocol::StudyConfig& config,
                  const interpret::ReportMaps& maps, const std::string& config_text);

// Recomputes the held-out metric table and curves from the stored artifacts.
// Returns true when the recomputed table is byte-identical to the stored one.
// Refuses (DataError) when the recorded test partition was tampered with.
bool evaluate_bundle(const BundlePaths& paths, const dataio::Cohort& cohort,
                     const std::filesystem::path& out_dir, int workers);

// Assembles the Markdown study report from the bundle files.
std::string render_markdown(const BundlePaths& paths);

std::string metric_table_json(
    const std::vector<std::pair<std::string, metrics::IntervalEstimate>>& table);

void write_curves(const std::filesystem::path& dir, const metrics::ScoredSet& test,
                  int calibration_bins, const std::vector<double>& dca_grid);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

nlohmann::json hyperparams_to_json(const models::Hyperparams& hp);
models::Hyperparams hyperparams_from_json(const nlohmann::json& j);

}  // namespace labrisk::report
