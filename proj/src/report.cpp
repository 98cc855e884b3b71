#include "labrisk/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace labrisk::report {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "labrisk 0.1.0";

std::string fmt3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

// Integrity fingerprint of the recorded test partition: row indices together
// with the labels they carried at training time.
std::uint64_t partition_hash(const std::vector<std::size_t>& rows, const IntVector& labels) {
  std::string buf;
  for (std::size_t r : rows) {
    buf += std::to_string(r);
    buf += ':';
    buf += std::to_string(labels[static_cast<Eigen::Index>(r)]);
    buf += ';';
  }
  return fnv1a(buf);
}

json interval_to_json(const std::string& name, const metrics::IntervalEstimate& e) {
  return json{{"metric", name},
              {"estimate", e.point},
              {"ci_lower", e.lower},
              {"ci_upper", e.upper},
              {"resamples", e.resamples},
              {"degenerate_resamples", e.degenerate}};
}

json feature_report_to_json(const interpret::FeatureReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"rank", r.rank},
                    {"feature", r.feature_code},
                    {"alias", r.clinical_alias},
                    {"importance", r.importance},
                    {"domain", r.domain},
                    {"p_value", r.p_value},
                    {"trend", r.trend}});
  }
  return json{{"rows", rows},
              {"importance_available", rep.importance_available},
              {"notice", rep.notice}};
}

json baseline_to_json(const std::vector<interpret::BaselineRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json j{{"characteristic", r.characteristic}, {"level", r.level},
           {"overall", r.overall},              {"control", r.control},
           {"case", r.cases},                   {"test", r.test}};
    if (r.p_value) j["p_value"] = *r.p_value;
    out.push_back(std::move(j));
  }
  return out;
}

std::string md_table(const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
  std::string out = "|";
  for (const auto& h : header) out += " " + h + " |";
  out += "\n|";
  for (std::size_t i = 0; i < header.size(); ++i) out += " --- |";
  out += "\n";
  for (const auto& row : rows) {
    out += "|";
    for (const auto& cell : row) out += " " + cell + " |";
    out += "\n";
  }
  return out;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

json hyperparams_to_json(const models::Hyperparams& hp) {
  return json{{"family", models::family_name(hp.family)}, {"values", hp.values}};
}

models::Hyperparams hyperparams_from_json(const json& j) {
  models::Hyperparams hp;
  hp.family = models::family_from_name(j.at("family").get<std::string>());
  for (auto it = j.at("values").begin(); it != j.at("values").end(); ++it)
    hp.values[it.key()] = it.value().get<double>();
  return hp;
}

std::string metric_table_json(
    const std::vector<std::pair<std::string, metrics::IntervalEstimate>>& table) {
  json rows = json::array();
  for (const auto& [name, est] : table) rows.push_back(interval_to_json(name, est));
  return json{{"metrics", rows}}.dump(2) + "\n";
}

void write_curves(const std::filesystem::path& dir, const metrics::ScoredSet& test,
                  int calibration_bins, const std::vector<double>& dca_grid) {
  using dataio::format_double;

  std::string roc = "threshold,fpr,tpr\n";
  for (const auto& p : metrics::roc_curve(test))
    roc += format_double(p.threshold) + "," + format_double(p.fpr) + "," +
           format_double(p.tpr) + "\n";
  write_file(dir / "roc.csv", roc);

  std::string pr = "threshold,recall,precision\n";
  for (const auto& p : metrics::pr_curve(test))
    pr += format_double(p.threshold) + "," + format_double(p.recall) + "," +
          format_double(p.precision) + "\n";
  write_file(dir / "pr.csv", pr);

  auto cal = metrics::calibration(test, calibration_bins);
  std::string cs = "bin,mean_predicted,event_rate,count\n";
  for (std::size_t i = 0; i < cal.bins.size(); ++i)
    cs += std::to_string(cal.bin_index[i]) + "," + format_double(cal.bins[i].mean_prob) +
          "," + format_double(cal.bins[i].event_rate) + "," +
          std::to_string(cal.bins[i].count) + "\n";
  write_file(dir / "calibration.csv", cs);

  std::string dca = "threshold,net_benefit_model,net_benefit_all,net_benefit_none\n";
  for (const auto& p : metrics::decision_curve(test, dca_grid))
    dca += format_double(p.threshold) + "," + format_double(p.net_benefit_model) + "," +
           format_double(p.net_benefit_all) + "," + format_double(p.net_benefit_none) + "\n";
  write_file(dir / "dca.csv", dca);
}

void write_bundle(const BundlePaths& paths, const protocol::StudyResult& result,
                  const dataio::Cohort& cohort, const protocol::StudyConfig& config,
                  const interpret::ReportMaps& maps, const std::string& config_text) {
  std::filesystem::create_directories(paths.dir);

  write_file(paths.model(), result.model->to_json().dump(2) + "\n");
  write_file(paths.preprocessor(), preprocess::to_json(result.preprocessor));

  json candidates = json::array();
  for (const auto& c : result.candidates) {
    candidates.push_back({{"family", models::family_name(c.family)},
                          {"best", hyperparams_to_json(c.best)},
                          {"fold_aurocs", c.fold_aurocs},
                          {"mean_cv_auroc", c.mean_cv_auroc},
                          {"log", c.log}});
  }
  json cand_test = json::array();
  for (const auto& r : result.candidate_test) {
    cand_test.push_back({{"family", models::family_name(r.family)},
                         {"threshold", r.threshold},
                         {"auroc", r.auroc},
                         {"auprc", r.auprc},
                         {"accuracy", r.accuracy},
                         {"sensitivity", r.sensitivity},
                         {"specificity", r.specificity},
                         {"ppv", r.ppv},
                         {"npv", r.npv},
                         {"f1", r.f1},
                         {"brier", r.brier}});
  }
  std::vector<double> oof(result.oof.probs.data(), result.oof.probs.data() + result.oof.n());
  std::vector<double> tst(result.test.probs.data(), result.test.probs.data() + result.test.n());
  json study{
      {"split",
       {{"seed", result.split.seed},
        {"train_rows", result.split.train_rows},
        {"test_rows", result.split.test_rows}}},
      {"candidates", candidates},
      {"selected",
       {{"index", result.selected_index},
        {"family", models::family_name(result.selected_family)},
        {"hyperparams", hyperparams_to_json(result.selected_hp)}}},
      {"threshold",
       {{"value", result.threshold.threshold},
        {"youden_j", result.threshold.youden_j},
        {"oof_sensitivity", result.threshold.sensitivity},
        {"oof_specificity", result.threshold.specificity}}},
      {"oof_probs", oof},
      {"test_probs", tst}};
  write_file(paths.study(), study.dump(2) + "\n");

  write_file(paths.metric_table(), metric_table_json(result.test_metrics));
  write_file(paths.candidate_table(), json{{"rows", cand_test}}.dump(2) + "\n");

  auto rep = interpret::feature_report(result.model->feature_importance(),
                                       result.train_design.feature_names,
                                       result.train_design.source_column, cohort, maps,
                                       config.top_k);
  write_file(paths.feature_report_json(), feature_report_to_json(rep).dump(2) + "\n");
  write_file(paths.feature_report_txt(), interpret::format_feature_report_text(rep));

  std::vector<std::string> characteristics;
  for (const auto& r : rep.rows) characteristics.push_back(r.feature_code);
  if (characteristics.empty())
    for (Eigen::Index c = 0; c < std::min<Eigen::Index>(cohort.p(), config.top_k); ++c)
      characteristics.push_back(cohort.columns[static_cast<std::size_t>(c)].name);
  auto baseline = interpret::baseline_table(cohort, characteristics);
  write_file(paths.baseline_json(), baseline_to_json(baseline).dump(2) + "\n");
  write_file(paths.baseline_txt(), interpret::format_baseline_text(baseline));

  write_curves(paths.dir, result.test, config.calibration_bins, config.dca_thresholds());

  json run_log{{"version", kVersion},
               {"seed", config.seed},
               {"config_hash", fnv1a(config_text)},
               {"test_fraction", config.test_fraction},
               {"k_folds", config.k_folds},
               {"n_iter", config.n_iter},
               {"bootstrap_b", config.bootstrap_b},
               {"calibration_bins", config.calibration_bins},
               {"dca_grid", config.dca_thresholds()},
               {"top_k", config.top_k},
               {"threshold", result.threshold.threshold},
               {"n_train", result.split.train_rows.size()},
               {"n_test", result.split.test_rows.size()},
               {"test_rows", result.split.test_rows},
               {"test_partition_hash", partition_hash(result.split.test_rows, cohort.labels)}};
  write_file(paths.run_log(), run_log.dump(2) + "\n");

  write_file(paths.markdown(), render_markdown(paths));
}

bool evaluate_bundle(const BundlePaths& paths, const dataio::Cohort& cohort,
                     const std::filesystem::path& out_dir, int workers) {
  json run_log = json::parse(read_file(paths.run_log()));
  auto test_rows = run_log.at("test_rows").get<std::vector<std::size_t>>();
  for (std::size_t r : test_rows)
    if (r >= static_cast<std::size_t>(cohort.n()))
      throw DataError("recorded test row " + std::to_string(r) + " is outside the cohort");
  if (partition_hash(test_rows, cohort.labels) !=
      run_log.at("test_partition_hash").get<std::uint64_t>())
    throw DataError("test partition integrity check failed: rows or labels differ from the "
                    "recorded study");

  auto fp = preprocess::from_json(read_file(paths.preprocessor()));
  auto model = models::model_from_json(json::parse(read_file(paths.model())));

  auto design = preprocess::transform(cohort, fp, test_rows);
  metrics::ScoredSet test;
  test.probs = model->predict_proba(design.values);
  test.labels.resize(static_cast<Eigen::Index>(test_rows.size()));
  for (std::size_t i = 0; i < test_rows.size(); ++i)
    test.labels[static_cast<Eigen::Index>(i)] =
        cohort.labels[static_cast<Eigen::Index>(test_rows[i])];

  auto table = protocol::metric_table(test, run_log.at("threshold").get<double>(),
                                      run_log.at("calibration_bins").get<int>(),
                                      run_log.at("bootstrap_b").get<int>(),
                                      run_log.at("seed").get<std::uint64_t>(), workers);

  std::filesystem::create_directories(out_dir);
  std::string recomputed = metric_table_json(table);
  write_file(out_dir / "metric_table.json", recomputed);
  write_curves(out_dir, test, run_log.at("calibration_bins").get<int>(),
               run_log.at("dca_grid").get<std::vector<double>>());

  return recomputed == read_file(paths.metric_table());
}

std::string render_markdown(const BundlePaths& paths) {
  json run_log = json::parse(read_file(paths.run_log()));
  json study = json::parse(read_file(paths.study()));
  json table = json::parse(read_file(paths.metric_table()));
  json cand = json::parse(read_file(paths.candidate_table()));
  json feat = json::parse(read_file(paths.feature_report_json()));
  json baseline = json::parse(read_file(paths.baseline_json()));

  std::string md = "# Prediction study report\n\n";
  md += "Seed " + std::to_string(run_log.at("seed").get<std::uint64_t>()) + ", " +
        std::to_string(run_log.at("n_train").get<std::size_t>()) + " training and " +
        std::to_string(run_log.at("n_test").get<std::size_t>()) + " held-out participants, " +
        std::to_string(run_log.at("k_folds").get<int>()) + "-fold cross-validation with " +
        std::to_string(run_log.at("n_iter").get<int>()) +
        " sampled configurations per family.\n\n";

  md += "## Baseline characteristics\n\n";
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : baseline) {
      std::string name = r.at("characteristic").get<std::string>();
      std::string level = r.at("level").get<std::string>();
      if (!level.empty()) name = "&nbsp;&nbsp;" + level;
      std::string p = r.contains("p_value") ? fmt3(r.at("p_value").get<double>()) : "";
      rows.push_back({name, r.at("overall").get<std::string>(),
                      r.at("control").get<std::string>(), r.at("case").get<std::string>(),
                      r.at("test").get<std::string>(), p});
    }
    md += md_table({"Characteristic", "Overall", "Control", "Case", "Test", "p"}, rows);
  }

  md += "\n## Model selection\n\n";
  md += "Selected family: **" +
        study.at("selected").at("family").get<std::string>() + "**, decision threshold " +
        fmt3(study.at("threshold").at("value").get<double>()) +
        " (Youden index on out-of-fold predictions).\n\n";
  {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < cand.at("rows").size(); ++i) {
      const auto& r = cand.at("rows")[i];
      const auto& c = study.at("candidates")[i];
      rows.push_back({r.at("family").get<std::string>(),
                      fmt3(c.at("mean_cv_auroc").get<double>()),
                      fmt3(r.at("auroc").get<double>()), fmt3(r.at("accuracy").get<double>()),
                      fmt3(r.at("sensitivity").get<double>()),
                      fmt3(r.at("specificity").get<double>()),
                      fmt3(r.at("f1").get<double>())});
    }
    md += md_table({"Family", "CV AUROC", "Test AUROC", "Accuracy", "Sensitivity",
                    "Specificity", "F1"},
                   rows);
  }

  md += "\n## Held-out performance\n\n";
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : table.at("metrics")) {
      if (r.at("estimate").is_null()) {
        rows.push_back({r.at("metric").get<std::string>(), "-", "-"});
        continue;
      }
      rows.push_back({r.at("metric").get<std::string>(), fmt3(r.at("estimate").get<double>()),
                      fmt3(r.at("ci_lower").get<double>()) + " to " +
                          fmt3(r.at("ci_upper").get<double>())});
    }
    md += md_table({"Metric", "Estimate", "95% CI"}, rows);
  }

  md += "\n## Top discriminative features\n\n";
  if (!feat.at("notice").get<std::string>().empty())
    md += feat.at("notice").get<std::string>() + "\n\n";
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : feat.at("rows"))
      rows.push_back({std::to_string(r.at("rank").get<int>()),
                      r.at("feature").get<std::string>(), r.at("alias").get<std::string>(),
                      fmt3(r.at("importance").get<double>()),
                      r.at("domain").get<std::string>(), fmt3(r.at("p_value").get<double>()),
                      r.at("trend").get<std::string>()});
    md += md_table({"Rank", "Feature", "Clinical name", "Importance", "Domain", "p", "Trend"},
                   rows);
  }
  md += "\nRankings describe discriminative association in this cohort and do not imply "
        "causality.\n";

  md += "\nCurve data: `roc.csv`, `pr.csv`, `calibration.csv`, `dca.csv`.\n";
  return md;
}

}  // namespace labrisk::report
