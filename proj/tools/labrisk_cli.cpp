#include "labrisk/report.hpp"
#include "labrisk/synthcohort.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace labrisk;

namespace {

// Everything the study needs, parsed and validated from one JSON file.
struct ResolvedConfig {
  fs::path input_csv;
  fs::path output_dir = "out";
  std::string label_column = "Outcome";
  std::string id_column;
  dataio::ExclusionRules exclusions;
  dataio::GradeMap grades = dataio::default_grade_map();
  protocol::StudyConfig study;
  interpret::ReportMaps maps;
  synth::SynthConfig synth = synth::SynthConfig::defaults();
  std::string raw_text;  // for the config hash in the run log
};

void require_keys(const json& j, const std::string& where,
                  const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

double require_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

std::uint64_t require_seed(const json& j, const std::string& where) {
  if (!j.is_number_unsigned())
    throw ConfigError(where + ": expected a non-negative integer seed");
  return j.get<std::uint64_t>();
}

std::map<std::string, std::string> load_string_map(const fs::path& path) {
  json j = json::parse(report::read_file(path));
  std::map<std::string, std::string> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out[it.key()] = it.value().get<std::string>();
  return out;
}

protocol::ParamSpec parse_param_spec(const json& j, const std::string& where) {
  require_keys(j, where, {"kind", "lo", "hi", "choices"});
  auto kind = j.at("kind").get<std::string>();
  if (kind == "choice")
    return protocol::ParamSpec::Choice(j.at("choices").get<std::vector<double>>());
  double lo = require_number(j.at("lo"), where + ".lo");
  double hi = require_number(j.at("hi"), where + ".hi");
  if (kind == "log_uniform") return protocol::ParamSpec::LogUniform(lo, hi);
  if (kind == "uniform") return protocol::ParamSpec::Uniform(lo, hi);
  if (kind == "int_range")
    return protocol::ParamSpec::IntRange(static_cast<long>(lo), static_cast<long>(hi));
  throw ConfigError(where + ": unknown kind '" + kind + "'");
}

ResolvedConfig load_config(const fs::path& path) {
  ResolvedConfig rc;
  rc.raw_text = report::read_file(path);
  json j;
  try {
    j = json::parse(rc.raw_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  require_keys(j, "config",
               {"input_csv", "output_dir", "label_column", "id_column", "exclusions",
                "grade_map", "preprocess", "protocol", "metrics", "report", "synth"});

  if (j.contains("input_csv")) rc.input_csv = j.at("input_csv").get<std::string>();
  if (j.contains("output_dir")) rc.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("label_column")) rc.label_column = j.at("label_column").get<std::string>();
  if (j.contains("id_column")) rc.id_column = j.at("id_column").get<std::string>();

  if (j.contains("exclusions")) {
    const auto& e = j.at("exclusions");
    require_keys(e, "exclusions", {"columns", "name_patterns"});
    if (e.contains("columns"))
      rc.exclusions.columns = e.at("columns").get<std::vector<std::string>>();
    if (e.contains("name_patterns"))
      rc.exclusions.name_patterns = e.at("name_patterns").get<std::vector<std::string>>();
  }
  if (j.contains("grade_map")) {
    rc.grades.clear();
    for (auto it = j.at("grade_map").begin(); it != j.at("grade_map").end(); ++it)
      rc.grades[it.key()] = require_number(it.value(), "grade_map." + it.key());
  }
  if (j.contains("preprocess")) {
    const auto& p = j.at("preprocess");
    require_keys(p, "preprocess", {"missingness_threshold", "categorical_cardinality_max"});
    if (p.contains("missingness_threshold"))
      rc.study.prep.missingness_threshold =
          require_number(p.at("missingness_threshold"), "preprocess.missingness_threshold");
    if (p.contains("categorical_cardinality_max"))
      rc.study.prep.categorical_cardinality_max =
          p.at("categorical_cardinality_max").get<int>();
  }
  if (j.contains("protocol")) {
    const auto& p = j.at("protocol");
    require_keys(p, "protocol",
                 {"seed", "test_fraction", "k_folds", "n_iter", "families", "search_spaces"});
    if (p.contains("seed")) rc.study.seed = require_seed(p.at("seed"), "protocol.seed");
    if (p.contains("test_fraction"))
      rc.study.test_fraction = require_number(p.at("test_fraction"), "protocol.test_fraction");
    if (rc.study.test_fraction <= 0.0 || rc.study.test_fraction >= 1.0)
      throw ConfigError("protocol.test_fraction: must lie in (0, 1)");
    if (p.contains("k_folds")) rc.study.k_folds = p.at("k_folds").get<int>();
    if (p.contains("n_iter")) rc.study.n_iter = p.at("n_iter").get<int>();
    if (rc.study.k_folds < 2) throw ConfigError("protocol.k_folds: must be at least 2");
    if (rc.study.n_iter < 1) throw ConfigError("protocol.n_iter: must be at least 1");
    if (p.contains("families")) {
      rc.study.families.clear();
      for (const auto& f : p.at("families"))
        rc.study.families.push_back(models::family_from_name(f.get<std::string>()));
      if (rc.study.families.empty())
        throw ConfigError("protocol.families: at least one family required");
    }
    if (p.contains("search_spaces")) {
      for (auto it = p.at("search_spaces").begin(); it != p.at("search_spaces").end(); ++it) {
        protocol::SearchSpace space;
        for (auto pit = it.value().begin(); pit != it.value().end(); ++pit)
          space[pit.key()] = parse_param_spec(
              pit.value(), "protocol.search_spaces." + it.key() + "." + pit.key());
        rc.study.spaces[models::family_from_name(it.key())] = std::move(space);
      }
    }
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    require_keys(m, "metrics", {"calibration_bins", "bootstrap_b", "dca_grid"});
    if (m.contains("calibration_bins"))
      rc.study.calibration_bins = m.at("calibration_bins").get<int>();
    if (m.contains("bootstrap_b")) rc.study.bootstrap_b = m.at("bootstrap_b").get<int>();
    if (m.contains("dca_grid"))
      rc.study.dca_grid = m.at("dca_grid").get<std::vector<double>>();
    if (rc.study.calibration_bins < 1 || rc.study.bootstrap_b < 1)
      throw ConfigError("metrics: calibration_bins and bootstrap_b must be positive");
  }
  if (j.contains("report")) {
    const auto& r = j.at("report");
    require_keys(r, "report", {"alias_map", "domain_map", "top_k"});
    if (r.contains("alias_map"))
      rc.maps.alias = load_string_map(r.at("alias_map").get<std::string>());
    if (r.contains("domain_map"))
      rc.maps.domain = load_string_map(r.at("domain_map").get<std::string>());
    if (r.contains("top_k")) rc.study.top_k = r.at("top_k").get<int>();
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    require_keys(s, "synth",
                 {"n_subjects", "prevalence", "missingness_rate", "mess_rate", "seed",
                  "include_leak_columns", "effects"});
    if (s.contains("n_subjects")) rc.synth.n_subjects = s.at("n_subjects").get<int>();
    if (s.contains("prevalence"))
      rc.synth.prevalence = require_number(s.at("prevalence"), "synth.prevalence");
    if (s.contains("missingness_rate"))
      rc.synth.missingness_rate =
          require_number(s.at("missingness_rate"), "synth.missingness_rate");
    if (s.contains("mess_rate"))
      rc.synth.mess_rate = require_number(s.at("mess_rate"), "synth.mess_rate");
    if (s.contains("seed")) rc.synth.seed = require_seed(s.at("seed"), "synth.seed");
    if (s.contains("include_leak_columns"))
      rc.synth.include_leak_columns = s.at("include_leak_columns").get<bool>();
    if (s.contains("effects")) {
      rc.synth.effects.clear();
      for (const auto& e : s.at("effects")) {
        require_keys(e, "synth.effects[]", {"feature", "direction", "effect"});
        synth::PlantedEffect pe;
        pe.feature = e.at("feature").get<std::string>();
        pe.direction = e.at("direction").get<int>();
        pe.effect = require_number(e.at("effect"), "synth.effects[].effect");
        rc.synth.effects.push_back(std::move(pe));
      }
    }
  }
  return rc;
}

dataio::Cohort load_cohort(const ResolvedConfig& rc, const fs::path& csv_path,
                           std::vector<dataio::ExclusionLogEntry>* log = nullptr,
                           dataio::RawTable* raw_out = nullptr) {
  auto table = dataio::parse_csv(report::read_file(csv_path));
  auto kept = dataio::apply_exclusions(table, rc.exclusions, log);
  if (raw_out) *raw_out = kept;
  return dataio::build_cohort(kept, rc.label_column, rc.grades, rc.id_column);
}

int resolve_workers(int flag_value) {
  if (const char* env = std::getenv("LABRISK_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw ConfigError("LABRISK_WORKERS must be a positive integer");
  }
  return flag_value;
}

int cmd_synth(const ResolvedConfig& rc, const fs::path& out_dir, bool verbose) {
  fs::create_directories(out_dir);
  auto generated = synth::generate(rc.synth);
  report::write_file(out_dir / "cohort.csv", generated.csv);
  report::write_file(out_dir / "manifest.json", synth::manifest_to_json(generated.manifest));
  if (verbose)
    std::cerr << "wrote " << (out_dir / "cohort.csv").string() << " ("
              << rc.synth.n_subjects << " subjects)\n";
  return 0;
}

int cmd_ingest(const ResolvedConfig& rc, const fs::path& csv_path, const fs::path& out_dir,
               bool verbose) {
  fs::create_directories(out_dir);
  std::vector<dataio::ExclusionLogEntry> log;
  auto cohort = load_cohort(rc, csv_path, &log);
  report::write_file(out_dir / "cohort_clean.csv",
                     dataio::write_cohort_csv(cohort, rc.label_column, rc.id_column));
  report::write_file(out_dir / "schema.json", dataio::cohort_schema_json(cohort, log));
  if (verbose)
    std::cerr << "ingested " << cohort.n() << " rows, " << cohort.p() << " columns, "
              << log.size() << " excluded\n";
  return 0;
}

int cmd_train(ResolvedConfig& rc, const fs::path& csv_path, const fs::path& out_dir,
              int workers, bool verbose) {
  rc.study.workers = workers;
  auto cohort = load_cohort(rc, csv_path);
  auto result = protocol::run_study(cohort, rc.study);
  report::BundlePaths paths;
  paths.dir = out_dir;
  report::write_bundle(paths, result, cohort, rc.study, rc.maps, rc.raw_text);
  if (verbose && !result.test_metrics.empty())
    std::cerr << "selected " << models::family_name(result.selected_family)
              << ", held-out AUROC " << result.test_metrics.front().second.point << "\n";
  std::cout << "bundle written to " << out_dir.string() << "\n";
  return 0;
}

int cmd_evaluate(const ResolvedConfig& rc, const fs::path& csv_path, const fs::path& bundle,
                 const fs::path& out_dir, int workers) {
  auto cohort = load_cohort(rc, csv_path);
  report::BundlePaths paths;
  paths.dir = bundle;
  bool identical = report::evaluate_bundle(paths, cohort, out_dir, workers);
  std::cout << (identical ? "metric table reproduced bit-for-bit\n"
                          : "warning: recomputed metric table differs from the bundle\n");
  return identical ? 0 : 3;
}

int cmd_report(const fs::path& bundle) {
  report::BundlePaths paths;
  paths.dir = bundle;
  report::write_file(paths.markdown(), report::render_markdown(paths));
  std::cout << paths.markdown().string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labrisk: longitudinal lab-panel risk prediction study runner"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string input_override, out_override, bundle_path, eval_out;
  std::uint64_t seed_override = 0;
  bool has_seed = false;
  int workers = 1;
  bool verbose = false;

  app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("-c,--config", config_path, "Study config JSON");
    if (needs_config) opt->required();
    sub->add_option("-o,--out", out_override, "Output directory (overrides config)");
  };

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic cohort CSV + manifest");
  add_common(synth_cmd, true);
  synth_cmd->add_option("--seed", seed_override, "Root seed override");

  auto* ingest_cmd = app.add_subcommand("ingest", "Clean a raw CSV into a cohort + schema");
  add_common(ingest_cmd, true);
  ingest_cmd->add_option("-i,--input", input_override, "Raw CSV (overrides config)");

  auto* train_cmd = app.add_subcommand("train", "Run the full study and emit a bundle");
  add_common(train_cmd, true);
  train_cmd->add_option("-i,--input", input_override, "Cohort CSV (overrides config)");
  train_cmd->add_option("--seed", seed_override, "Root seed override");
  train_cmd->add_option("-j,--workers", workers, "Worker threads (results never depend on it)")
      ->check(CLI::PositiveNumber);

  auto* eval_cmd = app.add_subcommand("evaluate", "Recompute the held-out metric table");
  add_common(eval_cmd, true);
  eval_cmd->add_option("-i,--input", input_override, "Cohort CSV (overrides config)");
  eval_cmd->add_option("-b,--bundle", bundle_path, "Bundle directory")->required();
  eval_cmd->add_option("-j,--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  auto* report_cmd = app.add_subcommand("report", "Assemble the Markdown report from a bundle");
  report_cmd->add_option("-b,--bundle", bundle_path, "Bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  has_seed = synth_cmd->count("--seed") > 0 || train_cmd->count("--seed") > 0;

  try {
    ResolvedConfig rc;
    if (!config_path.empty()) rc = load_config(config_path);
    if (has_seed) {
      rc.study.seed = seed_override;
      rc.synth.seed = seed_override;
    }
    fs::path out = out_override.empty() ? rc.output_dir : fs::path(out_override);
    fs::path input = input_override.empty() ? rc.input_csv : fs::path(input_override);
    int w = resolve_workers(workers);

    if (*synth_cmd) return cmd_synth(rc, out, verbose);
    if (*ingest_cmd || *train_cmd || *eval_cmd) {
      if (input.empty()) throw ConfigError("no input CSV given (config input_csv or --input)");
      if (!fs::exists(input)) throw DataError("input CSV not found: " + input.string());
    }
    if (*ingest_cmd) return cmd_ingest(rc, input, out, verbose);
    if (*train_cmd) return cmd_train(rc, input, out, w, verbose);
    if (*eval_cmd)
      return cmd_evaluate(rc, input, bundle_path,
                          out_override.empty() ? fs::path(bundle_path) / "evaluate" : out, w);
    if (*report_cmd) return cmd_report(bundle_path);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
}
