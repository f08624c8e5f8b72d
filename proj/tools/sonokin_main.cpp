// sonokin: ultrasound-feature knee-kinematics regression pipeline.
//
// Subcommands: synth, extract, train, evaluate, stats, report.
// Every run is deterministic for a fixed config and seed.

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "sonokin/config.hpp"
#include "sonokin/pipeline.hpp"

namespace {

int error_exit_code(const sonokin::Error& e) {
  using sonokin::ErrorCode;
  switch (e.code()) {
    // inputs the user handed us are wrong: validation failure
    case ErrorCode::ConfigError:
    case ErrorCode::IoFailure:
    case ErrorCode::MagicMismatch:
    case ErrorCode::FormatVersionMismatch:
    case ErrorCode::TruncatedFrameData:
    case ErrorCode::MalformedRow:
    case ErrorCode::NonMonotonicTimestamps:
    case ErrorCode::EmptyTrial:
    case ErrorCode::ChecksumMismatch:
      return 1;
    default:
      return 2;
  }
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  long long seed = -1;
  int workers = -1;
};

sonokin::RunConfig assemble_config(const CommonArgs& args) {
  sonokin::RunConfig config;
  if (!args.config_path.empty()) config = sonokin::load_config_file(args.config_path);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      sonokin::fail(sonokin::ErrorCode::ConfigError, "--set expects key=value, got '" + kv + "'");
    sonokin::apply_config_entry(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed >= 0) {
    config.synth.seed = static_cast<std::uint64_t>(args.seed);
    config.experiment.seed = static_cast<std::uint64_t>(args.seed);
  }
  if (args.workers >= 0) config.experiment.workers = args.workers;
  return config;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value configuration file");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--set", args.overrides, "override a config key (key=value, repeatable)");
  cmd->add_option("--seed", args.seed, "master seed for synth and experiment");
  cmd->add_option("--workers", args.workers, "parallel workers (0 = all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ultrasound-to-knee-kinematics regression pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string manifest_path;
  std::string report_path;
  std::string swing_path;
  bool print_schema = false;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  add_common(synth, args);
  synth->add_flag("--print-config-schema", print_schema, "list config keys and exit");

  CLI::App* extract = app.add_subcommand("extract", "write feature CSVs for a manifest");
  add_common(extract, args);
  extract->add_option("--manifest", manifest_path, "trial manifest CSV")->required();

  CLI::App* train = app.add_subcommand("train", "fit and serialize models");
  add_common(train, args);
  train->add_option("--manifest", manifest_path, "trial manifest CSV")->required();

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "cross-validated evaluation: report + trajectories");
  add_common(evaluate, args);
  evaluate->add_option("--manifest", manifest_path, "trial manifest CSV")->required();

  CLI::App* stats = app.add_subcommand("stats", "ANOVA + posthoc tables from a report");
  add_common(stats, args);
  stats->add_option("--report", report_path, "report.csv from evaluate")->required();

  CLI::App* report = app.add_subcommand("report", "render the summary tables");
  add_common(report, args);
  report->add_option("--report", report_path, "report.csv from evaluate")->required();
  report->add_option("--swing", swing_path, "swing.csv from evaluate");

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_schema) {
      std::cout << sonokin::config_schema_text();
      return 0;
    }
    const sonokin::RunConfig config = assemble_config(args);
    if (synth->parsed()) {
      sonokin::run_synth(config, args.out_dir);
    } else if (extract->parsed()) {
      sonokin::run_extract(config, manifest_path, args.out_dir);
    } else if (train->parsed()) {
      sonokin::run_train(config, manifest_path, args.out_dir);
    } else if (evaluate->parsed()) {
      sonokin::run_evaluate(config, manifest_path, args.out_dir);
    } else if (stats->parsed()) {
      sonokin::run_stats(config, report_path, args.out_dir);
    } else if (report->parsed()) {
      std::cout << sonokin::run_report(report_path, swing_path, args.out_dir);
    }
  } catch (const sonokin::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return error_exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
