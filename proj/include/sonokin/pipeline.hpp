#ifndef SONOKIN_PIPELINE_HPP
#define SONOKIN_PIPELINE_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "sonokin/config.hpp"
#include "sonokin/experiment.hpp"
#include "sonokin/report.hpp"
#include "sonokin/stats.hpp"
#include "sonokin/synth.hpp"

namespace sonokin {

// Subcommand bodies shared by the CLI and the test suites. Each writes its
// artifacts under out_dir and touches nothing else.

// ---------------------------------------------------------------------------
// Model bundles: feature scaler + fitted model in one checksummed blob
// ---------------------------------------------------------------------------

constexpr std::uint16_t kBundleFormatVersion = 1;

struct ModelBundle {
  Standardization scaler;
  GprModel model;
};

inline void save_model_bundle(const std::string& path, const ModelBundle& bundle) {
  std::vector<std::uint8_t> payload;
  put_u32(payload, static_cast<std::uint32_t>(bundle.scaler.mean.size()));
  for (Eigen::Index i = 0; i < bundle.scaler.mean.size(); ++i)
    put_f64(payload, bundle.scaler.mean(i));
  for (Eigen::Index i = 0; i < bundle.scaler.sd.size(); ++i)
    put_f64(payload, bundle.scaler.sd(i));
  auto model_blob = serialize_model(bundle.model);
  put_u64(payload, model_blob.size());
  payload.insert(payload.end(), model_blob.begin(), model_blob.end());

  std::vector<std::uint8_t> blob;
  blob.insert(blob.end(), {'U', 'S', 'M', 'B'});
  put_u16(blob, kBundleFormatVersion);
  put_u32(blob, crc32(payload.data(), payload.size()));
  put_u64(blob, payload.size());
  blob.insert(blob.end(), payload.begin(), payload.end());
  write_file_bytes(path, blob);
}

inline ModelBundle load_model_bundle(const std::string& path) {
  auto blob = read_file_bytes(path);
  ByteReader r(blob.data(), blob.size());
  if (r.remaining() < 4 || std::memcmp(r.bytes(4), "USMB", 4) != 0)
    fail(ErrorCode::MagicMismatch, path + ": bad bundle magic, expected USMB");
  if (r.u16() != kBundleFormatVersion)
    fail(ErrorCode::FormatVersionMismatch, path + ": unsupported bundle version");
  const std::uint32_t expected_crc = r.u32();
  const std::uint64_t payload_size = r.u64();
  if (r.remaining() != payload_size)
    fail(ErrorCode::TruncatedFrameData, path + ": bundle payload size mismatch");
  const std::uint8_t* payload = r.bytes(payload_size);
  if (crc32(payload, payload_size) != expected_crc)
    fail(ErrorCode::ChecksumMismatch, path + ": bundle checksum mismatch");

  ByteReader p(payload, payload_size);
  ModelBundle bundle;
  const std::uint32_t dims = p.u32();
  bundle.scaler.mean.resize(dims);
  bundle.scaler.sd.resize(dims);
  for (std::uint32_t i = 0; i < dims; ++i) bundle.scaler.mean(i) = p.f64();
  for (std::uint32_t i = 0; i < dims; ++i) bundle.scaler.sd(i) = p.f64();
  const std::uint64_t model_size = p.u64();
  const std::uint8_t* model_bytes = p.bytes(model_size);
  bundle.model = deserialize_model(
      std::vector<std::uint8_t>(model_bytes, model_bytes + model_size));
  return bundle;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

namespace detail {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create " + dir + ": " + ec.message());
}

}  // namespace detail

inline void run_synth(const RunConfig& config, const std::string& out_dir) {
  detail::ensure_dir(out_dir);
  generate_cohort(config.synth, out_dir);
}

/// Feature CSVs per manifest trial, both feature sets.
inline void run_extract(const RunConfig& config, const std::string& manifest_path,
                        const std::string& out_dir) {
  namespace fs = std::filesystem;
  detail::ensure_dir(out_dir);
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path.string() : (base / path).string();
  };
  for (const auto& e : read_manifest(manifest_path)) {
    TrialMeta meta{e.subject_id, e.task, e.trial_index};
    TrialRecord trial = load_trial(resolve(e.frames_path), resolve(e.events_path),
                                   resolve(e.kinematics_path), meta);
    auto prepared = detail::prepare_trial(trial, config.features);
    const std::string stem = out_dir + "/" + e.subject_id + "_" + task_name(e.task) + "_t" +
                             std::to_string(e.trial_index);
    write_feature_csv(stem + "_intensity.csv", prepared.intensity);
    write_feature_csv(stem + "_temporal.csv", prepared.with_temporal);
  }
}

/// Fit one model per (subject, scope, feature set, target) on all stride rows
/// and serialize it; task-specific scope is each task, task-invariant is the
/// pooled five-task set.
inline void run_train(const RunConfig& config, const std::string& manifest_path,
                      const std::string& out_dir) {
  detail::ensure_dir(out_dir);
  CohortLoadOptions load_options;
  load_options.features = config.features;
  Cohort cohort = load_cohort(manifest_path, load_options);
  ExperimentConfig ec = config.experiment;
  ec.standardize_features = config.features.standardize;

  for (const auto& subject : cohort.subjects) {
    for (FeatureSet fs : {FeatureSet::Intensity, FeatureSet::IntensityPlusTemporal}) {
      for (TargetKind target : {TargetKind::KneeAngle, TargetKind::KneeVelocity}) {
        detail::CellContext ctx{&subject, Paradigm::TaskSpecific, fs, target, &ec};
        // task-specific models
        for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
          const Task task = kAllTasks[t];
          const auto& slot = fs == FeatureSet::Intensity
                                 ? subject.by_task_intensity[t]
                                 : subject.by_task_temporal[t];
          if (!slot || slot->stride_labels.empty()) continue;
          const TaskDataset& ds = *slot;
          std::vector<int> all_rows(ds.stride_of_row.size());
          for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = static_cast<int>(i);
          const Eigen::VectorXd& targets =
              target == TargetKind::KneeAngle ? ds.angle_deg : ds.velocity_deg_s;
          auto trained = detail::train_on_rows(
              ds.inputs, targets, all_rows, ds.stride_of_row, ctx,
              Rng::derive_seed(ec.seed, 0x7472, t, static_cast<std::uint64_t>(target)),
              nullptr);
          save_model_bundle(out_dir + "/" + subject.subject_id + "_" + task_name(task) + "_" +
                                feature_set_name(fs) + "_" + target_name(target) + ".usmb",
                            {trained.scaler, trained.model});
        }
        // task-invariant pooled model
        Eigen::Index total = 0;
        for (std::size_t t = 0; t < kAllTasks.size(); ++t)
          total += subject.dataset(kAllTasks[t], fs).inputs.rows();
        Eigen::MatrixXd pooled_x(total, subject.dataset(Task::Level, fs).inputs.cols());
        Eigen::VectorXd pooled_y(total);
        std::vector<int> pooled_strides(static_cast<std::size_t>(total));
        Eigen::Index at = 0;
        int stride_base = 0;
        for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
          const TaskDataset& ds = subject.dataset(kAllTasks[t], fs);
          const Eigen::VectorXd& targets =
              target == TargetKind::KneeAngle ? ds.angle_deg : ds.velocity_deg_s;
          pooled_x.middleRows(at, ds.inputs.rows()) = ds.inputs;
          pooled_y.segment(at, targets.size()) = targets;
          for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i)
            pooled_strides[static_cast<std::size_t>(at + i)] =
                stride_base + ds.stride_of_row[static_cast<std::size_t>(i)];
          stride_base += static_cast<int>(ds.stride_labels.size());
          at += ds.inputs.rows();
        }
        std::vector<int> all_rows(static_cast<std::size_t>(total));
        for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = static_cast<int>(i);
        detail::CellContext pooled_ctx{&subject, Paradigm::TaskInvariant, fs, target, &ec};
        auto trained = detail::train_on_rows(
            pooled_x, pooled_y, all_rows, pooled_strides, pooled_ctx,
            Rng::derive_seed(ec.seed, 0x7473, 9, static_cast<std::uint64_t>(target)), nullptr);
        save_model_bundle(out_dir + "/" + subject.subject_id + "_all_" + feature_set_name(fs) +
                              "_" + target_name(target) + ".usmb",
                          {trained.scaler, trained.model});
      }
    }
  }
}

inline void write_swing_csv(const std::string& path, const std::vector<SwingFlexionRow>& rows) {
  CsvWriter w(path);
  w.row({"task", "paradigm", "mean_peak_deg", "threshold_deg", "strides", "pass"});
  for (const auto& r : rows)
    w.row({task_name(r.task), paradigm_name(r.paradigm), format_double(r.mean_peak_deg, 10),
           format_double(r.threshold_deg, 10), std::to_string(r.strides),
           r.pass ? "1" : "0"});
  w.close();
}

struct EvaluateArtifacts {
  ExperimentResult result;
  std::vector<SwingFlexionRow> swing;
};

/// Full cross-validated evaluation: report.csv, trajectories.csv, swing.csv.
inline EvaluateArtifacts run_evaluate(const RunConfig& config, const std::string& manifest_path,
                                      const std::string& out_dir) {
  detail::ensure_dir(out_dir);
  CohortLoadOptions load_options;
  load_options.features = config.features;
  Cohort cohort = load_cohort(manifest_path, load_options);
  ExperimentConfig ec = config.experiment;
  ec.standardize_features = config.features.standardize;
  EvaluateArtifacts artifacts;
  artifacts.result = run_full_experiment(cohort, ec);
  artifacts.swing =
      swing_flexion_check(artifacts.result.stride_predictions, FeatureSet::IntensityPlusTemporal);
  write_report_csv(out_dir + "/report.csv", artifacts.result.rows);
  write_trajectory_csv(out_dir + "/trajectories.csv",
                       build_trajectory_series(artifacts.result.stride_predictions));
  write_swing_csv(out_dir + "/swing.csv", artifacts.swing);
  return artifacts;
}

inline std::vector<RmseRow> read_report_csv(const std::string& path) {
  auto table = read_csv(path);
  const int c_subj = table.column("subject");
  const int c_task = table.column("task");
  const int c_par = table.column("paradigm");
  const int c_fs = table.column("feature_set");
  const int c_tgt = table.column("target");
  const int c_lbl = table.column("stride_label");
  const int c_fold = table.column("fold");
  const int c_rmse = table.column("rmse");
  if (c_subj < 0 || c_task < 0 || c_par < 0 || c_fs < 0 || c_tgt < 0 || c_lbl < 0 ||
      c_fold < 0 || c_rmse < 0)
    fail(ErrorCode::MalformedRow, path + ": bad report header");
  std::vector<RmseRow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    std::string where = path + ":" + std::to_string(table.line_numbers[i]);
    RmseRow r;
    r.subject_id = row[c_subj];
    r.task = task_from_name(row[c_task]);
    r.paradigm =
        row[c_par] == "task_specific" ? Paradigm::TaskSpecific : Paradigm::TaskInvariant;
    r.feature_set =
        row[c_fs] == "intensity" ? FeatureSet::Intensity : FeatureSet::IntensityPlusTemporal;
    r.target = row[c_tgt] == "knee_angle" ? TargetKind::KneeAngle : TargetKind::KneeVelocity;
    r.stride_label = row[c_lbl];
    r.fold = static_cast<int>(parse_int(row[c_fold], where));
    r.rmse = row[c_rmse] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                  : parse_double(row[c_rmse], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// ANOVA + posthoc CSVs per target from an evaluation report.
inline void run_stats(const RunConfig& config, const std::string& report_path,
                      const std::string& out_dir) {
  detail::ensure_dir(out_dir);
  auto rows = read_report_csv(report_path);
  const auto subjects = subjects_in(rows);
  for (TargetKind target : {TargetKind::KneeAngle, TargetKind::KneeVelocity}) {
    RmDesign design = build_rm_design(rows, target);
    const std::string stem = out_dir + "/" + target_name(target);
    // the design itself, in the documented stats input format
    {
      CsvWriter w(stem + "_design.csv");
      w.row({"subject", "paradigm", "feature_set", "value"});
      for (std::size_t s = 0; s < subjects.size(); ++s)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            w.row({subjects[s],
                   paradigm_name(a == 0 ? Paradigm::TaskSpecific : Paradigm::TaskInvariant),
                   feature_set_name(b == 0 ? FeatureSet::Intensity
                                           : FeatureSet::IntensityPlusTemporal),
                   format_double(design.at(static_cast<int>(s), a, b), 12)});
      w.close();
    }
    AnovaTable table = rm_two_way_anova(design);
    write_anova_csv(stem + "_anova.csv", table);
    auto posthoc = bonferroni_posthoc(design, all_condition_pairs(design),
                                      config.stats_family_size, config.stats_alpha);
    write_posthoc_csv(stem + "_posthoc.csv", posthoc,
                      {"task_specific", "task_invariant"}, {"intensity", "temporal"});
  }
}

/// Render the text tables from a report CSV (plus swing rows when available).
inline std::string run_report(const std::string& report_path, const std::string& swing_path,
                              const std::string& out_dir) {
  detail::ensure_dir(out_dir);
  auto rows = read_report_csv(report_path);
  std::vector<SwingFlexionRow> swing;
  if (!swing_path.empty() && std::filesystem::exists(swing_path)) {
    auto table = read_csv(swing_path);
    for (const auto& row : table.rows) {
      SwingFlexionRow r;
      r.task = task_from_name(row[0]);
      r.paradigm = row[1] == "task_specific" ? Paradigm::TaskSpecific : Paradigm::TaskInvariant;
      r.mean_peak_deg = parse_double(row[2], swing_path);
      r.threshold_deg = parse_double(row[3], swing_path);
      r.strides = static_cast<int>(parse_int(row[4], swing_path));
      r.pass = row[5] == "1";
      swing.push_back(r);
    }
  }
  ReportTables tables = render_full_report(rows, swing);
  std::ofstream out(out_dir + "/report.txt");
  if (!out) fail(ErrorCode::IoFailure, "cannot write report.txt under " + out_dir);
  out << tables.text;
  out.close();
  return tables.text;
}

}  // namespace sonokin

#endif  // SONOKIN_PIPELINE_HPP
