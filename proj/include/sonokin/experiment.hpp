#ifndef SONOKIN_EXPERIMENT_HPP
#define SONOKIN_EXPERIMENT_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sonokin/common.hpp"
#include "sonokin/csv.hpp"
#include "sonokin/features.hpp"
#include "sonokin/frames.hpp"
#include "sonokin/gait.hpp"
#include "sonokin/gpr.hpp"
#include "sonokin/stats.hpp"
#include "sonokin/synth.hpp"

namespace sonokin {

enum class Paradigm { TaskSpecific, TaskInvariant };

inline const char* paradigm_name(Paradigm p) {
  return p == Paradigm::TaskSpecific ? "task_specific" : "task_invariant";
}

enum class FeatureSet { Intensity, IntensityPlusTemporal };

inline const char* feature_set_name(FeatureSet f) {
  return f == FeatureSet::Intensity ? "intensity" : "temporal";
}

// ---------------------------------------------------------------------------
// Cross-validation folds over stride identifiers
// ---------------------------------------------------------------------------

struct CvFold {
  std::vector<int> held_out;  // stride ordinals within the task's stride list
};

/// Leave-N-consecutive-strides-out. Block size B = floor(fraction * count),
/// clamped to >= 1; a trailing block shorter than B/2 merges into its
/// predecessor, reproducing the 5-6-stride holdout behavior around 20%.
inline std::vector<CvFold> make_treadmill_folds(int stride_count, double holdout_fraction) {
  if (holdout_fraction <= 0.0 || holdout_fraction > 0.5)
    fail(ErrorCode::ConfigError, "holdout fraction must be in (0, 0.5]");
  if (stride_count < 5)
    fail(ErrorCode::TooFewStrides,
         "treadmill folds need >= 5 strides, got " + std::to_string(stride_count));
  const int block = std::max(1, static_cast<int>(std::floor(holdout_fraction * stride_count)));
  std::vector<CvFold> folds;
  for (int start = 0; start < stride_count; start += block) {
    CvFold fold;
    const int end = std::min(stride_count, start + block);
    for (int i = start; i < end; ++i) fold.held_out.push_back(i);
    folds.push_back(std::move(fold));
  }
  if (folds.size() > 1 &&
      static_cast<double>(folds.back().held_out.size()) < static_cast<double>(block) / 2.0) {
    auto tail = std::move(folds.back());
    folds.pop_back();
    folds.back().held_out.insert(folds.back().held_out.end(), tail.held_out.begin(),
                                 tail.held_out.end());
  }
  return folds;
}

/// Leave-one-trial-out: one fold per distinct trial, holding out all its strides.
/// `trial_of_stride[i]` is the trial ordinal of stride i.
inline std::vector<CvFold> make_stair_folds(const std::vector<int>& trial_of_stride) {
  std::vector<int> trials;
  for (int t : trial_of_stride)
    if (trials.empty() || trials.back() != t) trials.push_back(t);
  if (trials.size() < 2)
    fail(ErrorCode::TooFewTrials,
         "stair folds need >= 2 trials, got " + std::to_string(trials.size()));
  std::vector<CvFold> folds(trials.size());
  for (std::size_t i = 0; i < trial_of_stride.size(); ++i) {
    const auto it = std::find(trials.begin(), trials.end(), trial_of_stride[i]);
    folds[static_cast<std::size_t>(it - trials.begin())].held_out.push_back(
        static_cast<int>(i));
  }
  return folds;
}

inline double compute_rmse(const std::vector<double>& predicted,
                           const std::vector<double>& measured) {
  if (predicted.size() != measured.size())
    fail(ErrorCode::LengthMismatch, "predicted and measured lengths differ: " +
                                        std::to_string(predicted.size()) + " vs " +
                                        std::to_string(measured.size()));
  if (predicted.empty()) fail(ErrorCode::EmptyInput, "RMSE of empty sequences");
  double ss = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - measured[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(predicted.size()));
}

// ---------------------------------------------------------------------------
// Cohort loading and per-task datasets
// ---------------------------------------------------------------------------

struct TrialFeatures {
  std::vector<SyncSample> sync;
  std::vector<Stride> strides;            // per-trial segmentation
  FeatureMatrix intensity;                // rows for all frames
  FeatureMatrix with_temporal;            // rows for frames >= 1, [intensity, temporal]
  std::vector<std::int64_t> frame_times;  // per frame
};

/// Rows of one task joined across its trials for one feature set.
struct TaskDataset {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd angle_deg;
  Eigen::VectorXd velocity_deg_s;
  std::vector<std::int64_t> time_ms;
  std::vector<int> stride_of_row;  // ordinal into `strides`
  std::vector<int> trial_of_stride;
  std::vector<StrideLabel> stride_labels;
  std::vector<std::pair<std::int64_t, std::int64_t>> stride_spans;  // [start, end) ms
  // global time offset per trial keeps rows from different trials disjoint in time
};

struct SubjectTasks {
  std::string subject_id;
  std::array<std::optional<TaskDataset>, 5> by_task_intensity;
  std::array<std::optional<TaskDataset>, 5> by_task_temporal;

  const TaskDataset& dataset(Task task, FeatureSet fs) const {
    const auto& slot = fs == FeatureSet::Intensity
                           ? by_task_intensity[static_cast<std::size_t>(task)]
                           : by_task_temporal[static_cast<std::size_t>(task)];
    if (!slot) fail(ErrorCode::EmptyInput, std::string("missing data for ") + task_name(task));
    return *slot;
  }
};

struct Cohort {
  std::vector<SubjectTasks> subjects;
};

namespace detail {

inline TrialFeatures prepare_trial(const TrialRecord& trial, const FeatureConfig& fc) {
  TrialFeatures out;
  SyncResult sync = synchronize_kinematics(trial);
  out.sync = std::move(sync.samples);
  auto seg = segment_strides(trial, out.sync);
  out.strides = std::move(seg.strides);
  out.frame_times.reserve(trial.frames.size());
  for (const auto& f : trial.frames) out.frame_times.push_back(f.timestamp_ms);
  FeatureConfig intensity_cfg = fc;
  intensity_cfg.include_temporal = false;
  out.intensity = extract_intensity_features(trial.frames, intensity_cfg);
  FeatureMatrix temporal = compute_temporal_features(out.intensity, out.frame_times);
  FeatureConfig temporal_cfg = fc;
  temporal_cfg.include_temporal = true;
  out.with_temporal = assemble_feature_matrix(out.intensity, &temporal, temporal_cfg);
  return out;
}

/// Concatenate the trials of one task into a dataset for one feature set.
/// Rows outside any stride are excluded so fold units partition the samples.
inline TaskDataset build_task_dataset(const std::vector<TrialFeatures>& trials, FeatureSet fs) {
  TaskDataset ds;
  std::int64_t time_offset = 0;
  std::vector<std::pair<const Eigen::MatrixXd*, int>> row_sources;
  std::vector<double> angles, velocities;
  for (std::size_t tr = 0; tr < trials.size(); ++tr) {
    const TrialFeatures& t = trials[tr];
    const FeatureMatrix& fm = fs == FeatureSet::Intensity ? t.intensity : t.with_temporal;
    std::vector<int> feature_row_of_frame(t.frame_times.size(), -1);
    for (std::size_t r = 0; r < fm.frame_indices.size(); ++r)
      feature_row_of_frame[static_cast<std::size_t>(fm.frame_indices[r])] =
          static_cast<int>(r);
    for (const Stride& stride : t.strides) {
      const int stride_ordinal = static_cast<int>(ds.stride_labels.size());
      bool any = false;
      for (int row : stride.sample_rows) {
        const SyncSample& s = t.sync[static_cast<std::size_t>(row)];
        const int fr = feature_row_of_frame[static_cast<std::size_t>(s.frame_index)];
        if (fr < 0) continue;  // first frame lacks a temporal row
        row_sources.emplace_back(&fm.values, fr);
        angles.push_back(s.knee_angle_deg);
        velocities.push_back(s.knee_velocity_deg_s);
        ds.time_ms.push_back(time_offset + s.timestamp_ms);
        ds.stride_of_row.push_back(stride_ordinal);
        any = true;
      }
      if (!any) continue;  // unrepresented stride, keep ordinals dense
      ds.stride_labels.push_back(stride.label);
      ds.trial_of_stride.push_back(static_cast<int>(tr));
      ds.stride_spans.emplace_back(time_offset + stride.start_ms, time_offset + stride.end_ms);
    }
    if (!t.frame_times.empty()) time_offset += t.frame_times.back() + 10000;
  }
  ds.angle_deg = Eigen::Map<Eigen::VectorXd>(angles.data(), static_cast<Eigen::Index>(angles.size()));
  ds.velocity_deg_s =
      Eigen::Map<Eigen::VectorXd>(velocities.data(), static_cast<Eigen::Index>(velocities.size()));
  if (!row_sources.empty()) {
    ds.inputs.resize(static_cast<Eigen::Index>(row_sources.size()),
                     row_sources.front().first->cols());
    for (std::size_t i = 0; i < row_sources.size(); ++i)
      ds.inputs.row(static_cast<Eigen::Index>(i)) =
          row_sources[i].first->row(row_sources[i].second);
  }
  return ds;
}

}  // namespace detail

struct CohortLoadOptions {
  FeatureConfig features;
};

/// Load every trial in the manifest, extract both feature sets, segment strides.
inline Cohort load_cohort(const std::string& manifest_path, const CohortLoadOptions& options = {}) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(manifest_path).parent_path();
  auto entries = read_manifest(manifest_path);

  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path.string() : (base / path).string();
  };

  Cohort cohort;
  auto subject_slot = [&](const std::string& id) -> SubjectTasks& {
    for (auto& s : cohort.subjects)
      if (s.subject_id == id) return s;
    cohort.subjects.push_back({});
    cohort.subjects.back().subject_id = id;
    return cohort.subjects.back();
  };

  // group manifest rows: (subject, task) -> ordered trials
  struct Key {
    std::string subject;
    Task task;
  };
  std::vector<std::pair<Key, std::vector<const ManifestEntry*>>> groups;
  for (const auto& e : entries) {
    bool found = false;
    for (auto& [k, v] : groups) {
      if (k.subject == e.subject_id && k.task == e.task) {
        v.push_back(&e);
        found = true;
        break;
      }
    }
    if (!found) groups.push_back({{e.subject_id, e.task}, {&e}});
  }

  for (auto& [key, trial_entries] : groups) {
    std::sort(trial_entries.begin(), trial_entries.end(),
              [](const ManifestEntry* a, const ManifestEntry* b) {
                return a->trial_index < b->trial_index;
              });
    std::vector<TrialFeatures> trials;
    for (const ManifestEntry* e : trial_entries) {
      TrialMeta meta{e->subject_id, e->task, e->trial_index};
      TrialRecord trial =
          load_trial(resolve(e->frames_path), resolve(e->events_path),
                     resolve(e->kinematics_path), meta);
      trials.push_back(detail::prepare_trial(trial, options.features));
    }
    SubjectTasks& subject = subject_slot(key.subject);
    subject.by_task_intensity[static_cast<std::size_t>(key.task)] =
        detail::build_task_dataset(trials, FeatureSet::Intensity);
    subject.by_task_temporal[static_cast<std::size_t>(key.task)] =
        detail::build_task_dataset(trials, FeatureSet::IntensityPlusTemporal);
  }
  return cohort;
}

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  double holdout_fraction = 0.20;
  std::uint64_t seed = 0;
  int max_train = 2000;
  int hyperopt_max_rows = 128;   // LML search runs on a decimated subset this size
  GprOptimConfig optim{80, 1e-5, 2, 0, 0.7};
  bool refit_per_fold = true;    // false: reuse round-0 hyperparameters
  bool standardize_features = true;
  KernelFamily kernel_family = KernelFamily::RationalQuadratic;
  int workers = 0;               // 0 = hardware concurrency
};

struct RmseRow {
  std::string subject_id;
  Task task = Task::Level;
  Paradigm paradigm = Paradigm::TaskSpecific;
  FeatureSet feature_set = FeatureSet::Intensity;
  TargetKind target = TargetKind::KneeAngle;
  std::string stride_label;  // "all", "steady_state", "walk_to_stair", "stair_to_walk"
  int fold = 0;
  double rmse = 0.0;
  int samples = 0;
  std::string status = "ok";  // or the error text for a failed fold
};

/// Predicted + measured series for one held-out stride.
struct StridePrediction {
  std::string subject_id;
  Task task = Task::Level;
  Paradigm paradigm = Paradigm::TaskSpecific;
  FeatureSet feature_set = FeatureSet::Intensity;
  TargetKind target = TargetKind::KneeAngle;
  StrideLabel label = StrideLabel::SteadyState;
  int trial_ordinal = 0;
  int stride_ordinal = 0;  // within the task
  int fold = 0;
  std::array<double, kGridPoints> predicted{};
  std::array<double, kGridPoints> measured{};
};

struct ExperimentResult {
  std::vector<RmseRow> rows;
  std::vector<StridePrediction> stride_predictions;
};

namespace detail {

/// Keep every k-th row within each stride; k grows until the cap holds. When
/// the cap is below the stride count even one row per stride is too many, so
/// the remainder thins uniformly across rows instead.
inline std::vector<int> stride_preserving_decimation(const std::vector<int>& rows,
                                                     const std::vector<int>& stride_of_row,
                                                     int max_rows) {
  if (max_rows <= 0 || static_cast<int>(rows.size()) <= max_rows) return rows;
  int stride_count = 0;
  {
    int last_stride = -1;
    for (int row : rows) {
      if (stride_of_row[static_cast<std::size_t>(row)] != last_stride) {
        last_stride = stride_of_row[static_cast<std::size_t>(row)];
        ++stride_count;
      }
    }
  }
  if (stride_count <= max_rows) {
    for (int k = 2;; ++k) {
      std::vector<int> kept;
      kept.reserve(rows.size() / static_cast<std::size_t>(k) + 8);
      int last_stride = -1;
      int within = 0;
      for (int row : rows) {
        if (stride_of_row[static_cast<std::size_t>(row)] != last_stride) {
          last_stride = stride_of_row[static_cast<std::size_t>(row)];
          within = 0;
        }
        if (within % k == 0) kept.push_back(row);
        ++within;
      }
      if (static_cast<int>(kept.size()) <= max_rows) return kept;
    }
  }
  // uniform global thinning, still deterministic and time-ordered
  std::vector<int> kept;
  kept.reserve(static_cast<std::size_t>(max_rows) + 1);
  const double step =
      static_cast<double>(rows.size()) / static_cast<double>(max_rows);
  double at = 0.0;
  while (static_cast<std::size_t>(at) < rows.size() &&
         static_cast<int>(kept.size()) < max_rows) {
    kept.push_back(rows[static_cast<std::size_t>(at)]);
    at += step;
  }
  return kept;
}

struct FoldPlan {
  // per task: fold list; empty optional where the subject lacks the task
  std::array<std::vector<CvFold>, 5> folds;
  std::array<bool, 5> has_task{};
  int rounds = 0;  // max fold count across tasks
};

inline FoldPlan plan_folds(const SubjectTasks& subject, FeatureSet fs, double holdout_fraction) {
  FoldPlan plan;
  for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
    const auto& slot = fs == FeatureSet::Intensity ? subject.by_task_intensity[t]
                                                   : subject.by_task_temporal[t];
    if (!slot || slot->stride_labels.empty()) continue;
    plan.has_task[t] = true;
    const Task task = kAllTasks[t];
    if (is_stair_task(task)) {
      plan.folds[t] = make_stair_folds(slot->trial_of_stride);
    } else {
      plan.folds[t] =
          make_treadmill_folds(static_cast<int>(slot->stride_labels.size()), holdout_fraction);
    }
    plan.rounds = std::max(plan.rounds, static_cast<int>(plan.folds[t].size()));
  }
  return plan;
}

inline std::vector<int> rows_of_strides(const TaskDataset& ds, const std::vector<int>& strides,
                                        bool complement) {
  std::vector<char> held(ds.stride_labels.size(), 0);
  for (int s : strides) held[static_cast<std::size_t>(s)] = 1;
  std::vector<int> rows;
  for (std::size_t r = 0; r < ds.stride_of_row.size(); ++r) {
    const bool in = held[static_cast<std::size_t>(ds.stride_of_row[r])] != 0;
    if (in != complement) rows.push_back(static_cast<int>(r));
  }
  return rows;
}

struct CellContext {
  const SubjectTasks* subject = nullptr;
  Paradigm paradigm;
  FeatureSet feature_set;
  TargetKind target;
  const ExperimentConfig* config = nullptr;
};

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

inline Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

struct TrainedFold {
  Standardization scaler;
  GprModel model;
  KernelSpec spec;
};

/// Standardize on the training rows, search hyperparameters on a decimated
/// subset, fit on the (capped) training rows.
inline TrainedFold train_on_rows(const Eigen::MatrixXd& all_inputs,
                                 const Eigen::VectorXd& all_targets,
                                 const std::vector<int>& train_rows,
                                 const std::vector<int>& stride_of_row,
                                 const CellContext& ctx, std::uint64_t fold_seed,
                                 const KernelSpec* reuse_spec) {
  const ExperimentConfig& cfg = *ctx.config;
  std::vector<int> capped =
      stride_preserving_decimation(train_rows, stride_of_row, cfg.max_train);
  TrainedFold out;
  Eigen::MatrixXd train_x = gather_rows(all_inputs, capped);
  Eigen::VectorXd train_y = gather(all_targets, capped);
  if (cfg.standardize_features) {
    out.scaler = fit_standardization(train_x);
  } else {
    out.scaler.mean = Eigen::VectorXd::Zero(train_x.cols());
    out.scaler.sd = Eigen::VectorXd::Ones(train_x.cols());
  }
  Eigen::MatrixXd train_std = out.scaler.apply(train_x);

  if (reuse_spec != nullptr) {
    out.spec = *reuse_spec;
  } else {
    std::vector<int> opt_rows =
        stride_preserving_decimation(capped, stride_of_row, cfg.hyperopt_max_rows);
    Eigen::MatrixXd opt_x = out.scaler.apply(gather_rows(all_inputs, opt_rows));
    Eigen::VectorXd opt_y = gather(all_targets, opt_rows);
    GprOptimConfig optim = cfg.optim;
    optim.seed = fold_seed;
    out.spec = optimize_hyperparameters(opt_x, opt_y, cfg.kernel_family, optim);
  }
  out.model = fit_gpr(train_std, train_y, out.spec, ctx.target);
  return out;
}

}  // namespace detail

/// Per-label RMSE rows over one task's held-out predictions, fold by fold.
/// Stair tasks report the pooled "all" row plus one row per stride label that
/// actually occurs; treadmill tasks report "all" only.
inline void evaluate_transients(const TaskDataset& ds, const std::vector<int>& test_rows,
                                const std::vector<double>& predicted, Task task,
                                const detail::CellContext& ctx, int fold,
                                const Eigen::VectorXd& measured_all,
                                std::vector<RmseRow>& rows_out) {
  auto emit = [&](const std::string& label, const std::vector<double>& p,
                  const std::vector<double>& m) {
    if (p.empty()) return;
    RmseRow row;
    row.subject_id = ctx.subject->subject_id;
    row.task = task;
    row.paradigm = ctx.paradigm;
    row.feature_set = ctx.feature_set;
    row.target = ctx.target;
    row.stride_label = label;
    row.fold = fold;
    row.rmse = compute_rmse(p, m);
    row.samples = static_cast<int>(p.size());
    rows_out.push_back(std::move(row));
  };

  std::vector<double> all_p, all_m;
  all_p.reserve(test_rows.size());
  all_m.reserve(test_rows.size());
  std::array<std::vector<double>, 3> label_p, label_m;
  for (std::size_t i = 0; i < test_rows.size(); ++i) {
    const int r = test_rows[i];
    const double p = predicted[i];
    const double m = measured_all(r);
    all_p.push_back(p);
    all_m.push_back(m);
    if (is_stair_task(task)) {
      const StrideLabel l =
          ds.stride_labels[static_cast<std::size_t>(ds.stride_of_row[static_cast<std::size_t>(r)])];
      label_p[static_cast<std::size_t>(l)].push_back(p);
      label_m[static_cast<std::size_t>(l)].push_back(m);
    }
  }
  emit("all", all_p, all_m);
  if (is_stair_task(task)) {
    emit(stride_label_name(StrideLabel::SteadyState), label_p[0], label_m[0]);
    emit(stride_label_name(StrideLabel::WalkToStair), label_p[1], label_m[1]);
    emit(stride_label_name(StrideLabel::StairToWalk), label_p[2], label_m[2]);
  }
}

namespace detail {

inline void predict_and_record(const TaskDataset& ds, const std::vector<int>& test_rows,
                               const TrainedFold& trained, Task task, const CellContext& ctx,
                               int fold, ExperimentResult& result) {
  if (test_rows.empty()) return;
  Eigen::MatrixXd test_x = trained.scaler.apply(gather_rows(ds.inputs, test_rows));
  Eigen::VectorXd pred = predict_mean(trained.model, test_x);
  std::vector<double> predicted(pred.data(), pred.data() + pred.size());
  const Eigen::VectorXd& measured =
      ctx.target == TargetKind::KneeAngle ? ds.angle_deg : ds.velocity_deg_s;
  evaluate_transients(ds, test_rows, predicted, task, ctx, fold, measured, result.rows);

  // normalized per-stride series for trajectory exports and the swing check
  std::vector<int> strides_here;
  for (int r : test_rows) {
    const int s = ds.stride_of_row[static_cast<std::size_t>(r)];
    if (strides_here.empty() || strides_here.back() != s) strides_here.push_back(s);
  }
  std::size_t cursor = 0;
  for (int s : strides_here) {
    std::vector<TimedValue> pred_series, meas_series;
    while (cursor < test_rows.size() &&
           ds.stride_of_row[static_cast<std::size_t>(test_rows[cursor])] != s)
      ++cursor;
    std::size_t j = cursor;
    while (j < test_rows.size() &&
           ds.stride_of_row[static_cast<std::size_t>(test_rows[j])] == s) {
      const int r = test_rows[j];
      pred_series.push_back({ds.time_ms[static_cast<std::size_t>(r)], predicted[j]});
      meas_series.push_back({ds.time_ms[static_cast<std::size_t>(r)], measured(r)});
      ++j;
    }
    if (pred_series.size() < 2) continue;
    StridePrediction sp;
    sp.subject_id = ctx.subject->subject_id;
    sp.task = task;
    sp.paradigm = ctx.paradigm;
    sp.feature_set = ctx.feature_set;
    sp.target = ctx.target;
    sp.label = ds.stride_labels[static_cast<std::size_t>(s)];
    sp.trial_ordinal = ds.trial_of_stride[static_cast<std::size_t>(s)];
    sp.stride_ordinal = s;
    sp.fold = fold;
    const auto [start_ms, end_ms] = ds.stride_spans[static_cast<std::size_t>(s)];
    sp.predicted = resample_percent_cycle(start_ms, end_ms, pred_series);
    sp.measured = resample_percent_cycle(start_ms, end_ms, meas_series);
    result.stride_predictions.push_back(std::move(sp));
  }
}

inline void run_cell(const CellContext& ctx, ExperimentResult& result) {
  const ExperimentConfig& cfg = *ctx.config;
  const SubjectTasks& subject = *ctx.subject;
  const FoldPlan plan = plan_folds(subject, ctx.feature_set, cfg.holdout_fraction);

  auto record_failure = [&](Task task, int fold, const std::string& what) {
    RmseRow row;
    row.subject_id = subject.subject_id;
    row.task = task;
    row.paradigm = ctx.paradigm;
    row.feature_set = ctx.feature_set;
    row.target = ctx.target;
    row.stride_label = "all";
    row.fold = fold;
    row.rmse = std::numeric_limits<double>::quiet_NaN();
    row.samples = 0;
    row.status = what;
    result.rows.push_back(std::move(row));
  };

  if (ctx.paradigm == Paradigm::TaskSpecific) {
    for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
      if (!plan.has_task[t]) continue;
      const Task task = kAllTasks[t];
      const TaskDataset& ds = subject.dataset(task, ctx.feature_set);
      const Eigen::VectorXd& targets =
          ctx.target == TargetKind::KneeAngle ? ds.angle_deg : ds.velocity_deg_s;
      KernelSpec round0_spec;
      bool have_round0 = false;
      for (std::size_t f = 0; f < plan.folds[t].size(); ++f) {
        const CvFold& fold = plan.folds[t][f];
        std::vector<int> train_rows = rows_of_strides(ds, fold.held_out, true);
        std::vector<int> test_rows = rows_of_strides(ds, fold.held_out, false);
        try {
          const std::uint64_t fold_seed = Rng::derive_seed(
              cfg.seed, static_cast<std::uint64_t>(ctx.target) * 64 + t * 8 +
                            static_cast<std::uint64_t>(ctx.feature_set) * 4 + 1,
              f);
          const KernelSpec* reuse =
              (!cfg.refit_per_fold && have_round0) ? &round0_spec : nullptr;
          TrainedFold trained = train_on_rows(ds.inputs, targets, train_rows,
                                              ds.stride_of_row, ctx, fold_seed, reuse);
          if (!have_round0) {
            round0_spec = trained.spec;
            have_round0 = true;
          }
          predict_and_record(ds, test_rows, trained, task, ctx, static_cast<int>(f), result);
        } catch (const Error& e) {
          record_failure(task, static_cast<int>(f), e.what());
        }
      }
    }
    return;
  }

  // Task-invariant: round i pairs the i-th fold of every task, cycling shorter
  // lists for training exclusion; a task is evaluated only on rounds < its own
  // fold count, so every stride is scored exactly once.
  for (std::size_t t = 0; t < kAllTasks.size(); ++t)
    if (!plan.has_task[t])
      fail(ErrorCode::EmptyInput,
           std::string("task-invariant paradigm needs all five tasks; missing ") +
               task_name(kAllTasks[t]));

  KernelSpec round0_spec;
  bool have_round0 = false;
  for (int round = 0; round < plan.rounds; ++round) {
    // pooled training rows: union over tasks of the complement of each task's
    // fold for this round (cycled); per-task stride ids stay distinct so the
    // decimation in train_on_rows remains stride-preserving
    Eigen::Index total_rows = 0;
    struct TaskRows {
      const TaskDataset* ds;
      std::vector<int> train_rows;
    };
    std::vector<TaskRows> per_task;
    for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
      const TaskDataset& ds = subject.dataset(kAllTasks[t], ctx.feature_set);
      const std::size_t fold_index = static_cast<std::size_t>(round) % plan.folds[t].size();
      TaskRows rows{&ds, rows_of_strides(ds, plan.folds[t][fold_index].held_out, true)};
      total_rows += static_cast<Eigen::Index>(rows.train_rows.size());
      per_task.push_back(std::move(rows));
    }
    Eigen::MatrixXd pooled_x(total_rows, per_task.front().ds->inputs.cols());
    Eigen::VectorXd pooled_y(total_rows);
    std::vector<int> pooled_stride_of_row(static_cast<std::size_t>(total_rows));
    {
      Eigen::Index at = 0;
      int stride_base = 0;
      for (const TaskRows& tr : per_task) {
        const Eigen::VectorXd& targets =
            ctx.target == TargetKind::KneeAngle ? tr.ds->angle_deg : tr.ds->velocity_deg_s;
        for (int row : tr.train_rows) {
          pooled_x.row(at) = tr.ds->inputs.row(row);
          pooled_y(at) = targets(row);
          pooled_stride_of_row[static_cast<std::size_t>(at)] =
              stride_base + tr.ds->stride_of_row[static_cast<std::size_t>(row)];
          ++at;
        }
        stride_base += static_cast<int>(tr.ds->stride_labels.size());
      }
    }

    try {
      std::vector<int> all_rows(static_cast<std::size_t>(total_rows));
      for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = static_cast<int>(i);
      const std::uint64_t fold_seed = Rng::derive_seed(
          cfg.seed, static_cast<std::uint64_t>(ctx.target) * 64 + 40 +
                        static_cast<std::uint64_t>(ctx.feature_set) * 4 + 2,
          static_cast<std::uint64_t>(round));
      const KernelSpec* reuse = (!cfg.refit_per_fold && have_round0) ? &round0_spec : nullptr;
      TrainedFold trained = train_on_rows(pooled_x, pooled_y, all_rows, pooled_stride_of_row,
                                          ctx, fold_seed, reuse);
      if (!have_round0) {
        round0_spec = trained.spec;
        have_round0 = true;
      }
      for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
        const Task task = kAllTasks[t];
        if (static_cast<std::size_t>(round) >= plan.folds[t].size()) continue;
        const TaskDataset& ds = subject.dataset(task, ctx.feature_set);
        std::vector<int> test_rows =
            rows_of_strides(ds, plan.folds[t][static_cast<std::size_t>(round)].held_out, false);
        predict_and_record(ds, test_rows, trained, task, ctx, round, result);
      }
    } catch (const Error& e) {
      for (std::size_t t = 0; t < kAllTasks.size(); ++t)
        if (static_cast<std::size_t>(round) < plan.folds[t].size())
          record_failure(kAllTasks[t], round, e.what());
    }
  }
}

}  // namespace detail

/// All (subject x paradigm x feature-set x target) cells, parallel over cells.
/// Results are merged in a fixed order so output is independent of scheduling.
inline ExperimentResult run_full_experiment(const Cohort& cohort, const ExperimentConfig& config) {
  struct Unit {
    detail::CellContext ctx;
  };
  std::vector<Unit> units;
  for (const auto& subject : cohort.subjects)
    for (Paradigm paradigm : {Paradigm::TaskSpecific, Paradigm::TaskInvariant})
      for (FeatureSet fs : {FeatureSet::Intensity, FeatureSet::IntensityPlusTemporal})
        for (TargetKind target : {TargetKind::KneeAngle, TargetKind::KneeVelocity})
          units.push_back({{&subject, paradigm, fs, target, &config}});

  std::vector<ExperimentResult> partial(units.size());
  std::atomic<std::size_t> next{0};
  const unsigned workers =
      config.workers > 0 ? static_cast<unsigned>(config.workers)
                         : std::max(1u, std::thread::hardware_concurrency());
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= units.size()) return;
      detail::run_cell(units[i].ctx, partial[i]);
    }
  };
  if (workers <= 1 || units.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentResult merged;
  for (auto& p : partial) {
    merged.rows.insert(merged.rows.end(), p.rows.begin(), p.rows.end());
    merged.stride_predictions.insert(merged.stride_predictions.end(),
                                     p.stride_predictions.begin(),
                                     p.stride_predictions.end());
  }
  return merged;
}

/// Single-cell entry point matching the per-paradigm operation.
inline ExperimentResult run_experiment(const SubjectTasks& subject, Paradigm paradigm,
                                       FeatureSet feature_set, TargetKind target,
                                       const ExperimentConfig& config) {
  ExperimentResult result;
  detail::CellContext ctx{&subject, paradigm, feature_set, target, &config};
  detail::run_cell(ctx, result);
  return result;
}

// ---------------------------------------------------------------------------
// Swing-flexion check
// ---------------------------------------------------------------------------

struct SwingFlexionRow {
  Task task = Task::StairAscent;
  Paradigm paradigm = Paradigm::TaskSpecific;
  double mean_peak_deg = 0.0;
  double threshold_deg = 0.0;
  int strides = 0;
  bool pass = false;
};

constexpr double kSwingThresholdAscentDeg = 71.9;
constexpr double kSwingThresholdDescentDeg = 70.5;

/// Peak predicted angle over the swing half (50-100%) of steady-state stair
/// strides; the mean across strides must reach the published gait thresholds.
inline std::vector<SwingFlexionRow> swing_flexion_check(
    const std::vector<StridePrediction>& predictions, FeatureSet feature_set) {
  std::vector<SwingFlexionRow> report;
  for (Task task : {Task::StairAscent, Task::StairDescent}) {
    for (Paradigm paradigm : {Paradigm::TaskSpecific, Paradigm::TaskInvariant}) {
      double sum_peak = 0.0;
      int count = 0;
      for (const auto& sp : predictions) {
        if (sp.task != task || sp.paradigm != paradigm || sp.feature_set != feature_set ||
            sp.target != TargetKind::KneeAngle || sp.label != StrideLabel::SteadyState)
          continue;
        double peak = -1e300;
        for (int g = 50; g < kGridPoints; ++g) peak = std::max(peak, sp.predicted[g]);
        sum_peak += peak;
        ++count;
      }
      if (count == 0) fail(ErrorCode::EmptyInput, "no predicted stair strides for swing check");
      SwingFlexionRow row;
      row.task = task;
      row.paradigm = paradigm;
      row.mean_peak_deg = sum_peak / count;
      row.threshold_deg =
          task == Task::StairAscent ? kSwingThresholdAscentDeg : kSwingThresholdDescentDeg;
      row.strides = count;
      row.pass = row.mean_peak_deg >= row.threshold_deg;
      report.push_back(row);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report CSV + aggregation helpers
// ---------------------------------------------------------------------------

inline void write_report_csv(const std::string& path, const std::vector<RmseRow>& rows) {
  CsvWriter w(path);
  w.row({"subject", "task", "paradigm", "feature_set", "target", "stride_label", "fold",
         "rmse"});
  for (const auto& r : rows)
    w.row({r.subject_id, task_name(r.task), paradigm_name(r.paradigm),
           feature_set_name(r.feature_set), target_name(r.target), r.stride_label,
           std::to_string(r.fold), std::isfinite(r.rmse) ? format_double(r.rmse, 10) : "nan"});
  w.close();
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  int count = 0;
};

inline MeanSd mean_sd(const std::vector<double>& values) {
  MeanSd out;
  out.count = static_cast<int>(values.size());
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  for (double v : values) out.sd += (v - out.mean) * (v - out.mean);
  out.sd = std::sqrt(out.sd / static_cast<double>(values.size()));
  return out;
}

/// Mean fold-RMSE per subject for one (task?, paradigm, feature-set, target,
/// label) selection; task < 0 pools every task.
inline std::vector<double> per_subject_mean_rmse(const std::vector<RmseRow>& rows,
                                                 const std::vector<std::string>& subjects,
                                                 int task, Paradigm paradigm,
                                                 FeatureSet feature_set, TargetKind target,
                                                 const std::string& label = "all") {
  std::vector<double> result;
  for (const auto& subject : subjects) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows) {
      if (r.subject_id != subject || r.paradigm != paradigm || r.feature_set != feature_set ||
          r.target != target || r.stride_label != label || !std::isfinite(r.rmse))
        continue;
      if (task >= 0 && static_cast<int>(r.task) != task) continue;
      sum += r.rmse;
      ++n;
    }
    if (n > 0) result.push_back(sum / n);
  }
  return result;
}

inline std::vector<std::string> subjects_in(const std::vector<RmseRow>& rows) {
  std::vector<std::string> subjects;
  for (const auto& r : rows)
    if (std::find(subjects.begin(), subjects.end(), r.subject_id) == subjects.end())
      subjects.push_back(r.subject_id);
  std::sort(subjects.begin(), subjects.end());
  return subjects;
}

/// 2x2 design (paradigm x feature set) of per-subject mean RMSE, the input to
/// the repeated-measures ANOVA.
inline RmDesign build_rm_design(const std::vector<RmseRow>& rows, TargetKind target,
                                int task = -1) {
  const auto subjects = subjects_in(rows);
  RmDesign design = RmDesign::create(static_cast<int>(subjects.size()), 2, 2);
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const Paradigm paradigm = a == 0 ? Paradigm::TaskSpecific : Paradigm::TaskInvariant;
        const FeatureSet fs = b == 0 ? FeatureSet::Intensity : FeatureSet::IntensityPlusTemporal;
        auto v = per_subject_mean_rmse(rows, {subjects[s]}, task, paradigm, fs, target);
        if (!v.empty()) design.at(static_cast<int>(s), a, b) = v.front();
      }
    }
  }
  return design;
}

}  // namespace sonokin

#endif  // SONOKIN_EXPERIMENT_HPP
