#ifndef SONOKIN_REPORT_HPP
#define SONOKIN_REPORT_HPP

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sonokin/experiment.hpp"
#include "sonokin/stats.hpp"

namespace sonokin {

// Text tables shaped like the published per-task RMSE summaries: one block per
// target, tasks across the columns with intensity/temporal feature sets side by
// side, paradigms as rows, and significance superscripts from the per-task
// repeated-measures ANOVA (a/b: paradigm effect at p<0.05/p<0.01; c/d: temporal
// feature effect).

struct ReportTables {
  std::string text;
};

namespace detail {

inline std::string cell_text(const MeanSd& ms) {
  if (ms.count == 0) return "-";
  return format_fixed(ms.mean, 1) + " (" + format_fixed(ms.sd, 1) + ")";
}

inline std::string pad(const std::string& s, std::size_t width) {
  std::string out = s;
  while (out.size() < width) out.push_back(' ');
  return out;
}

}  // namespace detail

/// Published in-vivo reference means for side-by-side display; shown for
/// orientation only, never used as assertions.
struct ReferenceValues {
  double angle_task_invariant = 7.06;
  double angle_task_specific = 6.00;
  double velocity_task_invariant = 53.1;
  double velocity_task_specific = 51.8;
};

inline std::string render_rmse_table(const std::vector<RmseRow>& rows, TargetKind target,
                                     const std::string& stride_label = "all") {
  const auto subjects = subjects_in(rows);
  std::ostringstream out;
  out << "MEAN (SD) RMSE ("
      << (target == TargetKind::KneeAngle ? "DEG" : "DEG/S") << ") OF "
      << (target == TargetKind::KneeAngle ? "KNEE ANGLE" : "KNEE ANGULAR VELOCITY")
      << " ESTIMATION ACROSS AMBULATION TASKS AND LEARNING PARADIGMS";
  if (stride_label != "all") out << " [" << stride_label << " strides]";
  out << "\n";

  // per-task ANOVA markers
  std::array<std::string, 5> paradigm_marker{};
  std::array<std::string, 5> temporal_marker{};
  for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
    RmDesign design = build_rm_design(rows, target, static_cast<int>(t));
    if (!design.complete()) continue;
    AnovaTable table = rm_two_way_anova(design);
    if (!table.a.degenerate) {
      if (table.a.p < 0.01) paradigm_marker[t] = "^b";
      else if (table.a.p < 0.05) paradigm_marker[t] = "^a";
    }
    if (!table.b.degenerate) {
      if (table.b.p < 0.01) temporal_marker[t] = "^d";
      else if (table.b.p < 0.05) temporal_marker[t] = "^c";
    }
  }

  constexpr std::size_t kLabel = 16;
  constexpr std::size_t kCell = 14;
  out << detail::pad("Task:", kLabel);
  for (Task task : kAllTasks) out << detail::pad(task_name(task), 2 * kCell);
  out << "\n" << detail::pad("Feature Set:", kLabel);
  for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
    out << detail::pad("intensity", kCell)
        << detail::pad("temporal" + temporal_marker[t], kCell);
  }
  out << "\n";
  for (Paradigm paradigm : {Paradigm::TaskSpecific, Paradigm::TaskInvariant}) {
    out << detail::pad(paradigm == Paradigm::TaskSpecific ? "Task-Specific" : "Task-Invariant",
                       kLabel);
    for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
      for (FeatureSet fs : {FeatureSet::Intensity, FeatureSet::IntensityPlusTemporal}) {
        auto per_subject = per_subject_mean_rmse(rows, subjects, static_cast<int>(t), paradigm,
                                                 fs, target, stride_label);
        std::string cell = detail::cell_text(mean_sd(per_subject));
        if (paradigm == Paradigm::TaskInvariant && !paradigm_marker[t].empty())
          cell += paradigm_marker[t];
        out << detail::pad(cell, kCell);
      }
    }
    out << "\n";
  }
  out << "^a p<0.05, ^b p<0.01 paradigm effect; ^c p<0.05, ^d p<0.01 temporal-feature "
         "effect (per-task repeated-measures ANOVA across subjects)\n";
  return out.str();
}

inline std::string render_transient_table(const std::vector<RmseRow>& rows, TargetKind target) {
  const auto subjects = subjects_in(rows);
  std::ostringstream out;
  out << "MEAN (SD) RMSE (" << (target == TargetKind::KneeAngle ? "DEG" : "DEG/S") << ") OF "
      << (target == TargetKind::KneeAngle ? "KNEE ANGLE" : "KNEE ANGULAR VELOCITY")
      << " ESTIMATION DURING STEADY-STATE AND TRANSIENT STAIR AMBULATION\n";
  constexpr std::size_t kLabel = 16;
  constexpr std::size_t kCell = 14;
  const std::vector<std::string> labels = {"walk_to_stair", "steady_state", "stair_to_walk"};
  out << detail::pad("Task:", kLabel);
  for (Task task : {Task::StairAscent, Task::StairDescent})
    out << detail::pad(task_name(task), 6 * kCell);
  out << "\n" << detail::pad("Stride:", kLabel);
  for (int rep = 0; rep < 2; ++rep)
    for (const auto& l : labels) out << detail::pad(l, 2 * kCell);
  out << "\n" << detail::pad("Feature Set:", kLabel);
  for (int rep = 0; rep < 6; ++rep)
    out << detail::pad("intensity", kCell) << detail::pad("temporal", kCell);
  out << "\n";
  for (Paradigm paradigm : {Paradigm::TaskSpecific, Paradigm::TaskInvariant}) {
    out << detail::pad(paradigm == Paradigm::TaskSpecific ? "Task-Specific" : "Task-Invariant",
                       kLabel);
    for (Task task : {Task::StairAscent, Task::StairDescent}) {
      for (const auto& label : labels) {
        for (FeatureSet fs : {FeatureSet::Intensity, FeatureSet::IntensityPlusTemporal}) {
          auto per_subject = per_subject_mean_rmse(rows, subjects, static_cast<int>(task),
                                                   paradigm, fs, target, label);
          out << detail::pad(detail::cell_text(mean_sd(per_subject)), kCell);
        }
      }
    }
    out << "\n";
  }
  return out.str();
}

inline std::string render_overall_summary(const std::vector<RmseRow>& rows,
                                          const ReferenceValues& reference = {}) {
  const auto subjects = subjects_in(rows);
  std::ostringstream out;
  out << "OVERALL MEAN RMSE ACROSS TASKS AND SUBJECTS (temporal feature set)\n";
  for (TargetKind target : {TargetKind::KneeAngle, TargetKind::KneeVelocity}) {
    const char* unit = target == TargetKind::KneeAngle ? "deg" : "deg/s";
    auto ti = mean_sd(per_subject_mean_rmse(rows, subjects, -1, Paradigm::TaskInvariant,
                                            FeatureSet::IntensityPlusTemporal, target));
    auto ts = mean_sd(per_subject_mean_rmse(rows, subjects, -1, Paradigm::TaskSpecific,
                                            FeatureSet::IntensityPlusTemporal, target));
    out << "  " << target_name(target) << ": task-invariant "
        << format_fixed(ti.mean, 2) << " (" << format_fixed(ti.sd, 2) << ") " << unit
        << " vs task-specific " << format_fixed(ts.mean, 2) << " ("
        << format_fixed(ts.sd, 2) << ") " << unit << "\n";
    const double ref_ti = target == TargetKind::KneeAngle ? reference.angle_task_invariant
                                                          : reference.velocity_task_invariant;
    const double ref_ts = target == TargetKind::KneeAngle ? reference.angle_task_specific
                                                          : reference.velocity_task_specific;
    out << "    in-vivo reference (able-bodied cohort, for orientation only): "
        << format_fixed(ref_ti, 2) << " vs " << format_fixed(ref_ts, 2) << " " << unit << "\n";
  }
  return out.str();
}

inline std::string render_swing_table(const std::vector<SwingFlexionRow>& rows) {
  std::ostringstream out;
  out << "PREDICTED PEAK SWING FLEXION vs SMOOTH-STAIR-GAIT THRESHOLDS\n";
  for (const auto& r : rows) {
    out << "  " << detail::pad(task_name(r.task), 14)
        << detail::pad(paradigm_name(r.paradigm), 16) << "mean peak "
        << format_fixed(r.mean_peak_deg, 1) << " deg vs threshold "
        << format_fixed(r.threshold_deg, 1) << " deg over " << r.strides << " strides -> "
        << (r.pass ? "pass" : "fail") << "\n";
  }
  return out.str();
}

inline ReportTables render_full_report(const std::vector<RmseRow>& rows,
                                       const std::vector<SwingFlexionRow>& swing = {}) {
  ReportTables tables;
  tables.text += render_rmse_table(rows, TargetKind::KneeAngle);
  tables.text += "\n";
  tables.text += render_rmse_table(rows, TargetKind::KneeVelocity);
  tables.text += "\n";
  tables.text += render_transient_table(rows, TargetKind::KneeAngle);
  tables.text += "\n";
  tables.text += render_transient_table(rows, TargetKind::KneeVelocity);
  tables.text += "\n";
  tables.text += render_overall_summary(rows);
  if (!swing.empty()) {
    tables.text += "\n";
    tables.text += render_swing_table(swing);
  }
  return tables;
}

// ---------------------------------------------------------------------------
// Trajectory exports: (series,percent,mean,sd) CSV
// ---------------------------------------------------------------------------

struct TrajectorySeries {
  std::string name;
  std::vector<double> percent;
  std::vector<double> mean;
  std::vector<double> sd;
};

inline void append_band(std::vector<TrajectorySeries>& series, const std::string& name,
                        double percent_offset,
                        const std::vector<std::array<double, kGridPoints>>& curves) {
  if (curves.empty()) return;
  TrajectoryBand band = trajectory_band(curves);
  TrajectorySeries s;
  s.name = name;
  for (int g = 0; g < kGridPoints; ++g) {
    s.percent.push_back(percent_offset + g);
    s.mean.push_back(band.mean[g]);
    s.sd.push_back(band.sd[g]);
  }
  series.push_back(std::move(s));
}

/// Steady-state bands per task (0-100%) plus stair transition triplets on the
/// [-100%, 200%] axis: walk-to-stair, the steady stride that follows it, and
/// stair-to-walk. Missing members simply leave their segment out.
inline std::vector<TrajectorySeries> build_trajectory_series(
    const std::vector<StridePrediction>& predictions) {
  std::vector<TrajectorySeries> series;
  for (TargetKind target : {TargetKind::KneeAngle, TargetKind::KneeVelocity}) {
    for (Paradigm paradigm : {Paradigm::TaskSpecific, Paradigm::TaskInvariant}) {
      for (FeatureSet fs : {FeatureSet::Intensity, FeatureSet::IntensityPlusTemporal}) {
        const std::string base = std::string(target_name(target)) + "|" +
                                 paradigm_name(paradigm) + "|" + feature_set_name(fs);
        for (Task task : kAllTasks) {
          std::vector<std::array<double, kGridPoints>> measured, predicted;
          for (const auto& sp : predictions) {
            if (sp.task != task || sp.paradigm != paradigm || sp.feature_set != fs ||
                sp.target != target || sp.label != StrideLabel::SteadyState)
              continue;
            measured.push_back(sp.measured);
            predicted.push_back(sp.predicted);
          }
          append_band(series, base + "|" + task_name(task) + "|measured", 0.0, measured);
          append_band(series, base + "|" + task_name(task) + "|predicted", 0.0, predicted);
        }
        // transition triplets
        for (Task task : {Task::StairAscent, Task::StairDescent}) {
          struct Segment {
            StrideLabel label;
            double offset;
          };
          const Segment segments[] = {{StrideLabel::WalkToStair, -100.0},
                                      {StrideLabel::SteadyState, 0.0},
                                      {StrideLabel::StairToWalk, 100.0}};
          for (const auto& seg : segments) {
            std::vector<std::array<double, kGridPoints>> measured, predicted;
            for (const auto& sp : predictions) {
              if (sp.task != task || sp.paradigm != paradigm || sp.feature_set != fs ||
                  sp.target != target || sp.label != seg.label)
                continue;
              // the triplet's middle uses only the steady stride right after a
              // walk-to-stair stride
              if (seg.label == StrideLabel::SteadyState) {
                bool follows_transition = false;
                for (const auto& other : predictions) {
                  if (other.task == task && other.paradigm == paradigm &&
                      other.feature_set == fs && other.target == target &&
                      other.trial_ordinal == sp.trial_ordinal &&
                      other.label == StrideLabel::WalkToStair &&
                      other.stride_ordinal + 1 == sp.stride_ordinal) {
                    follows_transition = true;
                    break;
                  }
                }
                if (!follows_transition) continue;
              }
              measured.push_back(sp.measured);
              predicted.push_back(sp.predicted);
            }
            append_band(series, base + "|" + task_name(task) + "|transition|measured",
                        seg.offset, measured);
            append_band(series, base + "|" + task_name(task) + "|transition|predicted",
                        seg.offset, predicted);
          }
        }
      }
    }
  }
  return series;
}

inline void write_trajectory_csv(const std::string& path,
                                 const std::vector<TrajectorySeries>& series) {
  CsvWriter w(path);
  w.row({"series", "percent", "mean", "sd"});
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.percent.size(); ++i)
      w.row({s.name, format_double(s.percent[i], 6), format_double(s.mean[i], 10),
             format_double(s.sd[i], 10)});
  w.close();
}

}  // namespace sonokin

#endif  // SONOKIN_REPORT_HPP
